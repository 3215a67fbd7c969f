#include <cmath>
#include <complex>

#include "conicscat/wavefront_probe.hpp"
#include "doctest.h"

using namespace conicscat;
using cplx = std::complex<double>;

namespace {

std::vector<EVec> ring(int count) {
  std::vector<EVec> dirs;
  for (int i = 0; i < count; ++i) {
    const double a = 0.3 + 0.05 * i;
    EVec w(3);
    w << std::sin(a), 0.0, std::cos(a);
    dirs.push_back(w);
  }
  return dirs;
}

template <class F>
AngularSamples sample(F&& f, double r_max, int n = 3) {
  AngularSamples u;
  u.n = n;
  const int count = 4000;
  for (int j = 0; j < count; ++j)
    u.radii.push_back(std::exp(std::log(0.5) + (std::log(r_max) - std::log(0.5)) * j / (count - 1)));
  u.directions = ring(5);
  u.values.resize(5, count);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < count; ++j) u.values(i, j) = f(u.directions[i], u.radii[j]);
  return u;
}

}  // namespace

TEST_CASE("outgoing oscillation is detected at tau = -lambda") {
  const double lambda = 1.0;
  auto u = sample([&](const EVec& w, double r) {
    return std::polar(1.0 + 0.3 * w(2), lambda * r) / (r * (1.0 + 1.0 / (r * r)));
  }, 80.0);
  const auto res = wavefront_probe(u, lambda);
  CHECK_FALSE(res.resolution_warning);
  REQUIRE(!res.detections.empty());
  for (const auto& d : res.detections) {
    CHECK(d.tau == doctest::Approx(-lambda).epsilon(0.02));
    CHECK(d.mu <= 0.02 * lambda);
  }
}

TEST_CASE("rapidly decaying functions give no detections") {
  auto u = sample([](const EVec&, double r) { return cplx(std::exp(-r * r)); }, 80.0);
  CHECK(wavefront_probe(u, 1.0).detections.empty());
}

TEST_CASE("both exponentials give both signs") {
  const double lambda = 2.0;
  auto u = sample([&](const EVec&, double r) {
    return (std::polar(1.0, lambda * r) + 0.5 * std::polar(1.0, -lambda * r)) / r;
  }, 60.0);
  const auto res = wavefront_probe(u, lambda);
  bool plus = false, minus = false;
  for (const auto& d : res.detections) {
    if (std::abs(d.tau + lambda) <= 0.02 * lambda) minus = true;
    else if (std::abs(d.tau - lambda) <= 0.02 * lambda) plus = true;
    else FAIL("unexpected detection at tau = " << d.tau);
  }
  CHECK(plus);
  CHECK(minus);
}

TEST_CASE("angular phase gradient gives mu") {
  // phase r * (lambda + c*a) along the ring angle a: mu = c
  const double lambda = 1.0, c = 0.2;
  auto u = sample([&](const EVec& w, double r) {
    const double a = std::atan2(w(0), w(2));
    return std::polar(1.0, r * (lambda + c * a)) / r;
  }, 80.0);
  const auto res = wavefront_probe(u, lambda);
  REQUIRE(!res.detections.empty());
  for (const auto& d : res.detections) CHECK(d.mu == doctest::Approx(c).epsilon(0.05));
}

TEST_CASE("short grids raise a resolution warning") {
  auto u = sample([](const EVec&, double r) { return std::polar(1.0, r) / r; }, 20.0);
  CHECK(wavefront_probe(u, 1.0).resolution_warning);
}
