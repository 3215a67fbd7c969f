#include <cmath>
#include <complex>
#include <sstream>

#include <boost/math/special_functions/bessel.hpp>

#include "conicscat/radial_scattering.hpp"
#include "doctest.h"

using namespace conicscat;

namespace {

const cplx I{0.0, 1.0};

// difference of two phase shifts modulo pi
double shift_gap(double a, double b) { return std::abs(std::remainder(a - b, M_PI)); }

cplx gaussian(double r) { return std::exp(-0.5 * r * r); }

// composite Simpson on [a, b]
template <class F>
cplx simpson(F&& f, double a, double b, int panels = 4000) {
  const double h = (b - a) / panels;
  cplx acc = f(a) + f(b);
  for (int k = 1; k < panels; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return acc * h / 3.0;
}

std::vector<RadialPotential> families() {
  return {RadialPotential::free(), RadialPotential::bump(2.0, 1.5),
          RadialPotential::inverse_square(1.0, 1.0), RadialPotential::exponential(3.0)};
}

}  // namespace

TEST_CASE("Riccati-Hankel branches reduce to elementary functions at half-integer order") {
  for (double z : {0.7, 3.0, 25.0}) {
    CHECK(std::abs(riccati_hankel(1, 0.5, z) - std::polar(1.0, z)) < 1e-13);
    CHECK(std::abs(riccati_hankel(-1, 0.5, z) - std::polar(1.0, -z)) < 1e-13);
    const cplx h32 = std::polar(1.0, z) * (1.0 + I / z);
    CHECK(std::abs(riccati_hankel(1, 1.5, z) - h32) < 1e-13);
    const double e = 1e-5;
    const cplx fd = (riccati_hankel(1, 2.3, z + e) - riccati_hankel(1, 2.3, z - e)) / (2 * e);
    CHECK(std::abs(riccati_hankel(1, 2.3, z, true) - fd) < 1e-8);
  }
}

TEST_CASE("free scattering eigenvalues follow i^(1-n) (-1)^l") {
  CHECK(std::abs(free_scattering_eigenvalue(3, 0) - cplx(-1, 0)) < 1e-15);
  CHECK(std::abs(free_scattering_eigenvalue(3, 1) - cplx(1, 0)) < 1e-15);
  CHECK(std::abs(free_scattering_eigenvalue(2, 0) - cplx(0, -1)) < 1e-15);
  for (int n : {2, 3})
    for (double lambda : {0.5, 1.0, 2.0})
      for (int l = 0; l <= 20; ++l) {
        const auto e = smatrix_entry({n, l, lambda, RadialPotential::free()});
        CHECK(std::abs(e.s - free_scattering_eigenvalue(n, l)) < 1e-6);
        CHECK(std::abs(e.phase_shift) < 1e-6);
        CHECK(e.residual < 1e-7);
      }
}

TEST_CASE("free regular solutions are Bessel functions") {
  const double lambda = 1.3;
  ModeSolver s3({3, 0, lambda, RadialPotential::free()});
  const auto& reg = s3.regular();
  double worst = 0.0;
  for (std::size_t j = 0; j < reg.r.size(); j += 7)
    worst = std::max(worst, std::abs(reg.w[j] - std::sin(lambda * reg.r[j]) / lambda));
  CHECK(worst < 1e-9);
  CHECK(std::abs(reg.a_plus / reg.a_minus + 1.0) < 1e-10);
  CHECK(std::abs(std::abs(reg.a_plus) - std::abs(reg.a_minus)) < 1e-10);

  ModeSolver s2({2, 2, lambda, RadialPotential::free()});
  const auto& r2 = s2.regular();
  const double k = r2.w[r2.r.size() / 2].real() /
                   (std::sqrt(r2.r[r2.r.size() / 2]) *
                    boost::math::cyl_bessel_j(2, lambda * r2.r[r2.r.size() / 2]));
  worst = 0.0;
  for (std::size_t j = 0; j < r2.r.size(); j += 11) {
    const double oracle = k * std::sqrt(r2.r[j]) * boost::math::cyl_bessel_j(2, lambda * r2.r[j]);
    worst = std::max(worst, std::abs(r2.w[j] - oracle));
  }
  double scale = 0.0;
  for (const auto& v : r2.w) scale = std::max(scale, std::abs(v));
  CHECK(worst / scale < 1e-9);
}

TEST_CASE("inverse-square phase shifts match the Bessel-order formula") {
  for (int n : {2, 3})
    for (int l = 0; l <= 10; ++l) {
      const auto e = smatrix_entry({n, l, 1.0, RadialPotential::inverse_square(1.0, 1e-6)});
      CHECK(shift_gap(e.phase_shift, inverse_square_phase_shift(n, l, 1.0)) < 1e-6);
    }
  // a finite cutoff only perturbs the shift, less so as it shrinks
  double previous = 1.0;
  for (double cut : {0.4, 0.2, 0.1, 0.05}) {
    const auto e = smatrix_entry({3, 0, 1.0, RadialPotential::inverse_square(1.0, cut)});
    const double gap = shift_gap(e.phase_shift, inverse_square_phase_shift(3, 0, 1.0));
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("scattering eigenvalues are unimodular for every family") {
  for (const auto& v : families())
    for (double lambda : {0.5, 1.0, 2.0})
      for (int l = 0; l <= 20; l += 4) {
        const cplx s = scattering_eigenvalue({3, l, lambda, v});
        CHECK(std::abs(std::abs(s) - 1.0) < 1e-8);
      }
}

TEST_CASE("high partial waves do not see a compact bump") {
  const double lambda = 1.0, radius = 1.5;
  ModeOptions fine;
  fine.points_per_wavelength = 400;
  fine.max_step = 0.005;
  fine.rel_tolerance = 1e-13;
  for (int l = 12; l <= 16; ++l) {
    const ModeProblem p{3, l, lambda, RadialPotential::bump(2.0, radius)};
    const cplx s = scattering_eigenvalue(p);
    CHECK(std::abs(s - free_scattering_eigenvalue(3, l)) < 1e-6);
    CHECK(std::abs(s - scattering_eigenvalue(p, fine)) < 1e-10);
  }
}

TEST_CASE("Poisson data is linear and carries S on the outgoing side") {
  const ModeProblem free3{3, 0, 1.0, RadialPotential::free()};
  const auto zero = poisson_apply_mode(free3, 0.0);
  for (const auto& v : zero.w) CHECK(v == cplx(0.0));
  const auto one = poisson_apply_mode(free3, 1.0);
  CHECK(std::abs(one.a_minus - 1.0) < 1e-14);
  CHECK(std::abs(one.a_plus + 1.0) < 1e-10);

  ModeSolver s({3, 2, 0.8, RadialPotential::bump(2.0, 1.5)});
  const cplx a(0.3, -1.1), b(-0.7, 0.4);
  const auto ua = s.poisson(a), ub = s.poisson(b), uab = s.poisson(a + 2.0 * b);
  double worst = 0.0;
  for (std::size_t j = 0; j < ua.w.size(); ++j)
    worst = std::max(worst, std::abs(uab.w[j] - ua.w[j] - 2.0 * ub.w[j]));
  CHECK(worst < 1e-12);
  CHECK(std::abs(ua.a_plus - s.smatrix() * a) < 1e-12);
}

TEST_CASE("P(-lambda) S = P(lambda) on the grid, cross-checked at half step") {
  for (int l : {0, 3, 10}) {
    const ModeProblem p{3, l, 1.0, RadialPotential::bump(2.0, 1.5)};
    ModeOptions half;
    half.points_per_wavelength = 400;
    half.max_step = 0.005;
    ModeSolver coarse(p), fine(p, half);
    const cplx a(0.6, 0.8);
    const auto lhs = coarse.poisson(a, 1);
    const auto rhs = fine.poisson(fine.smatrix() * a, -1);
    double worst = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < lhs.w.size() && 2 * j < rhs.w.size(); ++j) {
      worst = std::max(worst, std::abs(lhs.w[j] - rhs.w[2 * j]));
      scale = std::max(scale, std::abs(lhs.w[j]));
    }
    CHECK(worst / scale < 1e-7);
  }
}

TEST_CASE("outgoing resolvent matches the free Green kernel") {
  const double lambda = 1.0;
  ModeOptions opt;
  opt.forcing_support = 12.0;
  ModeSolver s({3, 0, lambda, RadialPotential::free()}, opt);
  const auto res = s.resolvent([](double r) { return gaussian(r); }, 1);
  // w = r u with kernel sin(lambda r<) e^{i lambda r>} / lambda
  CHECK(std::abs(res.a_plus - std::sqrt(M_PI / 2) * std::exp(-0.5 * lambda * lambda)) < 1e-9);
  CHECK(std::abs(res.a_minus) < 1e-9);
  CHECK(res.residual < 1e-6);
  for (std::size_t j : {std::size_t(150), std::size_t(700), std::size_t(2000)}) {
    const double r = res.r[j];
    auto kernel = [&](double rho) {
      const double lo = std::min(r, rho), hi = std::max(r, rho);
      return std::sin(lambda * lo) * std::exp(I * lambda * hi) / lambda * rho * gaussian(rho);
    };
    const cplx oracle = simpson(kernel, 0.0, r) + simpson(kernel, r, 14.0);
    CHECK(std::abs(res.w[j] - oracle) < 1e-9);
  }
  const auto zero = s.resolvent([](double) { return cplx(0.0); }, 1);
  for (const auto& v : zero.w) CHECK(v == cplx(0.0));
}

TEST_CASE("resolvent solves the mode equation for every family") {
  for (const auto& v : families())
    for (int sign : {1, -1})
      for (int l : {0, 2}) {
        ModeSolver s({3, l, 1.0, v});
        const auto res = s.resolvent([](double r) { return r * gaussian(r); }, sign);
        CHECK(res.residual < 1e-6);
        const cplx wrong = sign > 0 ? res.a_minus : res.a_plus;
        const cplx right = sign > 0 ? res.a_plus : res.a_minus;
        CHECK(std::abs(wrong) < 1e-8 * std::abs(right));
        CHECK(std::abs(std::abs(res.wronskian) - 2.0) < 1e-8);
      }
}

TEST_CASE("resolvent jump equals (i / 2 lambda) P P*") {
  auto f = [](double r) { return gaussian(r); };
  CHECK(jump_identity_mode({3, 0, 1.0, RadialPotential::free()}, f) < 1e-6);
  CHECK(jump_identity_mode({3, 0, 1.0, RadialPotential::free()},
                           [](double) { return cplx(0.0); }) == 0.0);
  for (int l = 0; l <= 2; ++l)
    CHECK(jump_identity_mode({3, l, 1.0, RadialPotential::bump(2.0, 1.5)}, f) < 1e-5);
  for (const auto& v : families()) {
    CHECK(jump_identity_mode({2, 1, 0.5, v}, f) < 1e-5);
    CHECK(jump_identity_mode({3, 1, 2.0, v}, f) < 1e-5);
  }
}

TEST_CASE("free Poisson adjoint is a Hankel transform") {
  // f = r^l e^{-r^2/2}: int f r^{n/2} J_nu(lambda r) dr = lambda^nu e^{-lambda^2/2}
  for (int n : {2, 3})
    for (int l : {0, 1, 3})
      for (double lambda : {0.3, 1.0, 2.5}) {
        ModeSolver s({n, l, lambda, RadialPotential::free()});
        const double nu = l + 0.5 * (n - 2);
        const cplx data = s.poisson_adjoint([l](double r) { return std::pow(r, l) * gaussian(r); });
        const double oracle = lambda * std::pow(lambda, 2 * nu) * std::exp(-lambda * lambda);
        CHECK(std::abs(std::norm(data) / (2 * M_PI) - oracle) < 1e-6 * std::max(oracle, 1e-3));
      }
}

TEST_CASE("extracted outgoing data is smooth in lambda") {
  const RadialPotential v = RadialPotential::bump(2.0, 1.5);
  const double step = 0.05;
  std::vector<cplx> s;
  for (int k = 0; k <= 30; ++k) s.push_back(scattering_eigenvalue({3, 1, 0.5 + k * step, v}));
  double second = 0.0;
  for (std::size_t k = 1; k + 1 < s.size(); ++k)
    second = std::max(second, std::abs(s[k + 1] - 2.0 * s[k] + s[k - 1]) / (step * step));
  CHECK(second < 50.0);
}

TEST_CASE("mode solver errors") {
  CHECK_THROWS_AS(solve_mode({3, 0, 0.0, RadialPotential::free()}), DomainError);
  CHECK_THROWS_AS(solve_mode({3, 0, -1.0, RadialPotential::free()}), DomainError);
  CHECK_THROWS_AS(solve_mode({3, 0, 1.0, RadialPotential::inverse_square(-5.0)}), DomainError);
  ModeOptions tight;
  tight.r_max = 41.0;
  CHECK_THROWS_AS(solve_mode({3, 0, 1.0, RadialPotential::bump(2.0, 39.0)}, tight),
                  ConvergenceError);
  tight.r_max = 30.0;
  CHECK_THROWS_AS(solve_mode({3, 0, 1.0, RadialPotential::free()}, tight), DomainError);
}

TEST_CASE("default extent survives rounding of 40 / lambda * lambda") {
  // (40 / 0.037) * 0.037 is one ulp below 40
  REQUIRE((40.0 / 0.037) * 0.037 < 40.0);
  ModeOptions opt;
  opt.points_per_wavelength = 20.0;
  CHECK_NOTHROW(ModeSolver({3, 0, 0.037, RadialPotential::free()}, opt));
}

TEST_CASE("S-matrix table CSV") {
  const auto t = smatrix_diag(3, 1.0, RadialPotential::free(), 1);
  std::ostringstream os;
  write_smatrix_csv(os, {t});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "lambda,l,re_s,im_s,phase_shift,residual");
  std::getline(is, line);
  CHECK(line.rfind("1,0,", 0) == 0);
  CHECK(std::stod(line.substr(4)) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(t.entries.size() == 2);
}
