#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "conicscat/boundary_geometry.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace conicscat;
using conicscat::testing::bumpy;
using conicscat::testing::random_point;
using conicscat::testing::random_state;

namespace {

// Independent metric oracle: inverse stereographic map written out directly,
// Jacobian by a fourth-order finite-difference stencil, h = e^{2 eps p} J^T J.
EVec inverse_stereo(int chart, const BVec& y) {
  const int d = static_cast<int>(y.size());
  const double q = y.squaredNorm();
  EVec w(d + 1);
  for (int i = 0; i < d; ++i) w(i) = 2.0 * y(i) / (1.0 + q);
  w(d) = (chart == 0 ? 1.0 : -1.0) * (1.0 - q) / (1.0 + q);
  return w;
}

double oracle_dual_metric(const BoundaryMetric& m, const ChartPoint& p,
                          const BVec& mu) {
  const int d = static_cast<int>(p.y.size());
  const double h = 1e-3;
  Eigen::MatrixXd jac(d + 1, d);
  for (int j = 0; j < d; ++j) {
    auto at = [&](double t) {
      BVec y = p.y;
      y(j) += t;
      return inverse_stereo(p.chart, y);
    };
    jac.col(j) = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  }
  const EVec w = inverse_stereo(p.chart, p.y);
  const double conf = std::exp(2.0 * m.epsilon() * m.bump(w));
  const Eigen::MatrixXd g = conf * jac.transpose() * jac;
  const Eigen::VectorXd v = mu;
  return v.dot(g.inverse() * v);
}

EVec embedded_velocity(const CosphereState& s) {
  return charts::embed_covector(s.point, s.mu);
}

}  // namespace

TEST_CASE("metric_eval basic values") {
  const auto m = BoundaryMetric::round(3);
  ChartPoint p{0, BVec::Zero(2)};
  p.y << 0.3, -0.2;
  CHECK(metric_eval(m, p, BVec::Zero(2)) == 0.0);
  const auto unit = CosphereState::from_angle(m, p, 0.7);
  CHECK(metric_eval(m, p, unit.mu) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("metric_eval perturbed matches independent oracle") {
  std::mt19937_64 rng(7);
  for (int n : {2, 3}) {
    const auto m = bumpy(n, 0.1);
    for (int k = 0; k < 200; ++k) {
      const ChartPoint p = random_point(rng, n);
      BVec mu(n - 1);
      for (int i = 0; i < n - 1; ++i) mu(i) = std::normal_distribution<double>()(rng);
      const double got = metric_eval(m, p, mu);
      const double want = oracle_dual_metric(m, p, mu);
      CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
    }
  }
}

TEST_CASE("metric_eval rejects points outside the atlas") {
  const auto m = BoundaryMetric::round(3);
  ChartPoint p{0, BVec::Zero(2)};
  p.y << 3.0, 0.0;
  CHECK_THROWS_AS(metric_eval(m, p, BVec::Zero(2)), DomainError);
  CHECK_THROWS_AS(bumpy(3, -1.0), DomainError);
}

TEST_CASE("chart transitions are consistent") {
  std::mt19937_64 rng(11);
  for (int n : {2, 3}) {
    for (int k = 0; k < 100; ++k) {
      ChartPoint p = random_point(rng, n);
      if (p.y.norm() < 0.3) continue;
      const int other = 1 - p.chart;
      const ChartPoint q = charts::to_chart(p, other);
      CHECK((charts::embed(p) - charts::embed(q)).norm() < 1e-14);
      BVec mu = BVec::Ones(n - 1);
      const BVec nu = charts::covector_to_chart(p, mu, other);
      CHECK((charts::embed_covector(p, mu) - charts::embed_covector(q, nu)).norm() <
            1e-12 * (1.0 + mu.norm()));
    }
  }
}

TEST_CASE("round sphere flow: half turn is antipodal, zero time is identity") {
  std::mt19937_64 rng(3);
  for (int n : {2, 3}) {
    const auto m = BoundaryMetric::round(n);
    for (bool closed : {true, false}) {
      FlowOptions opt;
      opt.closed_form_when_round = closed;
      for (int k = 0; k < 50; ++k) {
        const auto st = random_state(m, rng);
        const auto r = flow(m, st, M_PI, opt);
        CHECK((charts::embed(r.state.point) + charts::embed(st.point)).norm() < 1e-9);
        CHECK((embedded_velocity(r.state) + embedded_velocity(st)).norm() < 1e-9);
        const auto z = flow(m, st, 0.0, opt);
        CHECK((charts::embed(z.state.point) - charts::embed(st.point)).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("round sphere closed orbits via the integrator") {
  std::mt19937_64 rng(5);
  for (int n : {2, 3}) {
    const auto m = BoundaryMetric::round(n);
    FlowOptions opt;
    opt.closed_form_when_round = false;
    for (int k = 0; k < 100; ++k) {
      const auto st = random_state(m, rng);
      const auto r = flow(m, st, 2.0 * M_PI, opt);
      CHECK((charts::embed(r.state.point) - charts::embed(st.point)).norm() < 1e-8);
      CHECK((embedded_velocity(r.state) - embedded_velocity(st)).norm() < 1e-8);
    }
  }
}

TEST_CASE("perturbed flow agrees with a step-halving oracle") {
  std::mt19937_64 rng(17);
  const auto m = bumpy(3, 0.05);
  for (int k = 0; k < 20; ++k) {
    const auto st = random_state(m, rng);
    const auto adaptive = flow(m, st, 1.0);
    FlowOptions coarse, fine;
    coarse.fixed_step = 1e-2;
    fine.fixed_step = 5e-3;
    const EVec a = charts::embed(flow(m, st, 1.0, coarse).state.point);
    const EVec b = charts::embed(flow(m, st, 1.0, fine).state.point);
    // Richardson extrapolation of a fifth-order method
    const EVec extrap = b + (b - a) / 31.0;
    CHECK((charts::embed(adaptive.state.point) - extrap).norm() <= 1e-8);
  }
}

TEST_CASE("fixed steps over a horizon give a smooth map in the flow time") {
  std::mt19937_64 rng(19);
  const auto m = bumpy(2, 0.1);
  const auto st = random_state(m, rng);
  FlowOptions plain, horizon;
  plain.fixed_step = horizon.fixed_step = 0.02;
  horizon.fixed_horizon = M_PI;
  // second difference across s = 1.8, where the plain step count changes
  auto second_difference = [&](const FlowOptions& opt) {
    const double h = 1e-5;
    const EVec a = charts::embed(flow(m, st, 1.8 - h, opt).state.point);
    const EVec b = charts::embed(flow(m, st, 1.8 + 1e-12, opt).state.point);
    const EVec c = charts::embed(flow(m, st, 1.8 + h, opt).state.point);
    return (a - 2.0 * b + c).norm() / (h * h);
  };
  CHECK(second_difference(horizon) < 10.0);
  CHECK(flow(m, st, 0.1, horizon).steps == 158);
  CHECK(flow(m, st, 4.0, horizon).steps == 200);
  CHECK(flow(m, st, 0.1, plain).steps == 5);
}

TEST_CASE("flow invariants: energy, group law, reversibility") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> us(0.0, 2.0 * M_PI);
  for (int n : {2, 3}) {
    const auto m = bumpy(n, 0.1);
    double worst_energy = 0.0, worst_group = 0.0, worst_rev = 0.0;
    const int count = n == 3 ? 5000 : 5000;  // 10^4 states over both dimensions
    for (int k = 0; k < count; ++k) {
      const auto st = random_state(m, rng);
      const double s = us(rng);
      const auto r = flow(m, st, s);
      worst_energy = std::max({worst_energy, r.energy_drift,
                               std::abs(r.state.norm(m) - 1.0)});
      if (k % 25 == 0) {
        const double s1 = 0.37 * s, s2 = s - s1;
        const auto two = flow(m, flow(m, st, s1).state, s2);
        worst_group = std::max(
            worst_group,
            (charts::embed(two.state.point) - charts::embed(r.state.point)).norm());
        const auto back = flow(m, r.state, -s);
        worst_rev = std::max(
            worst_rev, (charts::embed(back.state.point) - charts::embed(st.point)).norm());
      }
    }
    CHECK(worst_energy <= 1e-8);
    CHECK(worst_group <= 2e-9);
    CHECK(worst_rev <= 2e-9);
  }
}

TEST_CASE("geodesic distance") {
  std::mt19937_64 rng(29);
  const auto round3 = BoundaryMetric::round(3);
  ChartPoint north{0, BVec::Zero(2)};
  ChartPoint south{1, BVec::Zero(2)};
  CHECK(geodesic_distance(round3, north, south) == doctest::Approx(M_PI).epsilon(1e-15));
  CHECK(geodesic_distance(round3, north, north) == 0.0);

  for (int n : {2, 3}) {
    const auto m = bumpy(n, 0.1);
    for (int k = 0; k < 20; ++k) {
      const ChartPoint a = random_point(rng, n);
      const ChartPoint b = random_point(rng, n);
      const double dab = geodesic_distance(m, a, b);
      const double dba = geodesic_distance(m, b, a);
      CHECK(std::abs(dab - dba) <= 1e-9);
      CHECK(dab >= 0.0);
    }
    // shooting oracle: flow a known length, recover it as a distance
    for (int k = 0; k < 20; ++k) {
      const auto st = random_state(m, rng);
      const double len = 0.3 + 2.0 * (k / 20.0);
      const auto end = flow(m, st, len, FlowOptions{1e-13});
      CHECK(std::abs(geodesic_distance(m, st.point, end.state.point) - len) <= 1e-7);
    }
  }
}
