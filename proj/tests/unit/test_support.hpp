#pragma once

#include <random>

#include "conicscat/boundary_geometry.hpp"

namespace conicscat::testing {

inline EVec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  EVec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v.normalized();
}

inline ChartPoint random_point(std::mt19937_64& rng, int n) {
  const EVec w = random_unit(rng, n);
  return charts::project(w, charts::preferred_chart(w));
}

inline CosphereState random_state(const BoundaryMetric& m, std::mt19937_64& rng) {
  const ChartPoint p = random_point(rng, m.ambient_dimension());
  std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
  if (m.dimension() == 2) return CosphereState::from_angle(m, p, u(rng));
  return CosphereState::from_sign(m, p, u(rng) < M_PI ? 1 : -1);
}

inline BoundaryMetric bumpy(int n, double eps) {
  EVec c(n);
  if (n == 3) c << 0.0, 0.6, 0.8;
  else c << 0.6, 0.8;
  return BoundaryMetric::perturbed(n, eps, c, 1.0);
}

}  // namespace conicscat::testing
