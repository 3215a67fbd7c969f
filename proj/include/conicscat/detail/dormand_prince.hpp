#pragma once

// Dormand-Prince 5(4) embedded Runge-Kutta pair, shared by the geodesic and
// bicharacteristic integrators.  State must behave like an Eigen vector.

#include <algorithm>
#include <cmath>

namespace conicscat::detail {

/// One step of size h.  The error estimate costs a seventh evaluation and is
/// skipped when err is null.
template <class State, class Rhs>
State dormand_prince_step(const Rhs& f, const State& x, double h, State* err) {
  const State k1 = f(x);
  const State k2 = f(State(x + h * (1.0 / 5.0) * k1));
  const State k3 = f(State(x + h * ((3.0 / 40.0) * k1 + (9.0 / 40.0) * k2)));
  const State k4 = f(State(x + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 +
                                    (32.0 / 9.0) * k3)));
  const State k5 =
      f(State(x + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 +
                       (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4)));
  const State k6 =
      f(State(x + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 +
                       (46732.0 / 5247.0) * k3 + (49.0 / 176.0) * k4 -
                       (5103.0 / 18656.0) * k5)));
  State next = x + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 +
                        (125.0 / 192.0) * k4 - (2187.0 / 6784.0) * k5 +
                        (11.0 / 84.0) * k6);
  if (!err) return next;
  const State k7 = f(next);
  *err = h * ((35.0 / 384.0 - 5179.0 / 57600.0) * k1 +
             (500.0 / 1113.0 - 7571.0 / 16695.0) * k3 +
             (125.0 / 192.0 - 393.0 / 640.0) * k4 +
             (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5 +
             (11.0 / 84.0 - 187.0 / 2100.0) * k6 - (1.0 / 40.0) * k7);
  return next;
}

/// Scaled error norm; a step is accepted when this is <= 1.
template <class State>
double error_norm(const State& err, const State& x, double tol) {
  const double scale = std::max(1.0, x.template lpNorm<Eigen::Infinity>());
  return err.template lpNorm<Eigen::Infinity>() / (tol * scale);
}

inline double next_step_factor(double err) {
  if (err == 0.0) return 5.0;
  return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
}

}  // namespace conicscat::detail
