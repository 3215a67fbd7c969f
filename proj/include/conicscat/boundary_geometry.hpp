#pragma once

// Riemannian geometry of the boundary sphere S^{n-1} (n = 2, 3): metric
// evaluation, unit-cosphere geodesic flow and geodesic distance.
//
// Points are stored in one of two stereographic charts.  Chart 0 projects from
// the south pole and is centred at the north pole (omega_d = +1); chart 1 is
// the mirror image.  Each chart is used up to polar angle 2*pi/3 from its
// centre, i.e. |y| <= sqrt(3); the transition map is the inversion y -> y/|y|^2.
//
// The metric is h = exp(2*eps*p) * h_round with p a compactly supported bump
// on the sphere.  In either chart h = exp(2*phi(y)) |dy|^2 with
// phi = log(2/(1+|y|^2)) + eps*p.

#include <Eigen/Core>

#include "conicscat/errors.hpp"

namespace conicscat {

/// Chart coordinates / covector components on the boundary (dimension 1 or 2).
using BVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 2, 1>;
/// Embedding-space vectors in R^n (dimension 2 or 3).
using EVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;
/// d omega / d y, an n x (n-1) matrix.
using ChartJacobian = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                    Eigen::ColMajor, 3, 2>;

struct ChartPoint {
  int chart = 0;
  BVec y;
};

namespace charts {

/// Largest |y| at which a chart is kept before switching (polar angle 2pi/3).
inline constexpr double kSwitchRadius = 1.7320508075688772;
/// Largest |y| accepted anywhere (polar angle 3pi/4).
inline constexpr double kDomainRadius = 2.4142135623730949;

void check_domain(const ChartPoint& p);
EVec embed(const ChartPoint& p);
ChartJacobian jacobian(const ChartPoint& p);
/// Projection of a unit vector into the given chart.
ChartPoint project(const EVec& omega, int chart);
/// Chart whose centre is nearer to omega.
int preferred_chart(const EVec& omega);
ChartPoint to_chart(const ChartPoint& p, int chart);
/// Covector at p re-expressed in `chart`.
BVec covector_to_chart(const ChartPoint& p, const BVec& mu, int chart);
/// Tangential covector in R^n whose pullback to the chart is mu.
EVec embed_covector(const ChartPoint& p, const BVec& mu);
/// Pullback of an embedding covector to the chart.
BVec pull_covector(const ChartPoint& p, const EVec& xi);

}  // namespace charts

enum class MetricKind { round, conformal_bump };

class BoundaryMetric {
 public:
  static BoundaryMetric round(int n);
  /// Conformal bump perturbation exp(2 eps p) h_round.  eps in [0, 0.2];
  /// width is the chordal support radius of p around `center`.
  static BoundaryMetric perturbed(int n, double eps, const EVec& center,
                                  double width = 1.0);

  int ambient_dimension() const { return n_; }
  int dimension() const { return n_ - 1; }
  MetricKind kind() const { return kind_; }
  double epsilon() const { return eps_; }
  const EVec& bump_center() const { return center_; }
  double bump_width() const { return width_; }
  bool is_round() const { return kind_ == MetricKind::round || eps_ == 0.0; }

  /// Bump profile p on the unit sphere and its R^n gradient.
  double bump(const EVec& omega, EVec* gradient = nullptr) const;
  EVec bump_gradient(const EVec& omega) const;

  /// phi with h = exp(2 phi) |dy|^2 in the chart of p.
  double log_conformal_factor(const ChartPoint& p) const;
  BVec log_conformal_gradient(const ChartPoint& p) const;

 private:
  BoundaryMetric(int n, MetricKind kind, double eps, EVec center, double width);
  int n_;
  MetricKind kind_;
  double eps_;
  EVec center_;
  double width_;
};

/// Dual-metric quadratic form h(y, mu) = exp(-2 phi) |mu|^2.
double metric_eval(const BoundaryMetric& m, const ChartPoint& y, const BVec& mu);

/// Point of the unit cosphere bundle S^* dX.
struct CosphereState {
  ChartPoint point;
  BVec mu;

  /// mu rescaled to unit h-norm.
  static CosphereState normalized(const BoundaryMetric& m, const ChartPoint& p,
                                  const BVec& mu);
  /// Unit covector at angle alpha in the chart frame (dimension 2 only).
  static CosphereState from_angle(const BoundaryMetric& m, const ChartPoint& p,
                                  double alpha);
  /// Unit covector with orientation sign (dimension 1 only).
  static CosphereState from_sign(const BoundaryMetric& m, const ChartPoint& p,
                                 int sign);

  CosphereState in_chart(int chart) const;
  double norm(const BoundaryMetric& m) const;
};

struct FlowOptions {
  /// Local error tolerance of the adaptive Dormand-Prince 5(4) pair.
  double tolerance = 1e-10;
  /// If > 0, take equal steps no longer than this instead of adapting.  The
  /// resulting map is smooth in the initial data, which finite-difference
  /// Jacobians require.
  double fixed_step = 0.0;
  /// Use the great-circle formula when the metric is round.
  bool closed_form_when_round = true;
  double min_step = 1e-14;
  /// With fixed_step, the step count is taken from max(|s|, fixed_horizon), so
  /// flows of any length up to the horizon use the same number of steps.
  double fixed_horizon = 0.0;
};

struct FlowResult {
  CosphereState state;
  double s = 0.0;
  /// Largest | |mu|_h - 1 | seen before the per-step renormalisation.
  double energy_drift = 0.0;
  int steps = 0;
};

/// exp(s H_{h/2}) applied to a unit cosphere state.
FlowResult flow(const BoundaryMetric& m, const CosphereState& start, double s,
                const FlowOptions& options = {});

/// Distance between two boundary points.  Round metric: the angle between the
/// embedded unit vectors; otherwise a shooting solve along flow geodesics.
double geodesic_distance(const BoundaryMetric& m, const ChartPoint& a,
                         const ChartPoint& b, double tolerance = 1e-12);

}  // namespace conicscat
