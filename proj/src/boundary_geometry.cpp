#include "conicscat/boundary_geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "conicscat/detail/dormand_prince.hpp"

namespace conicscat {

namespace charts {

namespace {
double orientation(int chart) { return chart == 0 ? 1.0 : -1.0; }
}  // namespace

void check_domain(const ChartPoint& p) {
  if (p.chart != 0 && p.chart != 1)
    throw DomainError("chart index must be 0 or 1");
  if (p.y.size() < 1 || p.y.size() > 2)
    throw DomainError("boundary dimension must be 1 or 2");
  if (!p.y.allFinite() || p.y.norm() > kDomainRadius)
    throw DomainError("point outside chart atlas (|y| = " +
                      std::to_string(p.y.norm()) + ")");
}

EVec embed(const ChartPoint& p) {
  const int d = static_cast<int>(p.y.size());
  const double q = p.y.squaredNorm();
  EVec omega(d + 1);
  omega.head(d) = 2.0 * p.y / (1.0 + q);
  omega(d) = orientation(p.chart) * (1.0 - q) / (1.0 + q);
  return omega;
}

ChartJacobian jacobian(const ChartPoint& p) {
  const int d = static_cast<int>(p.y.size());
  const double q = p.y.squaredNorm();
  const double a = 1.0 + q;
  ChartJacobian jac(d + 1, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      jac(i, j) = (i == j ? 2.0 / a : 0.0) - 4.0 * p.y(i) * p.y(j) / (a * a);
  for (int j = 0; j < d; ++j)
    jac(d, j) = -orientation(p.chart) * 4.0 * p.y(j) / (a * a);
  return jac;
}

ChartPoint project(const EVec& omega, int chart) {
  const int d = static_cast<int>(omega.size()) - 1;
  const double denom = 1.0 + orientation(chart) * omega(d);
  if (denom <= 0.0) throw DomainError("projection centre is not in the chart");
  ChartPoint p{chart, omega.head(d) / denom};
  return p;
}

int preferred_chart(const EVec& omega) {
  return omega(omega.size() - 1) >= 0.0 ? 0 : 1;
}

ChartPoint to_chart(const ChartPoint& p, int chart) {
  if (p.chart == chart) return p;
  const double q = p.y.squaredNorm();
  if (q == 0.0) throw DomainError("chart centre has no image in the other chart");
  return ChartPoint{chart, p.y / q};
}

BVec covector_to_chart(const ChartPoint& p, const BVec& mu, int chart) {
  if (p.chart == chart) return mu;
  const ChartPoint t = to_chart(p, chart);
  // y_source = t / |t|^2, so d y_source / d t is symmetric.
  const int d = static_cast<int>(t.y.size());
  const double q = t.y.squaredNorm();
  BVec out(d);
  for (int i = 0; i < d; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j)
      acc += ((i == j ? q : 0.0) - 2.0 * t.y(i) * t.y(j)) * mu(j);
    out(i) = acc / (q * q);
  }
  return out;
}

EVec embed_covector(const ChartPoint& p, const BVec& mu) {
  // The chart is conformal: J^T J = c^2 I with c = 2 / (1 + |y|^2).
  const double c = 2.0 / (1.0 + p.y.squaredNorm());
  return jacobian(p) * mu / (c * c);
}

BVec pull_covector(const ChartPoint& p, const EVec& xi) {
  return jacobian(p).transpose() * xi;
}

}  // namespace charts

BoundaryMetric::BoundaryMetric(int n, MetricKind kind, double eps, EVec center,
                               double width)
    : n_(n), kind_(kind), eps_(eps), center_(std::move(center)), width_(width) {
  if (n != 2 && n != 3) throw DomainError("only n = 2 and n = 3 are supported");
}

BoundaryMetric BoundaryMetric::round(int n) {
  EVec c = EVec::Zero(n);
  c(n - 1) = 1.0;
  return BoundaryMetric(n, MetricKind::round, 0.0, c, 1.0);
}

BoundaryMetric BoundaryMetric::perturbed(int n, double eps, const EVec& center,
                                         double width) {
  if (!(eps >= 0.0 && eps <= 0.2))
    throw DomainError("perturbation scale must lie in [0, 0.2]");
  if (center.size() != n || std::abs(center.norm() - 1.0) > 1e-12)
    throw DomainError("bump centre must be a unit vector in R^n");
  if (!(width > 0.0 && width <= 2.0))
    throw DomainError("bump width must lie in (0, 2]");
  return BoundaryMetric(n, MetricKind::conformal_bump, eps, center, width);
}

double BoundaryMetric::bump(const EVec& omega, EVec* gradient) const {
  const double t = (omega - center_).squaredNorm() / (width_ * width_);
  if (t >= 1.0) {
    if (gradient) *gradient = EVec::Zero(omega.size());
    return 0.0;
  }
  const double p = std::exp(1.0 - 1.0 / (1.0 - t));
  if (gradient) {
    const double dp_dt = -p / ((1.0 - t) * (1.0 - t));
    *gradient = dp_dt * 2.0 * (omega - center_) / (width_ * width_);
  }
  return p;
}

EVec BoundaryMetric::bump_gradient(const EVec& omega) const {
  EVec g;
  bump(omega, &g);
  return g;
}

double BoundaryMetric::log_conformal_factor(const ChartPoint& p) const {
  double phi = std::log(2.0 / (1.0 + p.y.squaredNorm()));
  if (!is_round()) phi += eps_ * bump(charts::embed(p));
  return phi;
}

BVec BoundaryMetric::log_conformal_gradient(const ChartPoint& p) const {
  BVec g = -2.0 * p.y / (1.0 + p.y.squaredNorm());
  if (!is_round())
    g += eps_ * charts::jacobian(p).transpose() * bump_gradient(charts::embed(p));
  return g;
}

double metric_eval(const BoundaryMetric& m, const ChartPoint& y, const BVec& mu) {
  charts::check_domain(y);
  if (mu.size() != y.y.size()) throw DomainError("covector dimension mismatch");
  return std::exp(-2.0 * m.log_conformal_factor(y)) * mu.squaredNorm();
}

CosphereState CosphereState::normalized(const BoundaryMetric& m,
                                        const ChartPoint& p, const BVec& mu) {
  const double norm2 = metric_eval(m, p, mu);
  if (!(norm2 > 0.0)) throw DomainError("zero covector has no direction");
  return CosphereState{p, mu / std::sqrt(norm2)};
}

CosphereState CosphereState::from_angle(const BoundaryMetric& m,
                                        const ChartPoint& p, double alpha) {
  if (p.y.size() != 2) throw DomainError("angle parametrisation needs dimension 2");
  BVec dir(2);
  dir << std::cos(alpha), std::sin(alpha);
  return normalized(m, p, dir);
}

CosphereState CosphereState::from_sign(const BoundaryMetric& m,
                                       const ChartPoint& p, int sign) {
  if (p.y.size() != 1) throw DomainError("sign parametrisation needs dimension 1");
  BVec dir(1);
  dir(0) = sign >= 0 ? 1.0 : -1.0;
  return normalized(m, p, dir);
}

CosphereState CosphereState::in_chart(int chart) const {
  return CosphereState{charts::to_chart(point, chart),
                       charts::covector_to_chart(point, mu, chart)};
}

double CosphereState::norm(const BoundaryMetric& m) const {
  return std::sqrt(metric_eval(m, point, mu));
}

namespace {

// Phase-space state (omega, xi) in R^n x R^n.  The Hamiltonian
//   H = 1/2 exp(-2 eps p(omega/|omega|)) (|xi|^2 |omega|^2 - (omega.xi)^2)
// restricts to h/2 on T^*S^{n-1} and its flow preserves |omega| and omega.xi.
using Phase = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 6, 1>;

// Fixed-size copy of the metric data for the integrator's inner loop.
template <int N>
struct EmbeddedHamiltonian {
  using Vec = Eigen::Matrix<double, N, 1>;
  using State = Eigen::Matrix<double, 2 * N, 1>;

  bool round = true;
  double eps = 0.0;
  double inv_width2 = 1.0;
  Vec center = Vec::Zero();

  explicit EmbeddedHamiltonian(const BoundaryMetric& m) : round(m.is_round()) {
    if (!round) {
      eps = m.epsilon();
      inv_width2 = 1.0 / (m.bump_width() * m.bump_width());
      center = m.bump_center();
    }
  }

  double bump(const Vec& omega, Vec* gradient) const {
    const Vec d = omega - center;
    const double t = d.squaredNorm() * inv_width2;
    if (t >= 1.0) {
      if (gradient) gradient->setZero();
      return 0.0;
    }
    const double p = std::exp(1.0 - 1.0 / (1.0 - t));
    if (gradient) *gradient = (-2.0 * p * inv_width2 / ((1.0 - t) * (1.0 - t))) * d;
    return p;
  }

  State operator()(const State& x) const {
    const Vec w = x.template head<N>();
    const Vec xi = x.template tail<N>();
    const double ww = w.squaredNorm();
    const double wx = w.dot(xi);
    const double xx = xi.squaredNorm();
    double e = 1.0;
    Vec de = Vec::Zero();
    if (!round) {
      const double r = std::sqrt(ww);
      const Vec hat = w / r;
      Vec g;
      e = std::exp(-2.0 * eps * bump(hat, &g));
      de = (-2.0 * eps * e / r) * (g - hat * hat.dot(g));
    }
    const double q = xx * ww - wx * wx;
    State out;
    out.template head<N>() = e * (xi * ww - wx * w);
    out.template tail<N>() = -(0.5 * q * de + e * (xx * w - wx * xi));
    return out;
  }

  // Projects back onto |omega| = 1, omega.xi = 0, |xi|_h = 1 and returns the
  // h-norm defect seen before rescaling.
  double project(State& x) const {
    const Vec w = x.template head<N>().normalized();
    Vec xi = x.template tail<N>();
    xi -= w * w.dot(xi);
    const double weight = round ? 1.0 : std::exp(-eps * bump(w, nullptr));
    const double hnorm = weight * xi.norm();
    x.template head<N>() = w;
    x.template tail<N>() = xi / hnorm;
    return std::abs(hnorm - 1.0);
  }
};

template <int N>
void integrate(const BoundaryMetric& m, Phase& phase, double s, const FlowOptions& options,
               FlowResult& result) {
  using H = EmbeddedHamiltonian<N>;
  using State = typename H::State;
  const H rhs(m);
  State x = phase;
  if (m.is_round() && options.closed_form_when_round) {
    const typename H::Vec w0 = x.template head<N>();
    const typename H::Vec v0 = x.template tail<N>();
    x.template head<N>() = std::cos(s) * w0 + std::sin(s) * v0;
    x.template tail<N>() = -std::sin(s) * w0 + std::cos(s) * v0;
    result.energy_drift = rhs.project(x);
  } else if (options.fixed_step > 0.0) {
    const double span = std::max(std::abs(s), options.fixed_horizon);
    const int steps = std::max(1, static_cast<int>(std::ceil(span / options.fixed_step)));
    const double h = s / steps;
    for (int i = 0; i < steps; ++i) {
      x = detail::dormand_prince_step(rhs, x, h, static_cast<State*>(nullptr));
      result.energy_drift = std::max(result.energy_drift, rhs.project(x));
    }
    result.steps = steps;
  } else {
    State err;
    const double dir = s > 0 ? 1.0 : -1.0;
    double t = 0.0;
    double h = dir * std::min(0.1, std::abs(s));
    while (dir * (s - t) > 0.0) {
      if (dir * (t + h - s) > 0.0) h = s - t;
      if (std::abs(h) < options.min_step)
        throw ConvergenceError("geodesic step size underflow", std::abs(h));
      const State trial = detail::dormand_prince_step(rhs, x, h, &err);
      const double e = detail::error_norm(err, x, options.tolerance);
      if (e <= 1.0) {
        x = trial;
        t += h;
        ++result.steps;
        result.energy_drift = std::max(result.energy_drift, rhs.project(x));
      }
      h *= detail::next_step_factor(e);
    }
  }
  phase = x;
}

}  // namespace

FlowResult flow(const BoundaryMetric& m, const CosphereState& start, double s,
                const FlowOptions& options) {
  charts::check_domain(start.point);
  const int n = m.ambient_dimension();
  if (start.point.y.size() != n - 1) throw DomainError("state dimension mismatch");
  const double norm = start.norm(m);
  if (std::abs(norm - 1.0) > 1e-8)
    throw DomainError("flow requires a unit covector (|mu|_h = " +
                      std::to_string(norm) + ")");

  Phase x(2 * n);
  x.head(n) = charts::embed(start.point);
  x.tail(n) = charts::embed_covector(start.point, start.mu);

  FlowResult result;
  result.s = s;
  if (s == 0.0) {
    result.state = start;
    return result;
  }

  if (n == 2) integrate<2>(m, x, s, options, result);
  else integrate<3>(m, x, s, options, result);

  const EVec w = x.head(n);
  const ChartPoint p = charts::project(w, charts::preferred_chart(w));
  result.state = CosphereState{p, charts::pull_covector(p, x.tail(n))};
  return result;
}

namespace {

struct Shot {
  EVec end;
  EVec velocity;
};

Shot shoot(const BoundaryMetric& m, const EVec& origin, const EVec& tangent,
           double length, double tol) {
  const ChartPoint p = charts::project(origin, charts::preferred_chart(origin));
  // unit h-norm: exp(-eps p) |xi| = 1 for a tangential xi along `tangent`
  const double weight = m.is_round() ? 1.0 : std::exp(-m.epsilon() * m.bump(origin));
  const EVec xi = tangent.normalized() / weight;
  const CosphereState st{p, charts::pull_covector(p, xi)};
  FlowOptions opt;
  opt.tolerance = tol;
  opt.closed_form_when_round = false;
  const FlowResult r = flow(m, st, length, opt);
  Shot out;
  out.end = charts::embed(r.state.point);
  const EVec xe = charts::embed_covector(r.state.point, r.state.mu);
  const double e = m.is_round() ? 1.0 : std::exp(-2.0 * m.epsilon() * m.bump(out.end));
  out.velocity = e * xe;
  return out;
}

double round_angle(const EVec& a, const EVec& b) {
  if (a.size() == 3) {
    const Eigen::Vector3d a3 = a, b3 = b;
    return std::atan2(a3.cross(b3).norm(), a3.dot(b3));
  }
  return std::atan2(std::abs(a(0) * b(1) - a(1) * b(0)), a.dot(b));
}

}  // namespace

double geodesic_distance(const BoundaryMetric& m, const ChartPoint& a,
                         const ChartPoint& b, double tolerance) {
  charts::check_domain(a);
  charts::check_domain(b);
  const EVec wa = charts::embed(a);
  const EVec wb = charts::embed(b);
  if ((wa - wb).norm() == 0.0) return 0.0;
  const double angle = round_angle(wa, wb);
  if (m.is_round()) return angle;

  const int n = m.ambient_dimension();
  const double integ_tol = 1e-13;

  if (n == 2) {
    // Two arcs; Newton on the length along each orientation.
    const EVec perp = (EVec(2) << -wa(1), wa(0)).finished();
    double best = std::numeric_limits<double>::infinity();
    double worst_residual = 0.0;
    for (int sign : {1, -1}) {
      const EVec dir = sign * perp;
      const double cross = wa(0) * wb(1) - wa(1) * wb(0);
      double len = (sign * cross >= 0.0) ? angle : 2.0 * M_PI - angle;
      double res = 1.0;
      for (int it = 0; it < 50; ++it) {
        const Shot s = shoot(m, wa, dir, len, integ_tol);
        const double c = s.end(0) * wb(1) - s.end(1) * wb(0);
        res = std::atan2(c, s.end.dot(wb));  // signed angle from end to target
        const double speed = s.velocity.norm();
        len += sign * res / speed;
        if (std::abs(res) < tolerance) break;
      }
      if (std::abs(res) > 1e3 * tolerance) {
        worst_residual = std::max(worst_residual, std::abs(res));
        continue;
      }
      best = std::min(best, len);
    }
    if (!std::isfinite(best))
      throw ConvergenceError("geodesic shooting did not converge", worst_residual);
    return best;
  }

  // n == 3: Gauss-Newton in (direction angle, length).
  Eigen::Vector3d e1 = wb - wa * wa.dot(wb);
  if (e1.norm() < 1e-14) {
    // antipodal on the round sphere: any direction works as a start
    e1 = Eigen::Vector3d::UnitX() - wa * wa(0);
    if (e1.norm() < 1e-8) e1 = Eigen::Vector3d::UnitY() - wa * wa(1);
  }
  e1.normalize();
  const Eigen::Vector3d w3 = wa;
  const Eigen::Vector3d e2 = w3.cross(e1);
  double alpha = 0.0;
  double len = angle;
  double res = 1.0;
  for (int it = 0; it < 60; ++it) {
    const EVec dir = std::cos(alpha) * e1 + std::sin(alpha) * e2;
    const Shot s = shoot(m, wa, dir, len, integ_tol);
    const Eigen::Vector3d r = s.end - wb;
    res = r.norm();
    if (res < tolerance) break;
    const double da = 1e-6;
    const EVec dir2 = std::cos(alpha + da) * e1 + std::sin(alpha + da) * e2;
    const Shot s2 = shoot(m, wa, dir2, len, integ_tol);
    Eigen::Matrix<double, 3, 2> jac;
    jac.col(0) = (s2.end - s.end) / da;
    jac.col(1) = s.velocity;
    const Eigen::Vector2d step = jac.colPivHouseholderQr().solve(-r);
    alpha += step(0);
    len += step(1);
  }
  if (res > 1e3 * tolerance || !(len >= 0.0))
    throw ConvergenceError("geodesic shooting did not converge", res);
  return len;
}

}  // namespace conicscat
