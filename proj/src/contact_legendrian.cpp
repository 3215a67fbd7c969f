#include "conicscat/contact_legendrian.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "conicscat/detail/dormand_prince.hpp"
#include "conicscat/detail/kd_tree.hpp"
#include "json.hpp"

namespace conicscat {

std::string to_string(Branch b) {
  switch (b) {
    case Branch::interior: return "interior";
    case Branch::closure_upper: return "closure_upper";
    case Branch::closure_lower: return "closure_lower";
    case Branch::section_outgoing: return "section_outgoing";
    case Branch::section_incoming: return "section_incoming";
    case Branch::diagonal_conormal: return "diagonal_conormal";
  }
  return "unknown";
}

namespace {
constexpr std::pair<LegendrianKind, const char*> kKindNames[] = {
    {LegendrianKind::outgoing_poisson, "outgoing_poisson"},
    {LegendrianKind::incoming_poisson, "incoming_poisson"},
    {LegendrianKind::outgoing_poisson_section, "outgoing_poisson_section"},
    {LegendrianKind::incoming_poisson_section, "incoming_poisson_section"},
    {LegendrianKind::poisson_fibre, "poisson_fibre"},
    {LegendrianKind::spectral, "spectral"},
    {LegendrianKind::spectral_section_outgoing, "spectral_section_outgoing"},
    {LegendrianKind::spectral_section_incoming, "spectral_section_incoming"},
    {LegendrianKind::diagonal_conormal, "diagonal_conormal"},
};
}  // namespace

std::string to_string(LegendrianKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "unknown";
}

LegendrianKind legendrian_kind_from_string(const std::string& name) {
  for (const auto& [kind, label] : kKindNames)
    if (name == label) return kind;
  throw DomainError("unknown Legendrian kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// DoubleSpacePoint

double DoubleSpacePoint::sigma() const { return std::tan(theta); }
double DoubleSpacePoint::tau() const {
  return tau1 * std::cos(theta) + tau2 * std::sin(theta);
}
double DoubleSpacePoint::eta() const {
  return tau1 * std::sin(theta) - tau2 * std::cos(theta);
}
BVec DoubleSpacePoint::mu1_tilde() const { return std::cos(theta) * mu1; }
BVec DoubleSpacePoint::mu2_tilde() const { return std::sin(theta) * mu2; }

DoubleSpacePoint DoubleSpacePoint::from_polar(double theta, ChartPoint y1,
                                              ChartPoint y2, double tau, double eta,
                                              const BVec& mut1, const BVec& mut2,
                                              Branch branch) {
  const double c = std::cos(theta), s = std::sin(theta);
  DoubleSpacePoint p;
  p.theta = theta;
  p.y1 = std::move(y1);
  p.y2 = std::move(y2);
  p.tau1 = tau * c + eta * s;
  p.tau2 = tau * s - eta * c;
  if (mut1.norm() > 0.0 && c <= 0.0) throw DomainError("mut1 nonzero at theta = pi/2");
  if (mut2.norm() > 0.0 && s <= 0.0) throw DomainError("mut2 nonzero at theta = 0");
  p.mu1 = mut1.norm() > 0.0 ? BVec(mut1 / c) : BVec(BVec::Zero(mut1.size()));
  p.mu2 = mut2.norm() > 0.0 ? BVec(mut2 / s) : BVec(BVec::Zero(mut2.size()));
  p.branch = branch;
  return p;
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

ChartPoint chart_point(const std::vector<double>& v, std::size_t offset, int d,
                       int chart) {
  ChartPoint p{chart, BVec(d)};
  for (int i = 0; i < d; ++i) p.y(i) = v.at(offset + i);
  return p;
}

BVec covector(const std::vector<double>& v, std::size_t offset, int d) {
  BVec mu(d);
  for (int i = 0; i < d; ++i) mu(i) = v.at(offset + i);
  return mu;
}

bool chart_ok(const std::vector<double>& v, std::size_t offset, int d) {
  double q = 0.0;
  for (int i = 0; i < d; ++i) {
    if (!std::isfinite(v[offset + i])) return false;
    q += v[offset + i] * v[offset + i];
  }
  return std::sqrt(q) <= charts::kDomainRadius;
}

bool on_end(double s) { return s == 0.0 || s == M_PI; }

EVec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  EVec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v.normalized();
}

ChartPoint random_point(std::mt19937_64& rng, int n) {
  const EVec w = random_unit(rng, n);
  return charts::project(w, charts::preferred_chart(w));
}

void push_point(std::vector<double>& v, const ChartPoint& p) {
  for (int i = 0; i < p.y.size(); ++i) v.push_back(p.y(i));
}

}  // namespace

LegendrianSampler::LegendrianSampler(LegendrianKind kind, BoundaryMetric metric,
                                     double lambda, SamplerOptions options)
    : kind_(kind), metric_(std::move(metric)), lambda_(lambda),
      options_(std::move(options)) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (!options_.fibre_base) {
    options_.fibre_base = ChartPoint{0, BVec::Zero(metric_.dimension())};
  }
}

int LegendrianSampler::parameter_dimension(ParamLayout layout) const {
  const int d = metric_.dimension();
  switch (kind_) {
    case LegendrianKind::outgoing_poisson:
    case LegendrianKind::incoming_poisson:
    case LegendrianKind::outgoing_poisson_section:
    case LegendrianKind::incoming_poisson_section:
      return 2 * d;
    case LegendrianKind::poisson_fibre:
      return d;
    case LegendrianKind::spectral:
      if (layout == ParamLayout::closure_stratum) return 1 + d;
      return 2 * d + 1;
    case LegendrianKind::spectral_section_outgoing:
    case LegendrianKind::spectral_section_incoming:
    case LegendrianKind::diagonal_conormal:
      return 2 * d + 1;
  }
  return 0;
}

bool LegendrianSampler::in_domain(const SamplerParams& p) const {
  const int d = metric_.dimension();
  if (static_cast<int>(p.values.size()) != parameter_dimension(p.layout)) return false;
  if (p.layout != ParamLayout::standard && kind_ != LegendrianKind::spectral) return false;
  for (double v : p.values)
    if (!std::isfinite(v)) return false;
  const auto& v = p.values;
  switch (kind_) {
    case LegendrianKind::outgoing_poisson:
      return v[0] >= 0.0 && v[0] < M_PI && chart_ok(v, 1, d);
    case LegendrianKind::incoming_poisson:
      return v[0] > 0.0 && v[0] <= M_PI && chart_ok(v, 1, d);
    case LegendrianKind::outgoing_poisson_section:
    case LegendrianKind::incoming_poisson_section:
      return chart_ok(v, 0, d) && chart_ok(v, d, d);
    case LegendrianKind::poisson_fibre:
      return v[0] >= 0.0 && v[0] < M_PI;
    case LegendrianKind::spectral:
      switch (p.layout) {
        case ParamLayout::standard:
          return v[0] >= 0.0 && v[0] <= M_PI && v[1] >= 0.0 && v[1] <= M_PI &&
                 !(on_end(v[0]) && on_end(v[1])) && chart_ok(v, 2, d);
        case ParamLayout::closure_stratum:
          return v[0] >= 0.0 && v[0] <= M_PI / 2 && chart_ok(v, 1, d);
        case ParamLayout::near_closure: {
          if (!(v[0] >= 0.0) || !chart_ok(v, 1, d)) return false;
          const ChartPoint y = chart_point(v, 1, d, p.chart);
          const double norm = std::sqrt(metric_eval(metric_, y, covector(v, 1 + d, d)));
          return norm < 1.0 && v[0] * norm < 1.0;
        }
      }
      return false;
    case LegendrianKind::spectral_section_outgoing:
    case LegendrianKind::spectral_section_incoming:
      return v[0] >= 0.0 && v[0] <= M_PI / 2 && chart_ok(v, 1, d) &&
             chart_ok(v, 1 + d, d);
    case LegendrianKind::diagonal_conormal:
      return chart_ok(v, 1, d);
  }
  return false;
}

CosphereState LegendrianSampler::direction_at(const ChartPoint& y,
                                              const SamplerParams& p,
                                              std::size_t angle_index) const {
  if (metric_.dimension() == 2)
    return CosphereState::from_angle(metric_, y, p.values.at(angle_index));
  return CosphereState::from_sign(metric_, y, p.orientation);
}

LegendrianPoint LegendrianSampler::sample(const SamplerParams& p) const {
  if (!in_domain(p)) throw DomainError("sampler parameters outside the domain of " +
                                       to_string(kind_));
  const int d = metric_.dimension();
  const auto& v = p.values;
  switch (kind_) {
    case LegendrianKind::outgoing_poisson:
      return sample_poisson(p, true);
    case LegendrianKind::incoming_poisson:
      return sample_poisson(p, false);
    case LegendrianKind::outgoing_poisson_section:
    case LegendrianKind::incoming_poisson_section: {
      PoissonLegendrianPoint out;
      out.y = chart_point(v, 0, d, p.chart);
      out.y_prime = chart_point(v, d, d, p.chart2);
      out.tau = kind_ == LegendrianKind::outgoing_poisson_section ? -lambda_ : lambda_;
      out.mu = BVec::Zero(d);
      out.mu_prime = BVec::Zero(d);
      return out;
    }
    case LegendrianKind::poisson_fibre:
      return sample_fibre(p);
    case LegendrianKind::spectral:
      return sample_spectral(p);
    case LegendrianKind::spectral_section_outgoing:
    case LegendrianKind::spectral_section_incoming: {
      const bool outgoing = kind_ == LegendrianKind::spectral_section_outgoing;
      DoubleSpacePoint out;
      out.theta = v[0];
      out.y1 = chart_point(v, 1, d, p.chart);
      out.y2 = chart_point(v, 1 + d, d, p.chart2);
      out.tau1 = out.tau2 = outgoing ? -lambda_ : lambda_;
      out.mu1 = out.mu2 = BVec::Zero(d);
      out.branch = outgoing ? Branch::section_outgoing : Branch::section_incoming;
      return out;
    }
    case LegendrianKind::diagonal_conormal: {
      DoubleSpacePoint out;
      out.theta = M_PI / 4;
      out.y1 = out.y2 = chart_point(v, 1, d, p.chart);
      out.tau1 = v[0] * std::sin(out.theta);
      out.tau2 = -v[0] * std::cos(out.theta);
      out.mu1 = covector(v, 1 + d, d);
      out.mu2 = -out.mu1;
      out.branch = Branch::diagonal_conormal;
      return out;
    }
  }
  throw DomainError("unhandled Legendrian kind");
}

LegendrianPoint LegendrianSampler::sample_poisson(const SamplerParams& p,
                                                  bool outgoing) const {
  const int d = metric_.dimension();
  const double s = p.values[0];
  const CosphereState start = direction_at(chart_point(p.values, 1, d, p.chart), p, 1 + d);
  const FlowResult end = flow(metric_, start, outgoing ? s : s - M_PI, options_.flow);
  PoissonLegendrianPoint out;
  out.y = end.state.point;
  out.y_prime = start.point;
  out.tau = lambda_ * std::cos(s);
  out.mu = lambda_ * std::sin(s) * end.state.mu;
  out.mu_prime = -lambda_ * std::sin(s) * start.mu;
  return out;
}

LegendrianPoint LegendrianSampler::sample_fibre(const SamplerParams& p) const {
  const double s = p.values[0];
  const CosphereState base = direction_at(*options_.fibre_base, p, 1);
  const FlowResult back = flow(metric_, base, -s, options_.flow);
  ScCotangentPoint out;
  out.y = back.state.point;
  out.tau = lambda_ * std::cos(s);
  out.mu = -lambda_ * std::sin(s) * back.state.mu;
  return out;
}

LegendrianPoint LegendrianSampler::sample_spectral(const SamplerParams& p) const {
  const int d = metric_.dimension();
  const auto& v = p.values;
  DoubleSpacePoint out;
  if (p.layout == ParamLayout::closure_stratum) {
    const bool upper = p.orientation >= 0;
    out.theta = v[0];
    out.y1 = out.y2 = chart_point(v, 1, d, p.chart);
    out.tau1 = upper ? lambda_ : -lambda_;
    out.tau2 = -out.tau1;
    out.mu1 = out.mu2 = BVec::Zero(d);
    out.branch = upper ? Branch::closure_upper : Branch::closure_lower;
    return out;
  }
  if (p.layout == ParamLayout::near_closure) {
    const double sigma = v[0];
    const ChartPoint y = chart_point(v, 1, d, p.chart);
    const BVec mu = covector(v, 1 + d, d);
    const double r = std::sqrt(metric_eval(metric_, y, mu));
    out.theta = std::atan(sigma);
    out.tau1 = lambda_ * std::sqrt(1.0 - sigma * sigma * r * r);
    out.tau2 = -lambda_ * std::sqrt(1.0 - r * r);
    if (r == 0.0) {
      out.y1 = out.y2 = y;
      out.mu1 = out.mu2 = BVec::Zero(d);
      out.branch = Branch::closure_upper;
      return out;
    }
    const CosphereState unit{y, mu / r};
    const FlowResult f1 = flow(metric_, unit, std::asin(sigma * r), options_.flow);
    const FlowResult f2 = flow(metric_, unit, std::asin(r), options_.flow);
    out.y1 = f1.state.point;
    out.mu1 = lambda_ * sigma * r * f1.state.mu;
    out.y2 = f2.state.point;
    out.mu2 = -lambda_ * r * f2.state.mu;
    return out;
  }
  const double s = v[0], s1 = v[1];
  const CosphereState start = direction_at(chart_point(v, 2, d, p.chart), p, 2 + d);
  const FlowResult f1 = flow(metric_, start, s1, options_.flow);
  const FlowResult f2 = flow(metric_, start, s, options_.flow);
  out.theta = std::atan2(std::sin(s1), std::sin(s));
  out.y1 = f1.state.point;
  out.tau1 = lambda_ * std::cos(s1);
  out.mu1 = lambda_ * std::sin(s1) * f1.state.mu;
  out.y2 = f2.state.point;
  out.tau2 = -lambda_ * std::cos(s);
  out.mu2 = -lambda_ * std::sin(s) * f2.state.mu;
  return out;
}

SamplerParams LegendrianSampler::random_params(std::mt19937_64& rng,
                                               ParamLayout layout,
                                               double margin) const {
  const int n = metric_.ambient_dimension();
  const int d = n - 1;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> arc(margin, M_PI - margin);
  std::uniform_real_distribution<double> quarter(margin, M_PI / 2 - margin);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SamplerParams p;
  p.layout = layout;
  p.orientation = unit(rng) < 0.5 ? 1 : -1;
  auto add_point = [&](int& chart) {
    const ChartPoint y = random_point(rng, n);
    chart = y.chart;
    push_point(p.values, y);
    return y;
  };
  auto add_angle = [&] {
    if (d == 2) p.values.push_back(angle(rng));
  };
  auto random_covector = [&](const ChartPoint& y, double norm) {
    EVec t = random_unit(rng, n);
    const EVec w = charts::embed(y);
    t -= w * w.dot(t);
    return CosphereState::normalized(metric_, y, charts::pull_covector(y, t)).mu * norm;
  };
  switch (kind_) {
    case LegendrianKind::outgoing_poisson:
    case LegendrianKind::incoming_poisson:
      p.values.push_back(arc(rng));
      add_point(p.chart);
      add_angle();
      break;
    case LegendrianKind::outgoing_poisson_section:
    case LegendrianKind::incoming_poisson_section:
      add_point(p.chart);
      add_point(p.chart2);
      break;
    case LegendrianKind::poisson_fibre:
      p.values.push_back(arc(rng));
      add_angle();
      break;
    case LegendrianKind::spectral:
      if (layout == ParamLayout::standard) {
        p.values.push_back(arc(rng));
        p.values.push_back(arc(rng));
        add_point(p.chart);
        add_angle();
      } else if (layout == ParamLayout::closure_stratum) {
        p.values.push_back(quarter(rng));
        add_point(p.chart);
      } else {
        p.values.push_back(margin + 2.0 * unit(rng));
        const ChartPoint y = add_point(p.chart);
        const BVec mu = random_covector(y, 0.45 * unit(rng));
        for (int i = 0; i < d; ++i) p.values.push_back(mu(i));
      }
      break;
    case LegendrianKind::spectral_section_outgoing:
    case LegendrianKind::spectral_section_incoming:
      p.values.push_back(quarter(rng));
      add_point(p.chart);
      add_point(p.chart2);
      break;
    case LegendrianKind::diagonal_conormal: {
      p.values.push_back(lambda_ * (4.0 * unit(rng) - 2.0));
      const ChartPoint y = add_point(p.chart);
      const BVec nu = random_covector(y, lambda_ * unit(rng));
      for (int i = 0; i < d; ++i) p.values.push_back(nu(i));
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Contact form

ContactCoordinates contact_coordinates(const LegendrianPoint& point) {
  ContactCoordinates c;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ScCotangentPoint>) {
          c.tau = p.tau;
          c.blocks.emplace_back(p.y, p.mu);
        } else if constexpr (std::is_same_v<T, PoissonLegendrianPoint>) {
          c.tau = p.tau;
          c.blocks.emplace_back(p.y, p.mu);
          c.blocks.emplace_back(p.y_prime, p.mu_prime);
        } else {
          c.tau = p.tau();
          c.scalars.emplace_back(p.theta, p.eta());
          c.blocks.emplace_back(p.y1, p.mu1_tilde());
          c.blocks.emplace_back(p.y2, p.mu2_tilde());
        }
      },
      point);
  return c;
}

namespace {

// Position differences of `a` and `b` relative to the base coordinates.
struct Offsets {
  double tau;
  std::vector<double> scalars;
  std::vector<BVec> blocks;
};

Offsets offsets(const ContactCoordinates& base, const ContactCoordinates& c) {
  Offsets o;
  o.tau = c.tau - base.tau;
  for (std::size_t i = 0; i < base.scalars.size(); ++i)
    o.scalars.push_back(c.scalars[i].first - base.scalars[i].first);
  for (std::size_t i = 0; i < base.blocks.size(); ++i) {
    const ChartPoint aligned = charts::to_chart(c.blocks[i].first, base.blocks[i].first.chart);
    o.blocks.push_back(aligned.y - base.blocks[i].first.y);
  }
  return o;
}

double apply_form(const ContactCoordinates& base, const Offsets& dv) {
  double acc = dv.tau;
  for (std::size_t i = 0; i < base.scalars.size(); ++i)
    acc += base.scalars[i].second * dv.scalars[i];
  for (std::size_t i = 0; i < base.blocks.size(); ++i)
    acc += base.blocks[i].second.dot(dv.blocks[i]);
  return acc;
}

Offsets combine(const std::vector<std::pair<double, const Offsets*>>& terms) {
  Offsets out = *terms.front().second;
  out.tau = 0.0;
  for (auto& s : out.scalars) s = 0.0;
  for (auto& b : out.blocks) b.setZero();
  for (const auto& [w, o] : terms) {
    out.tau += w * o->tau;
    for (std::size_t i = 0; i < out.scalars.size(); ++i) out.scalars[i] += w * o->scalars[i];
    for (std::size_t i = 0; i < out.blocks.size(); ++i) out.blocks[i] += w * o->blocks[i];
  }
  return out;
}

}  // namespace

ContactDefect contact_defect(const LegendrianSampler& sampler,
                             const SamplerParams& params,
                             std::span<const double> direction) {
  if (direction.size() != params.values.size())
    throw DomainError("direction dimension does not match the parameters");
  const double h = sampler.options().fd_step;
  auto shifted = [&](double t) {
    SamplerParams q = params;
    for (std::size_t i = 0; i < direction.size(); ++i) q.values[i] += t * direction[i];
    return q;
  };
  const ContactCoordinates base = contact_coordinates(sampler.sample(params));
  auto offset_at = [&](double t) {
    return offsets(base, contact_coordinates(sampler.sample(shifted(t))));
  };

  auto fits = [&](double from, double to) {
    for (double t = from; t <= to; t += 1.0)
      if (t != 0.0 && !sampler.in_domain(shifted(t * h))) return false;
    return true;
  };

  // fourth-order stencils where they fit, second order against the edge
  ContactDefect out;
  Offsets dv;
  if (fits(-2, 2)) {
    const Offsets p1 = offset_at(h), m1 = offset_at(-h), p2 = offset_at(2 * h),
                  m2 = offset_at(-2 * h);
    dv = combine({{8.0 / (12.0 * h), &p1}, {-8.0 / (12.0 * h), &m1},
                  {-1.0 / (12.0 * h), &p2}, {1.0 / (12.0 * h), &m2}});
  } else if (fits(1, 4) || fits(-4, -1)) {
    const double sign = fits(1, 4) ? 1.0 : -1.0;
    const Offsets f1 = offset_at(sign * h), f2 = offset_at(2 * sign * h),
                  f3 = offset_at(3 * sign * h), f4 = offset_at(4 * sign * h);
    const double c = sign / (12.0 * h);
    dv = combine({{48.0 * c, &f1}, {-36.0 * c, &f2}, {16.0 * c, &f3}, {-3.0 * c, &f4}});
    out.one_sided = true;
  } else if (fits(-1, 1)) {
    const Offsets plus = offset_at(h), minus = offset_at(-h);
    dv = combine({{0.5 / h, &plus}, {-0.5 / h, &minus}});
  } else {
    double sign = 0.0;
    if (fits(1, 2)) sign = 1.0;
    else if (fits(-2, -1)) sign = -1.0;
    if (sign == 0.0)
      throw DomainError("finite-difference stencil does not fit in the parameter domain");
    const Offsets one = offset_at(sign * h), two = offset_at(2 * sign * h);
    dv = combine({{sign * 2.0 / h, &one}, {-sign * 0.5 / h, &two}});
    out.one_sided = true;
  }
  out.value = std::abs(apply_form(base, dv));
  return out;
}

double characteristic_defect(const BoundaryMetric& m, const DoubleSpacePoint& p,
                             double lambda) {
  // |mut1|^2 / cos^2 in h(y1) equals |mu1|^2_h; likewise on the second factor.
  const double fibre = metric_eval(m, p.y1, p.mu1) + metric_eval(m, p.y2, p.mu2);
  const double t = p.tau(), e = p.eta();
  return std::abs(t * t + e * e + fibre - 2.0 * lambda * lambda);
}

// ---------------------------------------------------------------------------
// Bicharacteristic flow

namespace {

// State (theta, y1, y2, tau, eta, mut1, mut2) with charts carried alongside.
using BichState = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 11, 1>;

struct BichLayout {
  int d;
  int y1() const { return 1; }
  int y2() const { return 1 + d; }
  int tau() const { return 1 + 2 * d; }
  int eta() const { return 2 + 2 * d; }
  int m1() const { return 3 + 2 * d; }
  int m2() const { return 3 + 3 * d; }
  int size() const { return 3 + 4 * d; }
};

struct BichField {
  const BoundaryMetric* metric;
  BichLayout lay;
  int chart1, chart2;

  BichState operator()(const BichState& x) const {
    const int d = lay.d;
    const double th = x(0);
    const double c = std::cos(th), s = std::sin(th);
    const ChartPoint p1{chart1, x.segment(lay.y1(), d)};
    const ChartPoint p2{chart2, x.segment(lay.y2(), d)};
    const BVec m1 = x.segment(lay.m1(), d), m2 = x.segment(lay.m2(), d);
    const double e1 = std::exp(-2.0 * metric->log_conformal_factor(p1));
    const double e2 = std::exp(-2.0 * metric->log_conformal_factor(p2));
    const double a1 = e1 * m1.squaredNorm(), a2 = e2 * m2.squaredNorm();
    const double tau = x(lay.tau()), eta = x(lay.eta());
    const double htil = eta * eta + a1 / (c * c) + a2 / (s * s);
    BichState out(lay.size());
    out(0) = 2.0 * eta;
    out.segment(lay.y1(), d) = 2.0 * e1 * m1 / (c * c);
    out.segment(lay.y2(), d) = 2.0 * e2 * m2 / (s * s);
    out(lay.tau()) = -2.0 * htil;
    out(lay.eta()) = 2.0 * tau * eta - 2.0 * a1 * s / (c * c * c) +
                     2.0 * a2 * c / (s * s * s);
    out.segment(lay.m1(), d) =
        2.0 * tau * m1 + 2.0 * metric->log_conformal_gradient(p1) * a1 / (c * c);
    out.segment(lay.m2(), d) =
        2.0 * tau * m2 + 2.0 * metric->log_conformal_gradient(p2) * a2 / (s * s);
    return out;
  }
};

BichState pack(const BichLayout& lay, const DoubleSpacePoint& p) {
  const int d = lay.d;
  BichState x(lay.size());
  x(0) = p.theta;
  x.segment(lay.y1(), d) = p.y1.y;
  x.segment(lay.y2(), d) = p.y2.y;
  x(lay.tau()) = p.tau();
  x(lay.eta()) = p.eta();
  x.segment(lay.m1(), d) = p.mu1_tilde();
  x.segment(lay.m2(), d) = p.mu2_tilde();
  return x;
}

DoubleSpacePoint unpack(const BichLayout& lay, const BichState& x, int chart1,
                        int chart2) {
  const int d = lay.d;
  return DoubleSpacePoint::from_polar(
      x(0), ChartPoint{chart1, x.segment(lay.y1(), d)},
      ChartPoint{chart2, x.segment(lay.y2(), d)}, x(lay.tau()), x(lay.eta()),
      x.segment(lay.m1(), d), x.segment(lay.m2(), d));
}

void maybe_switch(const BichLayout& lay, BichState& x, int& chart, int offset_y,
                  int offset_m) {
  const int d = lay.d;
  const ChartPoint p{chart, x.segment(offset_y, d)};
  if (p.y.norm() <= charts::kSwitchRadius) return;
  const int other = 1 - chart;
  const BVec mu = charts::covector_to_chart(p, x.segment(offset_m, d), other);
  x.segment(offset_y, d) = charts::to_chart(p, other).y;
  x.segment(offset_m, d) = mu;
  chart = other;
}

}  // namespace

BicharacteristicTrajectory bicharacteristic_flow(const BoundaryMetric& m,
                                                 const DoubleSpacePoint& start,
                                                 double lambda, double t,
                                                 const BicharacteristicOptions& opt) {
  const double defect = characteristic_defect(m, start, lambda);
  if (defect > 1e-6)
    throw DomainError("bicharacteristic flow needs a characteristic point (defect " +
                      std::to_string(defect) + ")");
  if (opt.samples < 2) throw DomainError("trajectory needs at least two samples");
  const BichLayout lay{m.dimension()};
  int chart1 = start.y1.chart, chart2 = start.y2.chart;
  BichState x = pack(lay, start);

  BicharacteristicTrajectory out;
  out.times.push_back(0.0);
  out.points.push_back(start);
  if (t == 0.0) return out;

  const double dir = t > 0 ? 1.0 : -1.0;
  double now = 0.0;
  double h = dir * std::min(0.01, std::abs(t));
  BichState err(lay.size());
  for (int k = 1; k < opt.samples; ++k) {
    const double target = t * k / (opt.samples - 1);
    while (dir * (target - now) > 0.0) {
      if (dir * (now + h - target) > 0.0) h = target - now;
      if (std::abs(h) < 1e-14)
        throw ConvergenceError("bicharacteristic step size underflow", std::abs(h));
      BichField field{&m, lay, chart1, chart2};
      const BichState trial = detail::dormand_prince_step(field, x, h, &err);
      const double e = detail::error_norm(err, x, opt.tolerance);
      const bool inside = trial.allFinite() && trial(0) > 0.0 && trial(0) < M_PI / 2;
      if (std::isfinite(e) && e <= 1.0 && inside) {
        x = trial;
        now += h;
        maybe_switch(lay, x, chart1, lay.y1(), lay.m1());
        maybe_switch(lay, x, chart2, lay.y2(), lay.m2());
        h *= detail::next_step_factor(e);
      } else if (std::isfinite(e) && e <= 1.0) {
        if (std::abs(h) < 1e-10) {
          out.truncated = true;
          return out;
        }
        h *= 0.25;
      } else {
        h *= std::isfinite(e) ? detail::next_step_factor(e) : 0.2;
      }
    }
    out.times.push_back(now);
    DoubleSpacePoint p = unpack(lay, x, chart1, chart2);
    out.points.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nearest-point index

std::vector<double> double_space_features(const DoubleSpacePoint& p) {
  std::vector<double> f;
  f.push_back(p.theta);
  const EVec w1 = charts::embed(p.y1), w2 = charts::embed(p.y2);
  const EVec x1 = charts::embed_covector(p.y1, p.mu1);
  const EVec x2 = charts::embed_covector(p.y2, p.mu2);
  for (int i = 0; i < w1.size(); ++i) f.push_back(w1(i));
  for (int i = 0; i < w2.size(); ++i) f.push_back(w2(i));
  f.push_back(p.tau1);
  f.push_back(p.tau2);
  for (int i = 0; i < x1.size(); ++i) f.push_back(x1(i));
  for (int i = 0; i < x2.size(); ++i) f.push_back(x2(i));
  return f;
}

struct SpectralLegendrianIndex::Impl {
  const LegendrianSampler* sampler;
  std::vector<SamplerParams> params;
  detail::KdTree tree;
  std::size_t dim = 0;
};

SpectralLegendrianIndex::SpectralLegendrianIndex(const LegendrianSampler& sampler,
                                                 std::size_t grid_size,
                                                 std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
  if (sampler.kind() != LegendrianKind::spectral)
    throw DomainError("nearest-point index is built for the spectral Legendrian");
  impl_->sampler = &sampler;
  std::mt19937_64 rng(seed);
  std::vector<double> data;
  impl_->params.reserve(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    SamplerParams p = sampler.random_params(rng, ParamLayout::standard, 1e-3);
    const auto pt = std::get<DoubleSpacePoint>(sampler.sample(p));
    const auto f = double_space_features(pt);
    impl_->dim = f.size();
    data.insert(data.end(), f.begin(), f.end());
    impl_->params.push_back(std::move(p));
  }
  impl_->tree = detail::KdTree(std::move(data), impl_->dim);
}

SpectralLegendrianIndex::~SpectralLegendrianIndex() = default;
SpectralLegendrianIndex::SpectralLegendrianIndex(SpectralLegendrianIndex&&) noexcept = default;
SpectralLegendrianIndex& SpectralLegendrianIndex::operator=(SpectralLegendrianIndex&&) noexcept =
    default;

std::size_t SpectralLegendrianIndex::size() const { return impl_->params.size(); }

namespace {

Eigen::VectorXd feature_vector(const DoubleSpacePoint& p) {
  const auto f = double_space_features(p);
  return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

}  // namespace

SpectralLegendrianIndex::Match SpectralLegendrianIndex::nearest(
    const DoubleSpacePoint& p) const {
  const LegendrianSampler& sampler = *impl_->sampler;
  const Eigen::VectorXd target = feature_vector(p);
  const auto [idx, d2] = impl_->tree.nearest(target.data());
  Match match{std::sqrt(d2), std::sqrt(d2), impl_->params[idx]};

  // Gauss-Newton (Levenberg damped) in parameter space.
  SamplerParams cur = match.params;
  auto residual = [&](const SamplerParams& q) -> Eigen::VectorXd {
    return feature_vector(std::get<DoubleSpacePoint>(sampler.sample(q))) - target;
  };
  Eigen::VectorXd r = residual(cur);
  double damping = 1e-6;
  const std::size_t k = cur.values.size();
  for (int it = 0; it < 40 && r.norm() > 1e-13; ++it) {
    Eigen::MatrixXd jac(r.size(), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
      const double step = 1e-7;
      SamplerParams a = cur, b = cur;
      a.values[j] += step;
      b.values[j] -= step;
      if (sampler.in_domain(a) && sampler.in_domain(b)) {
        jac.col(static_cast<Eigen::Index>(j)) = (residual(a) - residual(b)) / (2 * step);
      } else if (sampler.in_domain(a)) {
        jac.col(static_cast<Eigen::Index>(j)) = (residual(a) - r) / step;
      } else {
        jac.col(static_cast<Eigen::Index>(j)) = (r - residual(b)) / step;
      }
    }
    const Eigen::MatrixXd normal =
        jac.transpose() * jac +
        damping * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k),
                                            static_cast<Eigen::Index>(k));
    const Eigen::VectorXd delta = normal.ldlt().solve(-jac.transpose() * r);
    SamplerParams next = cur;
    for (std::size_t j = 0; j < k; ++j) next.values[j] += delta(static_cast<Eigen::Index>(j));
    if (!sampler.in_domain(next)) {
      damping *= 10.0;
      continue;
    }
    const Eigen::VectorXd rn = residual(next);
    if (rn.norm() < r.norm()) {
      cur = std::move(next);
      r = rn;
      damping = std::max(1e-12, damping * 0.1);
      if (delta.norm() < 1e-14) break;
    } else {
      damping *= 10.0;
      if (damping > 1e6) break;
    }
  }
  match.distance = std::min(match.grid_distance, r.norm());
  if (r.norm() <= match.grid_distance) match.params = cur;
  return match;
}

// ---------------------------------------------------------------------------
// Conic limit

ConicProfile conic_limit_profile(const BoundaryMetric& m, double lambda,
                                 double sigma, const CosphereState& start,
                                 std::span<const double> path) {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  SamplerOptions opt;
  opt.flow = FlowOptions{};
  const LegendrianSampler sampler(LegendrianKind::spectral, m, lambda, opt);
  const int d = m.dimension();
  // recover the angle parameter of the starting direction
  SamplerParams p;
  p.chart = start.point.chart;
  double alpha = 0.0;
  if (d == 2) {
    alpha = std::atan2(start.mu(1), start.mu(0));
  } else {
    p.orientation = start.mu(0) >= 0 ? 1 : -1;
  }
  ConicProfile out;
  for (double s : path) {
    if (!(s > 0.0) || sigma * std::sin(s) > 1.0)
      throw DomainError("conic path parameter outside the spectral Legendrian");
    const double s1 = M_PI - std::asin(sigma * std::sin(s));
    p.values = {s, s1};
    for (int i = 0; i < d; ++i) p.values.push_back(start.point.y(i));
    if (d == 2) p.values.push_back(alpha);
    const auto pt = std::get<DoubleSpacePoint>(sampler.sample(p));
    ConicProfileEntry e;
    e.s = s;
    e.mu1_norm = std::sqrt(metric_eval(m, pt.y1, pt.mu1));
    e.mu2_norm = std::sqrt(metric_eval(m, pt.y2, pt.mu2));
    e.sigma = pt.sigma();
    e.ratio_error = std::abs(e.mu1_norm / e.mu2_norm - sigma);
    e.tau1 = pt.tau1;
    e.tau2 = pt.tau2;
    e.mu2_direction = charts::embed_covector(pt.y2, pt.mu2).normalized();
    e.endpoint_distance = geodesic_distance(m, pt.y1, pt.y2);
    out.entries.push_back(std::move(e));
  }
  out.limit_tau1 = -lambda;
  out.limit_tau2 = -lambda;
  out.limit_section = Branch::section_outgoing;
  return out;
}

// ---------------------------------------------------------------------------
// Propagation

double cotangent_distance(const ScCotangentPoint& a, const ScCotangentPoint& b) {
  const double dw = (charts::embed(a.y) - charts::embed(b.y)).squaredNorm();
  const double dxi =
      (charts::embed_covector(a.y, a.mu) - charts::embed_covector(b.y, b.mu)).squaredNorm();
  return std::sqrt(dw + (a.tau - b.tau) * (a.tau - b.tau) + dxi);
}

std::vector<ScCotangentPoint> PropagationSet::points() const {
  std::vector<ScCotangentPoint> out = seeds;
  for (const Ray& r : rays) out.insert(out.end(), r.points.begin(), r.points.end());
  return out;
}

double PropagationSet::distance(const BoundaryMetric&, const ScCotangentPoint& p) const {
  const double xi = charts::embed_covector(p.y, p.mu).norm();
  double best = std::hypot(p.tau + lambda, xi);
  for (const auto& s : seeds) best = std::min(best, cotangent_distance(s, p));
  for (const Ray& r : rays)
    for (const auto& q : r.points) best = std::min(best, cotangent_distance(q, p));
  return best;
}

PropagationSet propagation_set(const BoundaryMetric& m, double lambda,
                               std::span<const ScCotangentPoint> wf_in,
                               const PropagationOptions& opt) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (opt.points_per_ray < 1) throw DomainError("rays need at least one point");
  PropagationSet out;
  out.lambda = lambda;
  out.seeds.assign(wf_in.begin(), wf_in.end());
  const double l2 = lambda * lambda;
  for (std::size_t i = 0; i < wf_in.size(); ++i) {
    const ScCotangentPoint& seed = wf_in[i];
    const double h = metric_eval(m, seed.y, seed.mu);
    if (std::abs(seed.tau * seed.tau + h - l2) > opt.shell_tolerance * l2) continue;
    const double norm = std::sqrt(h);
    if (norm <= opt.shell_tolerance * lambda) {
      if (seed.tau > 0) out.incoming_seeds.push_back(i);
      continue;
    }
    const double s = std::atan2(norm, seed.tau);
    const CosphereState dir{seed.y, seed.mu / norm};
    Ray ray;
    ray.seed = i;
    const double span = M_PI - s;
    double prev = 0.0;
    CosphereState state = dir;
    for (int k = 1; k <= opt.points_per_ray; ++k) {
      const double t = span * k / opt.points_per_ray;
      state = flow(m, state, t - prev).state;
      prev = t;
      ScCotangentPoint q;
      q.y = state.point;
      q.tau = lambda * std::cos(s + t);
      q.mu = lambda * std::sin(s + t) * state.mu;
      ray.t.push_back(t);
      ray.points.push_back(std::move(q));
    }
    out.rays.push_back(std::move(ray));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_double_space_csv(std::ostream& os, std::span<const DoubleSpacePoint> pts) {
  const int d = pts.empty() ? 2 : static_cast<int>(pts.front().y1.y.size());
  os << "theta";
  for (int i = 0; i < d; ++i) os << ",y1_" << i;
  for (int i = 0; i < d; ++i) os << ",y2_" << i;
  os << ",tau1,tau2";
  for (int i = 0; i < d; ++i) os << ",mu1_" << i;
  for (int i = 0; i < d; ++i) os << ",mu2_" << i;
  os << ",branch,chart1,chart2\n";
  for (const auto& p : pts) {
    os << num(p.theta);
    for (int i = 0; i < d; ++i) os << ',' << num(p.y1.y(i));
    for (int i = 0; i < d; ++i) os << ',' << num(p.y2.y(i));
    os << ',' << num(p.tau1) << ',' << num(p.tau2);
    for (int i = 0; i < d; ++i) os << ',' << num(p.mu1(i));
    for (int i = 0; i < d; ++i) os << ',' << num(p.mu2(i));
    os << ',' << to_string(p.branch) << ',' << p.y1.chart << ',' << p.y2.chart << '\n';
  }
}

std::string double_space_json(std::span<const DoubleSpacePoint> pts) {
  auto vec = [](const BVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& p : pts) {
    nlohmann::ordered_json r;
    r["theta"] = p.theta;
    r["y1"] = vec(p.y1.y);
    r["y2"] = vec(p.y2.y);
    r["tau1"] = p.tau1;
    r["tau2"] = p.tau2;
    r["mu1"] = vec(p.mu1);
    r["mu2"] = vec(p.mu2);
    r["branch"] = to_string(p.branch);
    r["chart1"] = p.y1.chart;
    r["chart2"] = p.y2.chart;
    out.push_back(std::move(r));
  }
  return out.dump(1) + "\n";
}

}  // namespace conicscat
