#include "conicscat/euclidean_kernels.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/special_functions/legendre.hpp>
#include <boost/math/tools/minima.hpp>

#include "json.hpp"

namespace conicscat {

namespace {

constexpr cplx I{0.0, 1.0};
constexpr double kEuler = 0.57721566490153286061;
constexpr double kSwitch = 12.0;

struct GaussRule {
  std::vector<double> x, w;
};

// Gauss-Legendre rules on [-1, 1], cached by order
const GaussRule& gauss_legendre(int order) {
  static std::mutex lock;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> guard(lock);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;
  GaussRule rule;
  const auto zeros = boost::math::legendre_p_zeros<double>(order);
  for (double z : zeros) {
    const double d = boost::math::legendre_p_prime<double>(order, z);
    const double w = 2.0 / ((1.0 - z * z) * d * d);
    rule.x.push_back(z);
    rule.w.push_back(w);
    if (z != 0.0) {
      rule.x.push_back(-z);
      rule.w.push_back(w);
    }
  }
  return cache.emplace(order, std::move(rule)).first->second;
}

int bucket(int order) {
  int b = 32;
  while (b < order) b *= 2;
  return b;
}

int pick_order(int n, double lambda, double r, int order) {
  const int need = required_sphere_order(n, lambda, r);
  if (order == 0) return bucket(need + 8);
  if (order < need)
    throw DomainError("sphere quadrature order " + std::to_string(order) +
                      " is below the required " + std::to_string(need));
  return order;
}

void check_kernel_args(int n, double lambda, double r) {
  if (n != 2 && n != 3) throw DomainError("dimension must be 2 or 3");
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (!(r > 0.0)) throw DomainError("kernel evaluated at zero separation");
}

cplx kernel_value(int n, double lambda, double r, KernelKind kind) {
  switch (kind) {
    case KernelKind::spectral_projection: return sp_kernel(n, lambda, r);
    case KernelKind::resolvent_plus: return free_resolvent_kernel(n, lambda, r, 1);
    case KernelKind::resolvent_minus: return free_resolvent_kernel(n, lambda, r, -1);
  }
  return 0.0;
}

}  // namespace

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::spectral_projection: return "spectral_projection";
    case KernelKind::resolvent_plus: return "resolvent_plus";
    case KernelKind::resolvent_minus: return "resolvent_minus";
  }
  return "";
}

int required_sphere_order(int n, double lambda, double r) {
  const double a = lambda * std::abs(r);
  return static_cast<int>(std::ceil(n == 2 ? 4.0 * a : a)) + 16;
}

cplx sp_kernel(int n, double lambda, double r, int order) {
  check_kernel_args(n, lambda, r);
  const int m = pick_order(n, lambda, r, order);
  const double a = lambda * r;
  if (n == 3) {
    const GaussRule& g = gauss_legendre(m);
    cplx acc = 0.0;
    for (std::size_t k = 0; k < g.x.size(); ++k) acc += g.w[k] * std::polar(1.0, a * g.x[k]);
    const double c = lambda / (2.0 * std::pow(2.0 * M_PI, 3));
    return c * 2.0 * M_PI * acc;
  }
  cplx acc = 0.0;
  for (int k = 0; k < m; ++k) acc += std::polar(1.0, a * std::cos(2.0 * M_PI * k / m));
  return acc * (2.0 * M_PI / m) / (2.0 * std::pow(2.0 * M_PI, 2));
}

cplx sp_kernel(double lambda, const Eigen::Vector3d& separation, int order) {
  const double r = separation.norm();
  check_kernel_args(3, lambda, r);
  const int m = pick_order(3, lambda, r, order);
  const GaussRule& g = gauss_legendre(m);
  const int az = 2 * m;
  cplx acc = 0.0;
  for (std::size_t k = 0; k < g.x.size(); ++k) {
    const double ct = g.x[k], st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    cplx ring = 0.0;
    for (int j = 0; j < az; ++j) {
      const double ph = 2.0 * M_PI * j / az;
      const Eigen::Vector3d w(st * std::cos(ph), st * std::sin(ph), ct);
      ring += std::polar(1.0, lambda * separation.dot(w));
    }
    acc += g.w[k] * ring * (2.0 * M_PI / az);
  }
  return lambda / (2.0 * std::pow(2.0 * M_PI, 3)) * acc;
}

cplx hankel0(double x) {
  if (!(x > 0.0)) throw DomainError("Hankel function needs a positive argument");
  if (x <= kSwitch) {
    const double q = -0.25 * x * x;
    double term = 1.0, j0 = 1.0, tail = 0.0, harmonic = 0.0;
    for (int k = 1; k < 200; ++k) {
      term *= q / (double(k) * k);
      harmonic += 1.0 / k;
      j0 += term;
      tail += harmonic * term;
      if (std::abs(term) * (1.0 + harmonic) < 1e-18 && k > x) break;
    }
    const double y0 = 2.0 / M_PI * ((std::log(0.5 * x) + kEuler) * j0 - tail);
    return {j0, y0};
  }
  // Hankel expansion: J + iY = sqrt(2/(pi x)) e^{i(x - pi/4)} (P + iQ)
  double p = 0.0, q = 0.0, a = 1.0, smallest = 1.0;
  for (int k = 0; k < 60; ++k) {
    if (k > 0) a *= -double(2 * k - 1) * (2 * k - 1) / (8.0 * k * x);
    if (std::abs(a) > smallest) break;
    smallest = std::abs(a);
    const double s = (k / 2) % 2 == 0 ? 1.0 : -1.0;
    if (k % 2 == 0)
      p += s * a;
    else
      q += s * a;
  }
  return std::sqrt(2.0 / (M_PI * x)) * std::polar(1.0, x - 0.25 * M_PI) * cplx(p, q);
}

cplx free_resolvent_kernel(int n, double lambda, double r, int sign) {
  check_kernel_args(n, lambda, r);
  if (n == 3) return std::polar(1.0, sign * lambda * r) / (4.0 * M_PI * r);
  const cplx h = hankel0(lambda * r);
  return sign > 0 ? 0.25 * I * h : std::conj(0.25 * I * h);
}

std::vector<KernelSample> kernel_table(int n, double lambda, const std::vector<double>& radii,
                                       KernelKind kind) {
  std::vector<KernelSample> out;
  out.reserve(radii.size());
  for (double r : radii) out.push_back({r, kernel_value(n, lambda, r, kind), kind, n, lambda});
  return out;
}

void write_kernel_csv(std::ostream& os, const std::vector<KernelSample>& samples, bool header) {
  if (header) os << "r,re,im,kind\n";
  char buf[160];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", s.r, s.value.real(), s.value.imag());
    os << buf << to_string(s.kind) << '\n';
  }
}

double kernel_jump_check(int n, double lambda, const std::vector<double>& radii) {
  double worst = 0.0, scale = 0.0;
  for (double r : radii) {
    const cplx jump = free_resolvent_kernel(n, lambda, r, 1) - free_resolvent_kernel(n, lambda, r, -1);
    const cplx sp = 2.0 * M_PI * I * sp_kernel(n, lambda, r);
    worst = std::max(worst, std::abs(jump - sp));
    scale = std::max(scale, std::abs(jump));
  }
  return scale > 0.0 ? worst / scale : worst;
}

// ----------------------------------------------------------------- fitting

cplx OscillatoryFit::branch(int sign, double r) const {
  const cplx a = sign > 0 ? amp_plus : amp_minus;
  const cplx b = sign > 0 ? corr_plus : corr_minus;
  return std::polar(1.0, sign * lambda * r) * std::pow(r, -order) * (a + b / r);
}

OscillatoryFit fit_oscillations(const std::vector<double>& r, const std::vector<cplx>& values,
                                double lambda) {
  const std::size_t m = r.size();
  if (values.size() != m) throw DomainError("radii and values differ in length");
  if (m < 200) throw DomainError("oscillatory fit needs at least 200 samples");
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0) throw DomainError("samples must span two decades");
  if (lambda * *lo < 20.0) throw DomainError("samples must satisfy lambda r >= 20");

  // weighted by r^p the design no longer depends on p
  Eigen::MatrixXcd a(m, 4);
  for (std::size_t j = 0; j < m; ++j) {
    const cplx ep = std::polar(1.0, lambda * r[j]), em = std::conj(ep);
    a(j, 0) = ep;
    a(j, 1) = em;
    a(j, 2) = ep / r[j];
    a(j, 3) = em / r[j];
  }
  Eigen::VectorXd colnorm = a.colwise().norm();
  Eigen::MatrixXcd scaled = a * colnorm.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(scaled);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (!(cond < 1e10)) throw ConvergenceError("ill-conditioned oscillatory fit", cond);
  const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
  const Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m, 4);

  auto weighted = [&](double p) {
    Eigen::VectorXcd b(m);
    for (std::size_t j = 0; j < m; ++j) b(j) = values[j] * std::pow(r[j], p);
    return b;
  };
  auto misfit = [&](double p) {
    const Eigen::VectorXcd b = weighted(p);
    const double norm = b.norm();
    if (norm == 0.0) return 0.0;
    return (b - q * (q.adjoint() * b)).norm() / norm;
  };
  double best_p = 0.0, best = misfit(0.0);
  for (double p = 0.05; p <= 3.0 + 1e-12; p += 0.05) {
    const double v = misfit(p);
    if (v < best) {
      best = v;
      best_p = p;
    }
  }
  auto refine = [&](double centre) {
    return boost::math::tools::brent_find_minima(misfit, std::max(0.0, centre - 0.05),
                                                 centre + 0.05, 50);
  };
  auto refined = refine(best_p);
  Eigen::VectorXcd c = qr.solve(weighted(refined.first));
  // A r^{-p-1} is also matched by p with A = 0 and B = A: take the leading order
  const double lead = std::max(std::abs(c(0)), std::abs(c(1)));
  const double next = std::max(std::abs(c(2)), std::abs(c(3)));
  if (lead * *lo < 1e-3 * next) {
    refined = refine(refined.first + 1.0);
    c = qr.solve(weighted(refined.first));
  }

  OscillatoryFit fit;
  fit.lambda = lambda;
  fit.order = refined.first;
  fit.residual = refined.second;
  fit.condition = cond;
  fit.amp_plus = c(0);
  fit.amp_minus = c(1);
  fit.corr_plus = c(2);
  fit.corr_minus = c(3);
  const double top = std::max(std::abs(c(0)), std::abs(c(1)));
  fit.plus_present = top > 0.0 && std::abs(c(0)) >= 1e-3 * top;
  fit.minus_present = top > 0.0 && std::abs(c(1)) >= 1e-3 * top;
  return fit;
}

std::string fit_json(const OscillatoryFit& fit) {
  nlohmann::ordered_json j;
  auto pair = [](cplx z) { return nlohmann::ordered_json::array({z.real(), z.imag()}); };
  j["lambda"] = fit.lambda;
  j["order"] = fit.order;
  j["amp_plus"] = pair(fit.amp_plus);
  j["amp_minus"] = pair(fit.amp_minus);
  j["corr_plus"] = pair(fit.corr_plus);
  j["corr_minus"] = pair(fit.corr_minus);
  j["phase_rates"] = nlohmann::ordered_json::array();
  if (fit.plus_present) j["phase_rates"].push_back(fit.lambda);
  if (fit.minus_present) j["phase_rates"].push_back(-fit.lambda);
  j["residual"] = fit.residual;
  j["condition"] = fit.condition;
  return j.dump(1);
}

// ------------------------------------------------------------- convolution

double GridFunction::support_radius() const {
  double top = 0.0;
  for (const auto& v : values) top = std::max(top, std::abs(v));
  double radius = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (std::abs(values[k]) > 1e-15 * top) radius = std::max(radius, nodes[k].norm());
  return radius;
}

std::vector<cplx> resolvent_convolve(double lambda, const GridFunction& f, int sign,
                                     const std::vector<EVec>& points) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (f.n != 2 && f.n != 3) throw DomainError("dimension must be 2 or 3");
  if (f.spacing * lambda > 1.0)
    throw DomainError("grid spacing under-resolves the wavelength: need spacing <= " +
                      std::to_string(1.0 / lambda));
  const double support = f.support_radius();
  const double cell = std::pow(f.spacing, f.n);
  std::vector<cplx> out(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const EVec& x = points[i];
    if (x.size() != f.n) throw DomainError("evaluation point has the wrong dimension");
    if (x.norm() < 10.0 * support)
      throw DomainError("evaluation radius must be at least 10x the support radius");
    cplx acc = 0.0;
    for (std::size_t k = 0; k < f.nodes.size(); ++k)
      acc += free_resolvent_kernel(f.n, lambda, (x - f.nodes[k]).norm(), sign) * f.values[k];
    out[i] = acc * cell;
  }
  return out;
}

AngularSamples resolvent_convolve_rays(double lambda, const GridFunction& f, int sign,
                                       const std::vector<EVec>& directions,
                                       const std::vector<double>& radii) {
  AngularSamples u;
  u.n = f.n;
  u.radii = radii;
  u.directions = directions;
  std::vector<EVec> points;
  points.reserve(directions.size() * radii.size());
  for (const auto& d : directions)
    for (double r : radii) points.push_back(r * d.normalized());
  const auto values = resolvent_convolve(lambda, f, sign, points);
  u.values.resize(static_cast<Eigen::Index>(directions.size()),
                  static_cast<Eigen::Index>(radii.size()));
  for (std::size_t i = 0; i < directions.size(); ++i)
    for (std::size_t j = 0; j < radii.size(); ++j)
      u.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          values[i * radii.size() + j];
  return u;
}

}  // namespace conicscat
