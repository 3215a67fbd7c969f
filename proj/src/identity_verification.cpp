#include "conicscat/identity_verification.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "conicscat/contact_legendrian.hpp"
#include "conicscat/euclidean_kernels.hpp"
#include "conicscat/errors.hpp"
#include "conicscat/wavefront_probe.hpp"
#include "json.hpp"

namespace conicscat {

namespace {

constexpr cplx I(0.0, 1.0);

double ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double blend(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
double blend_prime(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

std::pair<double, double> step_and_slope(double r, double lo, double hi) {
  const double t = (r - lo) / (hi - lo);
  if (t <= 0.0) return {0.0, 0.0};
  if (t >= 1.0) return {1.0, 0.0};
  const double a = blend(t), b = blend(1.0 - t);
  const double da = blend_prime(t), db = -blend_prime(1.0 - t);
  const double s = a + b;
  return {a / s, (da * b - a * db) / (s * s) / (hi - lo)};
}

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double tail_index(const StoneSetup& s) {
  const double nu = s.l + 0.5 * (s.n - 2);
  return std::sqrt(nu * nu + s.potential.tail_coefficient());
}

double mode_density(const StoneSetup& s, double lambda) {
  ModeOptions opt = s.options;
  opt.forcing_support = std::max(opt.forcing_support, s.support);
  ModeSolver solver({s.n, s.l, lambda, s.potential}, opt);
  return std::norm(solver.poisson_adjoint(s.f)) / (2.0 * M_PI);
}

double transform_density(const StoneSetup& s, double lambda) {
  const double nu = s.l + 0.5 * (s.n - 2);
  auto part = [&](bool imag) {
    return GK::integrate(
        [&](double r) {
          const cplx v = s.f(r) * std::pow(r, 0.5 * s.n) * boost::math::cyl_bessel_j(nu, lambda * r);
          return imag ? v.imag() : v.real();
        },
        0.0, s.support, 15, 1e-13);
  };
  const double re = part(false), im = part(true);
  return lambda * (re * re + im * im);
}

void check_window(double a, double b) {
  if (!(a >= 0.0) || !(b > a)) throw DomainError("spectral window needs 0 <= a < b");
}

}  // namespace

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::inconclusive: return "inconclusive";
  }
  return "fail";
}

void CheckReport::settle() {
  passed = residual <= tolerance;
  if (status != CheckStatus::inconclusive) status = passed ? CheckStatus::pass : CheckStatus::fail;
}

std::string reports_json(const std::vector<CheckReport>& reports, bool with_runtime) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json o;
    o["name"] = r.name;
    o["status"] = to_string(r.status);
    o["passed"] = r.passed;
    if (std::isfinite(r.residual)) o["residual"] = r.residual;
    else o["residual"] = nullptr;
    o["tolerance"] = r.tolerance;
    o["config_hash"] = r.config_hash;
    if (with_runtime) o["runtime"] = r.runtime;
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.details) {
      if (std::isfinite(v)) d[k] = v;
      else d[k] = nullptr;
    }
    o["details"] = d;
    if (!r.message.empty()) o["message"] = r.message;
    arr.push_back(o);
  }
  return arr.dump(1);
}

std::string timings_json(const std::vector<CheckReport>& reports) {
  nlohmann::ordered_json o = nlohmann::ordered_json::object();
  for (const auto& r : reports) o[r.name] = r.runtime;
  return o.dump(1);
}

// ---------------------------------------------------------------- pairing

PairingInput manufactured_outgoing(const ModeSolver& solver, double r_lo, double r_hi) {
  if (!(r_hi > r_lo) || !(r_lo > 0.0)) throw DomainError("cutoff needs 0 < r_lo < r_hi");
  const auto& r = solver.grid();
  if (r_hi >= r.back()) throw DomainError("cutoff extends past the grid");
  const ModeSolution& psi = solver.jost(1);
  PairingInput out;
  out.problem = solver.problem();
  out.w.resize(r.size());
  std::vector<cplx> dw(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    const auto [chi, dchi] = step_and_slope(r[j], r_lo, r_hi);
    out.w[j] = chi * psi.w[j];
    dw[j] = dchi * psi.w[j] + chi * psi.dw[j];
  }
  out.forcing = solver.apply(out.w);
  std::tie(out.a_minus, out.a_plus) = solver.match(out.w, dw);
  return out;
}

PairingInput regular_input(const ModeSolver& solver) {
  const ModeSolution& reg = solver.regular();
  PairingInput out;
  out.problem = solver.problem();
  out.w = reg.w;
  out.forcing = solver.apply(reg.w);
  out.a_minus = reg.a_minus;
  out.a_plus = reg.a_plus;
  return out;
}

PairingSides pairing_sides(const ModeSolver& solver, const PairingInput& u1,
                           const PairingInput& u2) {
  const ModeProblem& p = solver.problem();
  for (const PairingInput* u : {&u1, &u2}) {
    if (u->problem.lambda != p.lambda) throw DomainError("pairing inputs at different lambda");
    if (u->problem.n != p.n || u->problem.l != p.l)
      throw DomainError("pairing inputs belong to a different mode");
  }
  const std::size_t m = solver.grid().size();
  if (u1.w.size() != m || u2.w.size() != m || u1.forcing.size() != m || u2.forcing.size() != m)
    throw DomainError("pairing samples do not match the grid");
  PairingSides out;
  out.boundary = 2.0 * I * p.lambda *
                 (u1.a_plus * std::conj(u2.a_plus) - u1.a_minus * std::conj(u2.a_minus));
  std::vector<cplx> integrand(m);
  for (std::size_t j = 0; j < m; ++j)
    integrand[j] = u1.w[j] * std::conj(u2.forcing[j]) - u1.forcing[j] * std::conj(u2.w[j]);
  out.interior = solver.integrate(integrand);
  return out;
}

CheckReport boundary_pairing_check(const ModeSolver& solver, const PairingInput& u1,
                                   const PairingInput& u2, double tolerance) {
  const auto sides = pairing_sides(solver, u1, u2);
  const double lambda = solver.problem().lambda;
  const double scale = 2.0 * lambda * std::hypot(std::abs(u1.a_minus), std::abs(u1.a_plus)) *
                       std::hypot(std::abs(u2.a_minus), std::abs(u2.a_plus));
  const double eps = 1e-14 * scale + std::numeric_limits<double>::min();
  CheckReport rep;
  rep.name = "boundary_pairing";
  rep.tolerance = tolerance;
  rep.residual = std::abs(sides.boundary - sides.interior) /
                 (std::abs(sides.boundary) + std::abs(sides.interior) + eps);
  rep.details = {{"lambda", lambda},
                 {"boundary_re", sides.boundary.real()},
                 {"boundary_im", sides.boundary.imag()},
                 {"interior_re", sides.interior.real()},
                 {"interior_im", sides.interior.imag()}};
  rep.settle();
  return rep;
}

// ---------------------------------------------------------- Stone / Parseval

SpectralMass spectral_mass(const StoneSetup& s, double a, double b) {
  check_window(a, b);
  if (!s.f) throw DomainError("no function to decompose");
  const double floor = s.lambda_floor;
  SpectralMass out;
  if (b > floor) {
    double err = 0.0;
    const double lo = std::max(a, floor);
    out.value = GK::integrate([&](double lambda) { return mode_density(s, lambda); }, lo, b, 12,
                              1e-10, &err);
    // boost reports the error on the reference interval [-1, 1]
    out.error = 0.5 * (b - lo) * err;
  }
  if (a < floor) {
    // density ~ lambda^{2 nu + 1} at low energy
    const double k = 2.0 * tail_index(s) + 2.0;
    const double top = std::min(b, floor);
    const double tail =
        mode_density(s, floor) * (std::pow(top, k) - std::pow(a, k)) / (k * std::pow(floor, k - 1));
    out.value += tail;
    out.error += 0.01 * tail;
  }
  return out;
}

double transform_mass(const StoneSetup& s, double a, double b) {
  check_window(a, b);
  if (!s.f) throw DomainError("no function to decompose");
  return GK::integrate([&](double lambda) { return transform_density(s, lambda); }, a, b, 15,
                       1e-12);
}

double mode_norm_squared(const StoneSetup& s) {
  if (!s.f) throw DomainError("no function to decompose");
  return GK::integrate([&](double r) { return std::norm(s.f(r)) * std::pow(r, s.n - 1); }, 0.0,
                       s.support, 15, 1e-13);
}

double exhaustive_upper(const StoneSetup& s) {
  const double step = 0.25;
  double peak = 0.0, peak_at = 0.0;
  for (double lambda = step; lambda <= 400.0; lambda += step) {
    const double d = transform_density(s, lambda);
    if (d > peak) {
      peak = d;
      peak_at = lambda;
    } else if (lambda > peak_at && d < 1e-16 * peak) {
      return lambda;
    }
  }
  throw ConvergenceError("transform mass does not decay by lambda = 400", peak);
}

CheckReport stone_parseval_check(const StoneSetup& s, double a, double b,
                                 StoneReference reference, double tolerance) {
  CheckReport rep;
  rep.name = "stone_parseval";
  rep.tolerance = tolerance;
  double ref = 0.0;
  if (reference == StoneReference::transform) {
    if (s.potential.family() != RadialPotential::Family::free)
      throw DomainError("the transform reference is the free one");
    ref = transform_mass(s, a, b);
  } else {
    ref = mode_norm_squared(s);
  }
  const SpectralMass mass = spectral_mass(s, a, b);
  rep.residual = ratio(std::abs(mass.value - ref), std::abs(ref));
  rep.details = {{"a", a},
                 {"b", b},
                 {"spectral_mass", mass.value},
                 {"reference", ref},
                 {"quadrature_error", mass.error}};
  if (mass.error > 0.5 * tolerance * std::max(std::abs(ref), std::abs(mass.value))) {
    rep.status = CheckStatus::inconclusive;
    rep.message = "quadrature error estimate comparable to the tolerance";
  }
  rep.settle();
  return rep;
}

// ----------------------------------------------------------- jump, S, unitarity

CheckReport jump_check(int n, const std::vector<double>& lambdas, const std::vector<int>& ls,
                       const RadialPotential& v, const ModeOptions& opt, JumpTolerances tol) {
  ModeOptions o = opt;
  o.forcing_support = std::max(o.forcing_support, 12.0);
  double mode = 0.0, kernel = 0.0;
  std::vector<double> radii;
  for (int k = 1; k <= 60; ++k) radii.push_back(0.5 * k);
  for (double lambda : lambdas) {
    for (int l : ls) {
      const auto f = [l](double r) { return cplx(std::pow(r, l) * std::exp(-0.5 * r * r)); };
      mode = std::max(mode, jump_identity_mode({n, l, lambda, v}, f, o));
    }
    kernel = std::max(kernel, kernel_jump_check(3, lambda, radii));
  }
  CheckReport rep;
  rep.name = "resolvent_jump";
  rep.tolerance = 1.0;
  rep.residual = std::max(mode / tol.mode, kernel / tol.kernel);
  rep.details = {{"mode_residual", mode},
                 {"mode_tolerance", tol.mode},
                 {"kernel_residual", kernel},
                 {"kernel_tolerance", tol.kernel}};
  rep.settle();
  return rep;
}

double smatrix_relation_residual(const ModeProblem& p, cplx a, const ModeOptions& opt) {
  ModeOptions half = opt;
  half.points_per_wavelength *= 2.0;
  half.max_step *= 0.5;
  ModeSolver coarse(p, opt), fine(p, half);
  const auto lhs = coarse.poisson(a, 1);
  const auto rhs = fine.poisson(fine.smatrix() * a, -1);
  double worst = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < lhs.w.size() && 2 * j < rhs.w.size(); ++j) {
    worst = std::max(worst, std::abs(lhs.w[j] - rhs.w[2 * j]));
    scale = std::max(scale, std::abs(lhs.w[j]));
  }
  return ratio(worst, scale);
}

CheckReport smatrix_relation_check(int n, const std::vector<double>& lambdas, int l_max,
                                   const RadialPotential& v, const ModeOptions& opt,
                                   double tolerance) {
  double worst = 0.0, worst_lambda = 0.0, worst_l = 0.0;
  for (double lambda : lambdas)
    for (int l = 0; l <= l_max; ++l) {
      const double r = smatrix_relation_residual({n, l, lambda, v}, cplx(0.6, 0.8), opt);
      if (r >= worst) {
        worst = r;
        worst_lambda = lambda;
        worst_l = l;
      }
    }
  CheckReport rep;
  rep.name = "smatrix_relation";
  rep.tolerance = tolerance;
  rep.residual = worst;
  rep.details = {{"worst_lambda", worst_lambda}, {"worst_l", worst_l}};
  rep.settle();
  return rep;
}

CheckReport unitarity_check(int n, const std::vector<double>& lambdas, int l_max,
                            const std::vector<RadialPotential>& potentials,
                            const ModeOptions& opt, double tolerance) {
  double worst = 0.0;
  double modes = 0.0;
  for (const auto& v : potentials)
    for (double lambda : lambdas)
      for (const auto& e : smatrix_diag(n, lambda, v, l_max, opt).entries) {
        worst = std::max(worst, std::abs(std::abs(e.s) - 1.0));
        modes += 1.0;
      }
  CheckReport rep;
  rep.name = "unitarity";
  rep.tolerance = tolerance;
  rep.residual = worst;
  rep.details = {{"modes", modes}};
  rep.settle();
  return rep;
}

// ----------------------------------------------------------------- propagation

CheckReport propagation_containment_check(const PropagationSetup& s, double tolerance) {
  if (s.n != 2 && s.n != 3) throw DomainError("dimension must be 2 or 3");
  if (s.sign != 1 && s.sign != -1) throw DomainError("sign must be +1 or -1");
  if (s.directions < 1) throw DomainError("need at least one direction");
  const double cut = s.bump_radius * s.bump_radius;
  const auto f = GridFunction::sample(s.n, s.bump_radius, s.spacing, [cut](const EVec& z) {
    const double q = z.squaredNorm();
    return q <= cut ? cplx(std::exp(-0.5 * q)) : cplx(0.0);
  });
  std::vector<EVec> dirs;
  for (int i = 0; i < s.directions; ++i) {
    const double a = 0.4 + 0.05 * i;
    EVec w(s.n);
    if (s.n == 3) w << std::sin(a), 0.0, std::cos(a);
    else w << std::sin(a), std::cos(a);
    dirs.push_back(w);
  }
  std::vector<double> radii;
  const int count = static_cast<int>(std::floor((s.r_end - s.r_start) / s.r_step + 1e-9)) + 1;
  for (int j = 0; j < count; ++j) radii.push_back(s.r_start + j * s.r_step);
  const auto u = resolvent_convolve_rays(s.lambda, f, s.sign, dirs, radii);
  const auto probe = wavefront_probe(u, s.lambda);

  const BoundaryMetric m = BoundaryMetric::round(s.n);
  const PropagationSet target = propagation_set(m, s.lambda, {});
  double worst = 0.0, tau_gap = 0.0, mu_max = 0.0;
  for (const Detection& d : probe.detections) {
    // conjugation maps the incoming section onto the outgoing one
    ScCotangentPoint p;
    p.y = d.y;
    p.tau = s.sign * d.tau;
    BVec e = BVec::Zero(s.n - 1);
    e(0) = 1.0;
    p.mu = s.sign * d.mu * e / std::sqrt(metric_eval(m, d.y, e));
    worst = std::max(worst, target.distance(m, p) / s.lambda);
    tau_gap = std::max(tau_gap, std::abs(d.tau + s.sign * s.lambda) / s.lambda);
    mu_max = std::max(mu_max, d.mu / s.lambda);
  }
  CheckReport rep;
  rep.name = "propagation_containment";
  rep.tolerance = tolerance;
  rep.residual = worst;
  rep.details = {{"lambda", s.lambda},
                 {"sign", double(s.sign)},
                 {"detections", double(probe.detections.size())},
                 {"max_tau_gap", tau_gap},
                 {"max_mu", mu_max}};
  if (probe.resolution_warning) {
    rep.status = CheckStatus::inconclusive;
    rep.message = probe.warning;
  } else if (probe.detections.empty()) {
    rep.status = CheckStatus::inconclusive;
    rep.message = "no wavefront detections";
  }
  rep.settle();
  return rep;
}

// ----------------------------------------------------------------- driver

std::vector<CheckReport> run_verification(const VerificationConfig& cfg, int jobs) {
  if (cfg.lambdas.empty()) throw DomainError("no energies to verify");
  if (cfg.l_max < 0) throw DomainError("l_max must be nonnegative");
  std::vector<std::pair<std::string, std::function<CheckReport()>>> tasks;
  tasks.emplace_back("boundary_pairing", [&] {
    ModeSolver solver({cfg.n, cfg.pairing_l, cfg.pairing_lambda, cfg.potential}, cfg.options);
    const auto u1 = manufactured_outgoing(solver, cfg.cut_start, cfg.cut_end);
    const auto u2 = regular_input(solver);
    return boundary_pairing_check(solver, u1, u2, cfg.tol_pairing);
  });
  tasks.emplace_back("stone_parseval", [&] {
    StoneSetup s;
    s.n = cfg.n;
    s.l = cfg.stone_l;
    s.potential = cfg.potential;
    s.options = cfg.options;
    const int l = cfg.stone_l;
    s.f = [l](double r) { return cplx(std::pow(r, l) * std::exp(-0.5 * r * r)); };
    s.support = std::sqrt(2.0 * (40.0 + l * std::log(40.0)));
    const double top = exhaustive_upper(s);
    const bool free = cfg.potential.family() == RadialPotential::Family::free;
    return stone_parseval_check(s, 0.0, top,
                                free ? StoneReference::transform : StoneReference::norm,
                                cfg.tol_stone);
  });
  tasks.emplace_back("resolvent_jump", [&] {
    return jump_check(cfg.n, cfg.lambdas, {0, cfg.l_max / 2, cfg.l_max}, cfg.potential,
                      cfg.options, cfg.tol_jump);
  });
  tasks.emplace_back("smatrix_relation", [&] {
    return smatrix_relation_check(cfg.n, cfg.lambdas, cfg.l_max, cfg.potential, cfg.options,
                                  cfg.tol_smatrix);
  });
  tasks.emplace_back("unitarity", [&] {
    std::vector<RadialPotential> pots{RadialPotential::free(), RadialPotential::bump(2.0, 1.5),
                                      RadialPotential::inverse_square(1.0, 1.0),
                                      RadialPotential::exponential(3.0)};
    if (cfg.potential.family() != RadialPotential::Family::free) pots.push_back(cfg.potential);
    return unitarity_check(cfg.n, cfg.lambdas, cfg.l_max, pots, cfg.options, cfg.tol_unitarity);
  });
  tasks.emplace_back("propagation_containment", [&] {
    return propagation_containment_check(cfg.propagation, cfg.tol_propagation);
  });

  std::vector<CheckReport> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      CheckReport rep;
      try {
        rep = tasks[i].second();
      } catch (const std::exception& e) {
        rep = CheckReport{};
        rep.name = tasks[i].first;
        rep.residual = std::numeric_limits<double>::infinity();
        rep.message = e.what();
        rep.settle();
      }
      rep.config_hash = cfg.config_hash;
      rep.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out[i] = std::move(rep);
    }
  };
  const int pool = std::clamp(jobs, 1, static_cast<int>(tasks.size()));
  std::vector<std::thread> threads;
  for (int k = 1; k < pool; ++k) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace conicscat
