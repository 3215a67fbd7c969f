#include "conicscat/radial_scattering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/bessel_prime.hpp>
#include <boost/numeric/odeint.hpp>

namespace conicscat {

namespace {

constexpr cplx I{0.0, 1.0};

double smooth_step(double t) {
  // 0 below 1/2, 1 above 1
  if (t <= 0.5) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = 2.0 * t - 1.0, b = 2.0 - 2.0 * t;
  const double ga = std::exp(-1.0 / a), gb = std::exp(-1.0 / b);
  return ga / (ga + gb);
}

using State = std::array<double, 4>;

struct Grid {
  double r0 = 0.0, h = 0.0;
  std::vector<double> r;
  double window_start = 0.0;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

std::vector<cplx> cumulative(const std::vector<cplx>& f, double h) {
  // 4th-order cumulative integral from the first node
  const std::size_t n = f.size();
  std::vector<cplx> out(n, 0.0);
  if (n < 4) {
    for (std::size_t j = 1; j < n; ++j) out[j] = out[j - 1] + 0.5 * h * (f[j - 1] + f[j]);
    return out;
  }
  for (std::size_t j = 0; j + 1 < n; ++j) {
    cplx inc;
    if (j == 0)
      inc = 9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3];
    else if (j + 2 == n)
      inc = 9.0 * f[j + 1] + 19.0 * f[j] - 5.0 * f[j - 1] + f[j - 2];
    else
      inc = -f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2];
    out[j + 1] = out[j] + inc * (h / 24.0);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- potentials

RadialPotential RadialPotential::free() { return {Family::free, 0.0, 0.0}; }

RadialPotential RadialPotential::bump(double amplitude, double radius) {
  require(radius > 0.0, "bump radius must be positive");
  return {Family::bump, amplitude, radius};
}

RadialPotential RadialPotential::inverse_square(double c, double cutoff) {
  require(cutoff >= 0.0, "cutoff must be non-negative");
  return {Family::inverse_square, c, cutoff};
}

RadialPotential RadialPotential::exponential(double c) {
  return {Family::exponential, c, 1.0};
}

std::string RadialPotential::describe() const {
  char buf[128];
  switch (family_) {
    case Family::free: return "free";
    case Family::bump:
      std::snprintf(buf, sizeof buf, "bump(amplitude=%.17g,radius=%.17g)", strength_, scale_);
      return buf;
    case Family::inverse_square:
      std::snprintf(buf, sizeof buf, "inverse_square(c=%.17g,cutoff=%.17g)", strength_, scale_);
      return buf;
    case Family::exponential:
      std::snprintf(buf, sizeof buf, "exponential(c=%.17g)", strength_);
      return buf;
  }
  return "";
}

double RadialPotential::operator()(double r) const {
  switch (family_) {
    case Family::free: return 0.0;
    case Family::bump: {
      const double t = r / scale_;
      if (t >= 1.0) return 0.0;
      return strength_ * std::exp(1.0 - 1.0 / (1.0 - t * t));
    }
    case Family::inverse_square:
      if (r <= 0.0) return scale_ > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      return strength_ / (r * r) * (scale_ > 0.0 ? smooth_step(r / scale_) : 1.0);
    case Family::exponential: return strength_ * std::exp(-r);
  }
  return 0.0;
}

double RadialPotential::range() const {
  switch (family_) {
    case Family::free: return 0.0;
    case Family::bump: return scale_;
    case Family::inverse_square: return scale_;
    case Family::exponential:
      return strength_ == 0.0 ? 0.0 : std::max(0.0, std::log(std::abs(strength_)) + 40.0);
  }
  return 0.0;
}

double RadialPotential::tail_coefficient() const {
  return family_ == Family::inverse_square ? strength_ : 0.0;
}

double RadialPotential::origin_coefficient(double r0) const {
  return family_ == Family::inverse_square && scale_ < r0 ? strength_ : 0.0;
}

double RadialPotential::regular_part(double r, double r0) const {
  if (origin_coefficient(r0) != 0.0) return 0.0;
  return (*this)(r);
}

// -------------------------------------------------------------- Hankel branches

cplx riccati_hankel(int sign, double nu, double z, bool derivative) {
  require(z > 0.0, "Hankel argument must be positive");
  const double j = boost::math::cyl_bessel_j(nu, z);
  const double y = boost::math::cyl_neumann(nu, z);
  const double s = sign > 0 ? 1.0 : -1.0;
  const cplx hk(j, s * y);
  const cplx phase = std::polar(1.0, s * (0.5 * nu + 0.25) * M_PI);
  const double root = std::sqrt(0.5 * M_PI * z);
  if (!derivative) return root * hk * phase;
  const cplx dhk(boost::math::cyl_bessel_j_prime(nu, z), s * boost::math::cyl_neumann_prime(nu, z));
  return (0.5 / z * root * hk + root * dhk) * phase;
}

cplx ModeSolution::u(std::size_t j) const {
  return w[j] * std::pow(r[j], -0.5 * (problem.n - 1));
}

cplx free_scattering_eigenvalue(int n, int l) {
  cplx v = std::pow(I, 1 - n);
  return (l % 2 == 0) ? v : -v;
}

double inverse_square_phase_shift(int n, int l, double c) {
  const double nu0 = l + 0.5 * (n - 2);
  require(nu0 * nu0 + c >= 0.0, "inverse-square coupling below the Hardy bound");
  return 0.5 * M_PI * (nu0 - std::sqrt(nu0 * nu0 + c));
}

// ------------------------------------------------------------------- solver

struct ModeSolver::Impl {
  ModeProblem p;
  ModeOptions opt;
  Grid grid;
  double nu_origin = 0.0, nu_tail = 0.0, origin_c = 0.0;
  ModeSolution regular;
  mutable std::optional<ModeSolution> jost_plus, jost_minus;

  double q(double r) const {
    // (nu^2 - 1/4)/r^2 + V - lambda^2 with V split into singular and regular parts
    const double nu2 = nu_origin * nu_origin;
    return (nu2 - 0.25) / (r * r) + p.potential.regular_part(r, grid.r0) - p.lambda * p.lambda;
  }

  // integrate (w, w') across the grid in the given direction
  void sweep(State x, bool forward, std::vector<cplx>& w, std::vector<cplx>& dw) const {
    namespace ode = boost::numeric::odeint;
    const auto& r = grid.r;
    const std::size_t n = r.size();
    w.assign(n, 0.0);
    dw.assign(n, 0.0);
    auto rhs = [this](const State& s, State& d, double t) {
      const double k = q(t);
      d[0] = s[1];
      d[1] = k * s[0];
      d[2] = s[3];
      d[3] = k * s[2];
    };
    auto store = [&](std::size_t j) {
      w[j] = {x[0], x[2]};
      dw[j] = {x[1], x[3]};
    };
    std::size_t j = forward ? 0 : n - 1;
    store(j);
    for (std::size_t step = 0; step + 1 < n; ++step) {
      const std::size_t k = forward ? j + 1 : j - 1;
      double scale = 0.0;
      for (double v : x) scale = std::max(scale, std::abs(v));
      auto stepper = ode::make_controlled<ode::runge_kutta_fehlberg78<State>>(
          opt.rel_tolerance * scale, opt.rel_tolerance);
      const double span = r[k] - r[j];
      const double near = 0.1 * std::min(r[j], r[k]);
      const double dt = std::abs(span) > near ? std::copysign(near, span) : span;
      ode::integrate_adaptive(stepper, rhs, x, r[j], r[k], dt);
      j = k;
      store(j);
    }
  }

  // least-squares (a_-, a_+) over the matching window
  void match(ModeSolution& s) const {
    const auto& r = grid.r;
    std::vector<std::size_t> rows;
    std::size_t first = 0;
    while (first < r.size() && r[first] < grid.window_start) ++first;
    const std::size_t count = r.size() - first;
    const std::size_t stride = std::max<std::size_t>(1, count / 400);
    for (std::size_t j = first; j < r.size(); j += stride) rows.push_back(j);
    const double lam = p.lambda;
    Eigen::MatrixXcd a(2 * rows.size(), 2);
    Eigen::VectorXcd b(2 * rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double z = lam * r[rows[i]];
      a(2 * i, 0) = riccati_hankel(-1, nu_tail, z);
      a(2 * i, 1) = riccati_hankel(1, nu_tail, z);
      a(2 * i + 1, 0) = riccati_hankel(-1, nu_tail, z, true);
      a(2 * i + 1, 1) = riccati_hankel(1, nu_tail, z, true);
      b(2 * i) = s.w[rows[i]];
      b(2 * i + 1) = s.dw[rows[i]] / lam;
    }
    const Eigen::VectorXcd c = a.colPivHouseholderQr().solve(b);
    s.a_minus = c(0);
    s.a_plus = c(1);
    const double norm = b.norm();
    s.residual = norm > 0.0 ? (a * c - b).norm() / norm : 0.0;
  }

  void check_match(const ModeSolution& s, const char* what) const {
    if (!(s.residual <= opt.match_tolerance))
      throw ConvergenceError(std::string("asymptotic matching of the ") + what +
                                 " solution failed: increase the grid resolution or extent",
                             s.residual);
  }

  // int_0^{r0} of an integrand behaving like the regular solution times r^m f(0)
  cplx origin_piece(cplx first) const {
    return first * grid.r0 / (nu_origin + 0.5 * p.n + 1.0);
  }

  const ModeSolution& jost(int sign) const {
    auto& slot = sign > 0 ? jost_plus : jost_minus;
    if (slot) return *slot;
    ModeSolution s;
    s.problem = p;
    s.r = grid.r;
    const double z = p.lambda * grid.r.back();
    const cplx h = riccati_hankel(sign, nu_tail, z);
    const cplx dh = p.lambda * riccati_hankel(sign, nu_tail, z, true);
    sweep({h.real(), dh.real(), h.imag(), dh.imag()}, false, s.w, s.dw);
    s.a_minus = sign > 0 ? 0.0 : 1.0;
    s.a_plus = sign > 0 ? 1.0 : 0.0;
    slot = std::move(s);
    return *slot;
  }
};

ModeSolver::ModeSolver(ModeProblem problem, ModeOptions options)
    : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.p = std::move(problem);
  m.opt = options;
  const auto& p = m.p;
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) throw DomainError("lambda must be positive");
  require(p.n == 2 || p.n == 3, "dimension must be 2 or 3");
  require(p.l >= 0, "angular momentum must be non-negative");
  const double nu = p.nu();
  Grid& g = m.grid;
  g.r0 = options.start_factor / p.lambda;
  m.origin_c = p.potential.origin_coefficient(g.r0);
  const double tail_c = p.potential.tail_coefficient();
  require(nu * nu + m.origin_c >= 0.0 && nu * nu + tail_c >= 0.0,
          "inverse-square coupling below the Hardy bound");
  m.nu_origin = std::sqrt(nu * nu + m.origin_c);
  m.nu_tail = std::sqrt(nu * nu + tail_c);

  g.h = std::min(2.0 * M_PI / (options.points_per_wavelength * p.lambda), options.max_step);
  const double inner = std::max(p.potential.range(), options.forcing_support);
  double r_max = std::max((options.min_extent + m.nu_tail) / p.lambda, inner + 30.0 / p.lambda);
  if (options.r_max > 0.0) r_max = options.r_max;
  require(r_max * p.lambda >= options.min_extent * (1.0 - 1e-12),
          "R_max * lambda below the required extent");
  const std::size_t steps = static_cast<std::size_t>(std::ceil((r_max - g.r0) / g.h));
  g.r.resize(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) g.r[j] = g.r0 + j * g.h;
  const double rmax = g.r.back();
  g.window_start = std::max({0.1 * rmax, inner, (m.nu_tail + 10.0) / p.lambda});
  if (g.window_start > rmax - 5.0 / p.lambda) g.window_start = rmax - 5.0 / p.lambda;

  // Frobenius start w = r^alpha sum b_k r^k with Taylor data of V_reg - lambda^2
  const double alpha = m.nu_origin + 0.5;
  const double r0 = g.r0;
  const double v0 = p.potential.regular_part(0.0, r0), v1 = p.potential.regular_part(r0, r0),
               v2 = p.potential.regular_part(2.0 * r0, r0);
  const double g0 = v0 - p.lambda * p.lambda;
  const double g1 = (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * r0);
  const double g2 = (v0 - 2.0 * v1 + v2) / (2.0 * r0 * r0);
  const double b2 = g0 / (2.0 * (2.0 * alpha + 1.0));
  const double b3 = g1 / (3.0 * (2.0 * alpha + 2.0));
  const double b4 = (g2 + g0 * b2) / (4.0 * (2.0 * alpha + 3.0));
  const double lead = std::pow(r0, alpha);
  const double w0 = lead * (1.0 + b2 * r0 * r0 + b3 * r0 * r0 * r0 + b4 * std::pow(r0, 4));
  const double dw0 = lead / r0 *
                     (alpha + (alpha + 2.0) * b2 * r0 * r0 + (alpha + 3.0) * b3 * std::pow(r0, 3) +
                      (alpha + 4.0) * b4 * std::pow(r0, 4));

  ModeSolution& s = m.regular;
  s.problem = p;
  s.r = g.r;
  m.sweep({w0, dw0, 0.0, 0.0}, true, s.w, s.dw);
  m.match(s);
  m.check_match(s, "regular");
}

ModeSolver::~ModeSolver() = default;
ModeSolver::ModeSolver(ModeSolver&&) noexcept = default;
ModeSolver& ModeSolver::operator=(ModeSolver&&) noexcept = default;

const ModeProblem& ModeSolver::problem() const { return impl_->p; }
const std::vector<double>& ModeSolver::grid() const { return impl_->grid.r; }
const ModeSolution& ModeSolver::regular() const { return impl_->regular; }
cplx ModeSolver::smatrix() const { return impl_->regular.a_plus / impl_->regular.a_minus; }
const ModeSolution& ModeSolver::jost(int sign) const { return impl_->jost(sign); }

ModeSolution ModeSolver::poisson(cplx a, int sign) const {
  const ModeSolution& reg = impl_->regular;
  const cplx norm = sign > 0 ? reg.a_minus : reg.a_plus;
  if (std::abs(norm) < 1e-300) throw ResonanceError("regular solution has no boundary data", 0.0);
  const cplx factor = a / norm;
  ModeSolution out = reg;
  for (auto& v : out.w) v *= factor;
  for (auto& v : out.dw) v *= factor;
  out.a_minus = reg.a_minus * factor;
  out.a_plus = reg.a_plus * factor;
  return out;
}

std::vector<cplx> ModeSolver::forcing(const RadialFunction& f) const {
  const auto& r = impl_->grid.r;
  const double m = 0.5 * (impl_->p.n - 1);
  std::vector<cplx> out(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) out[j] = std::pow(r[j], m) * f(r[j]);
  return out;
}

cplx ModeSolver::poisson_adjoint(const RadialFunction& f) const {
  const auto F = forcing(f);
  const ModeSolution& reg = impl_->regular;
  std::vector<cplx> integrand(F.size());
  const cplx norm = std::conj(reg.a_minus);
  for (std::size_t j = 0; j < F.size(); ++j) integrand[j] = std::conj(reg.w[j]) / norm * F[j];
  return cumulative(integrand, impl_->grid.h).back() + impl_->origin_piece(integrand.front());
}

ResolventResult ModeSolver::resolvent(const RadialFunction& f, int sign) const {
  const auto& m = *impl_;
  const auto F = forcing(f);
  const ModeSolution& reg = m.regular;
  const ModeSolution& out = m.jost(sign);
  const std::size_t n = F.size();
  std::vector<cplx> phi(n), dphi(n);
  for (std::size_t j = 0; j < n; ++j) {
    phi[j] = reg.w[j] / reg.a_minus;
    dphi[j] = reg.dw[j] / reg.a_minus;
  }
  // Wronskian phi psi' - phi' psi, averaged over the grid
  cplx wr = 0.0;
  for (std::size_t j = 0; j < n; ++j) wr += phi[j] * out.dw[j] - dphi[j] * out.w[j];
  wr /= static_cast<double>(n);
  if (std::abs(wr) < 1e-10) throw ResonanceError("Wronskian vanishes", std::abs(wr));

  std::vector<cplx> gphi(n), gpsi(n);
  for (std::size_t j = 0; j < n; ++j) {
    gphi[j] = phi[j] * F[j];
    gpsi[j] = out.w[j] * F[j];
  }
  auto inner = cumulative(gphi, m.grid.h);
  const cplx head = m.origin_piece(gphi.front());
  for (auto& v : inner) v += head;
  const auto outer_from0 = cumulative(gpsi, m.grid.h);
  const cplx outer_total = outer_from0.back();

  ResolventResult res;
  res.r = m.grid.r;
  res.w.resize(n);
  res.dw.resize(n);
  res.wronskian = wr;
  for (std::size_t j = 0; j < n; ++j) {
    const cplx a = inner[j], b = outer_total - outer_from0[j];
    res.w[j] = -(out.w[j] * a + phi[j] * b) / wr;
    res.dw[j] = -(out.dw[j] * a + dphi[j] * b) / wr;
  }
  ModeSolution tmp;
  tmp.problem = m.p;
  tmp.r = res.r;
  tmp.w = res.w;
  tmp.dw = res.dw;
  m.match(tmp);
  res.a_minus = tmp.a_minus;
  res.a_plus = tmp.a_plus;
  res.residual = equation_residual(res.w, F);
  return res;
}

std::vector<cplx> ModeSolver::apply(const std::vector<cplx>& w) const {
  const auto& m = *impl_;
  const auto& r = m.grid.r;
  const double h = m.grid.h;
  const std::size_t n = r.size();
  if (w.size() != n) throw DomainError("samples do not match the grid");
  const double skip = 10.0 * h * (1.0 + m.nu_origin);
  // sixth-order stencils at h and 2h, Richardson-combined
  auto stencil = [&](std::size_t j, std::size_t k) {
    return (2.0 * (w[j - 3 * k] + w[j + 3 * k]) - 27.0 * (w[j - 2 * k] + w[j + 2 * k]) +
            270.0 * (w[j - k] + w[j + k]) - 490.0 * w[j]) /
           (180.0 * h * h * double(k * k));
  };
  std::vector<cplx> out(n, 0.0);
  for (std::size_t j = 6; j + 6 < n; ++j) {
    if (r[j] < skip) continue;
    const cplx fine = stencil(j, 1);
    const cplx d2 = fine + (fine - stencil(j, 2)) / 63.0;
    out[j] = -d2 + m.q(r[j]) * w[j];
  }
  return out;
}

std::pair<cplx, cplx> ModeSolver::match(const std::vector<cplx>& w,
                                        const std::vector<cplx>& dw) const {
  ModeSolution tmp;
  tmp.problem = impl_->p;
  tmp.r = impl_->grid.r;
  tmp.w = w;
  tmp.dw = dw;
  if (w.size() != tmp.r.size() || dw.size() != tmp.r.size())
    throw DomainError("samples do not match the grid");
  impl_->match(tmp);
  impl_->check_match(tmp, "supplied");
  return {tmp.a_minus, tmp.a_plus};
}

cplx ModeSolver::integrate(const std::vector<cplx>& values) const {
  if (values.size() != impl_->grid.r.size()) throw DomainError("samples do not match the grid");
  return cumulative(values, impl_->grid.h).back();
}

double ModeSolver::equation_residual(const std::vector<cplx>& w,
                                     const std::vector<cplx>& forcing) const {
  const auto& m = *impl_;
  const auto& r = m.grid.r;
  const std::size_t n = r.size();
  if (forcing.size() != n) throw DomainError("samples do not match the grid");
  const auto lw = apply(w);
  const double skip = 10.0 * m.grid.h * (1.0 + m.nu_origin);
  double worst = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(forcing[j]));
  for (std::size_t j = 6; j + 6 < n; ++j)
    if (r[j] >= skip) worst = std::max(worst, std::abs(lw[j] - forcing[j]));
  return scale > 0.0 ? worst / scale : worst;
}

// --------------------------------------------------------------- free functions

ModeSolution solve_mode(const ModeProblem& p, const ModeOptions& opt) {
  return ModeSolver(p, opt).regular();
}

cplx scattering_eigenvalue(const ModeProblem& p, const ModeOptions& opt) {
  return ModeSolver(p, opt).smatrix();
}

SMatrixEntry smatrix_entry(const ModeProblem& p, const ModeOptions& opt) {
  ModeSolver solver(p, opt);
  SMatrixEntry e;
  e.l = p.l;
  e.s = solver.smatrix();
  e.residual = solver.regular().residual;
  double d = 0.5 * std::arg(e.s / free_scattering_eigenvalue(p.n, p.l));
  if (d <= -0.5 * M_PI) d += M_PI;
  e.phase_shift = d;
  return e;
}

SMatrixDiag smatrix_diag(int n, double lambda, const RadialPotential& v, int l_max,
                         const ModeOptions& opt) {
  SMatrixDiag out;
  out.n = n;
  out.lambda = lambda;
  for (int l = 0; l <= l_max; ++l) out.entries.push_back(smatrix_entry({n, l, lambda, v}, opt));
  return out;
}

void write_smatrix_csv(std::ostream& os, const std::vector<SMatrixDiag>& tables, bool header) {
  if (header) os << "lambda,l,re_s,im_s,phase_shift,residual\n";
  char buf[256];
  for (const auto& t : tables)
    for (const auto& e : t.entries) {
      std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", t.lambda, e.l,
                    e.s.real(), e.s.imag(), e.phase_shift, e.residual);
      os << buf;
    }
}

ModeSolution poisson_apply_mode(const ModeProblem& p, cplx a, const ModeOptions& opt) {
  return ModeSolver(p, opt).poisson(a, 1);
}

ResolventResult resolvent_apply_mode(const ModeProblem& p, const RadialFunction& f, int sign,
                                     const ModeOptions& opt) {
  return ModeSolver(p, opt).resolvent(f, sign);
}

double jump_identity_mode(const ModeProblem& p, const RadialFunction& f, const ModeOptions& opt) {
  ModeSolver solver(p, opt);
  const auto plus = solver.resolvent(f, 1);
  const auto minus = solver.resolvent(f, -1);
  const cplx data = solver.poisson_adjoint(f);
  const ModeSolution& reg = solver.regular();
  const cplx factor = I / (2.0 * p.lambda) * data / reg.a_minus;
  double diff = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < plus.w.size(); ++j) {
    const cplx jump = plus.w[j] - minus.w[j];
    diff += std::norm(jump - factor * reg.w[j]);
    scale += std::norm(jump);
  }
  return scale > 0.0 ? std::sqrt(diff / scale) : std::sqrt(diff);
}

}  // namespace conicscat
