#pragma once

// Partial-wave scattering for H = Delta + V on R^n (n = 2, 3) with V radial
// and short range.  A degree-l component u(r) Y_l is handled through
// w = r^{(n-1)/2} u, which solves
//   -w'' + ((nu^2 - 1/4)/r^2 + V - lambda^2) w = r^{(n-1)/2} f,   nu = l + (n-2)/2.
// Far out w = a_- e^{-i lambda r} + a_+ e^{i lambda r} + o(1); the regular
// solution's ratio a_+/a_- is the scattering-matrix eigenvalue s_l, which for
// V = 0 equals i^{1-n} (-1)^l.

#include <complex>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "conicscat/errors.hpp"

namespace conicscat {

using cplx = std::complex<double>;
using RadialFunction = std::function<cplx(double)>;

class RadialPotential {
 public:
  enum class Family { free, bump, inverse_square, exponential };

  static RadialPotential free();
  /// amplitude * exp(1 - 1/(1 - (r/radius)^2)) for r < radius.
  static RadialPotential bump(double amplitude, double radius);
  /// c / r^2, switched on smoothly over [cutoff/2, cutoff].  cutoff = 0 keeps
  /// the pure inverse square, whose origin behaviour is handled analytically.
  static RadialPotential inverse_square(double c, double cutoff = 0.0);
  /// c * exp(-r).
  static RadialPotential exponential(double c);

  Family family() const { return family_; }
  double strength() const { return strength_; }
  double scale() const { return scale_; }
  std::string describe() const;

  double operator()(double r) const;
  /// Radius beyond which V equals its inverse-square tail to double precision.
  double range() const;
  /// Coefficient of the exact 1/r^2 tail (inverse-square family only).
  double tail_coefficient() const;
  /// Coefficient of the 1/r^2 behaviour seen inside radius r0; a cutoff
  /// below r0 is treated as absent.
  double origin_coefficient(double r0) const;
  /// V minus its origin singularity.
  double regular_part(double r, double r0) const;

 private:
  RadialPotential(Family f, double strength, double scale)
      : family_(f), strength_(strength), scale_(scale) {}
  Family family_;
  double strength_;
  double scale_;
};

struct ModeProblem {
  int n = 3;
  int l = 0;
  double lambda = 1.0;
  RadialPotential potential = RadialPotential::free();

  double nu() const { return l + 0.5 * (n - 2); }
  /// Boundary Laplacian eigenvalue l (l + n - 2).
  double angular_eigenvalue() const { return l * (l + n - 2.0); }
};

struct ModeOptions {
  double start_factor = 1e-3;     ///< r0 = start_factor / lambda
  double rel_tolerance = 1e-12;   ///< odeint local error control
  double points_per_wavelength = 200.0;
  double max_step = 0.01;
  double min_extent = 40.0;       ///< R_max * lambda >= min_extent + nu
  double match_tolerance = 1e-7;
  double r_max = 0.0;             ///< 0 selects the default extent
  /// Radius beyond which forcings vanish; the grid extends past it.
  double forcing_support = 0.0;
};

/// Sampled solution on the uniform grid r_j = r0 + j h.
struct ModeSolution {
  ModeProblem problem;
  std::vector<double> r;
  std::vector<cplx> w;
  std::vector<cplx> dw;
  cplx a_minus = 0.0, a_plus = 0.0;
  double residual = 0.0;  ///< relative least-squares matching residual

  double step() const { return r.size() > 1 ? r[1] - r[0] : 0.0; }
  /// u = w r^{-(n-1)/2}
  cplx u(std::size_t j) const;
};

/// Scattering-matrix eigenvalue and its phase shift against the free value.
struct SMatrixEntry {
  int l = 0;
  cplx s = 0.0;
  double phase_shift = 0.0;  ///< delta in (-pi/2, pi/2] with s = s_free e^{2 i delta}
  double residual = 0.0;
};

struct SMatrixDiag {
  int n = 3;
  double lambda = 1.0;
  std::string normalization = "geometric";
  std::vector<SMatrixEntry> entries;
};

struct ResolventResult {
  std::vector<double> r;
  std::vector<cplx> w;
  std::vector<cplx> dw;
  cplx a_minus = 0.0, a_plus = 0.0;
  cplx wronskian = 0.0;
  double residual = 0.0;  ///< relative discrete residual of (H_l - lambda^2) u - f
};

/// Reusable per-(n, l, lambda, V) solver: regular and Jost solutions on a
/// common grid.
class ModeSolver {
 public:
  explicit ModeSolver(ModeProblem problem, ModeOptions options = {});
  ~ModeSolver();
  ModeSolver(ModeSolver&&) noexcept;
  ModeSolver& operator=(ModeSolver&&) noexcept;

  const ModeProblem& problem() const;
  const std::vector<double>& grid() const;
  /// Regular solution with w ~ r^{nu0 + 1/2} at the origin.
  const ModeSolution& regular() const;
  cplx smatrix() const;
  /// Solution equal to e^{+-i lambda r} (1 + o(1)) far out.
  const ModeSolution& jost(int sign) const;

  /// P(lambda) a (sign > 0: incoming coefficient a) or P(-lambda) a
  /// (sign < 0: outgoing coefficient a).
  ModeSolution poisson(cplx a, int sign = 1) const;
  /// P(lambda)^* f = int conj(phi) r^{(n-1)/2} f dr with phi the regular
  /// solution normalised to a_- = 1.
  cplx poisson_adjoint(const RadialFunction& f) const;
  /// R(lambda^2 +- i0) f by variation of parameters.
  ResolventResult resolvent(const RadialFunction& f, int sign) const;
  /// -w'' + (q - lambda^2) w by finite differences; zero where the stencil
  /// leaves the grid or comes too close to the origin.
  std::vector<cplx> apply(const std::vector<cplx>& w) const;
  /// Least-squares (a_-, a_+) of grid samples against the asymptotic branches.
  std::pair<cplx, cplx> match(const std::vector<cplx>& w, const std::vector<cplx>& dw) const;
  /// Fourth-order quadrature of grid samples over [r0, R_max].
  cplx integrate(const std::vector<cplx>& values) const;
  /// Residual of -w'' + (q - lambda^2) w - F on the grid, relative to |F|.
  double equation_residual(const std::vector<cplx>& w, const std::vector<cplx>& forcing) const;
  /// Forcing samples F = r^{(n-1)/2} f on the grid.
  std::vector<cplx> forcing(const RadialFunction& f) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ModeSolution solve_mode(const ModeProblem& p, const ModeOptions& opt = {});
cplx scattering_eigenvalue(const ModeProblem& p, const ModeOptions& opt = {});
/// i^{1-n} (-1)^l
cplx free_scattering_eigenvalue(int n, int l);
SMatrixEntry smatrix_entry(const ModeProblem& p, const ModeOptions& opt = {});
SMatrixDiag smatrix_diag(int n, double lambda, const RadialPotential& v, int l_max,
                         const ModeOptions& opt = {});
/// Columns lambda,l,re_s,im_s,phase_shift,residual with 17 significant digits.
void write_smatrix_csv(std::ostream& os, const std::vector<SMatrixDiag>& tables,
                       bool header = true);
/// Exact phase shift of the pure inverse-square potential c / r^2.
double inverse_square_phase_shift(int n, int l, double c);

ModeSolution poisson_apply_mode(const ModeProblem& p, cplx a, const ModeOptions& opt = {});
ResolventResult resolvent_apply_mode(const ModeProblem& p, const RadialFunction& f,
                                     int sign, const ModeOptions& opt = {});
/// Relative norm of (R_+ - R_-) f - (i / 2 lambda) phi (P^* f) over the grid.
double jump_identity_mode(const ModeProblem& p, const RadialFunction& f,
                          const ModeOptions& opt = {});

/// Riccati-Hankel functions sqrt(pi z / 2) H_nu^{(1,2)}(z) e^{+-i(nu/2 + 1/4) pi},
/// asymptotic to e^{+-i z}; `derivative` gives d/dz.
cplx riccati_hankel(int sign, double nu, double z, bool derivative = false);

}  // namespace conicscat
