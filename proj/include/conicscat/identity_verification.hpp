#pragma once

// Named, reproducible checks of the operator identities at mode level:
// boundary pairing, Stone/Parseval, the resolvent jump, P(-lambda) S = P(lambda),
// unitarity of S and outgoing propagation of the free resolvent.

#include <string>
#include <utility>
#include <vector>

#include "conicscat/radial_scattering.hpp"

namespace conicscat {

enum class CheckStatus { pass, fail, inconclusive };
std::string to_string(CheckStatus s);

struct CheckReport {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  CheckStatus status = CheckStatus::fail;
  std::string config_hash;
  double runtime = 0.0;  ///< seconds, wall clock
  std::vector<std::pair<std::string, double>> details;
  std::string message;

  /// passed = residual <= tolerance; status follows unless already inconclusive.
  void settle();
};

/// One JSON object per report.  Runtimes are left out unless asked for so
/// that identical configs give identical bytes.
std::string reports_json(const std::vector<CheckReport>& reports, bool with_runtime = false);
/// {"name": runtime, ...}
std::string timings_json(const std::vector<CheckReport>& reports);

// ---------------------------------------------------------------- pairing

/// Grid samples of one mode function, its forcing (H - lambda^2) u and its
/// boundary data.
struct PairingInput {
  ModeProblem problem;
  std::vector<cplx> w;
  std::vector<cplx> forcing;
  cplx a_minus = 0.0, a_plus = 0.0;
};

/// chi(r) psi_+ with chi a smooth step from 0 below r_lo to 1 above r_hi;
/// forcing from the discrete operator, boundary data from matching.
PairingInput manufactured_outgoing(const ModeSolver& solver, double r_lo, double r_hi);
/// The regular solution with its discrete forcing.
PairingInput regular_input(const ModeSolver& solver);

struct PairingSides {
  cplx boundary = 0.0;  ///< 2 i lambda (a1+ conj a2+ - a1- conj a2-)
  cplx interior = 0.0;  ///< int (w1 conj F2 - F1 conj w2) dr
};
PairingSides pairing_sides(const ModeSolver& solver, const PairingInput& u1,
                           const PairingInput& u2);
CheckReport boundary_pairing_check(const ModeSolver& solver, const PairingInput& u1,
                                   const PairingInput& u2, double tolerance = 1e-6);

// ---------------------------------------------------------- Stone / Parseval

struct SpectralMass {
  double value = 0.0;
  double error = 0.0;  ///< quadrature estimate, including the low-energy tail
};

struct StoneSetup {
  int n = 3;
  int l = 0;
  RadialPotential potential = RadialPotential::free();
  RadialFunction f;
  double support = 8.0;  ///< f vanishes (to double precision) beyond this radius
  ModeOptions options;
  /// Energies below this are not solved; their mass is extrapolated.
  double lambda_floor = 0.02;
};

/// (2 pi)^{-1} int_a^b |P(lambda)^* f|^2 d lambda by adaptive quadrature.
SpectralMass spectral_mass(const StoneSetup& s, double a, double b);
/// int_a^b lambda |G(lambda)|^2 with G(lambda) = int f r^{n/2} J_nu(lambda r) dr,
/// both integrals by quadrature; the free-space ground truth.
double transform_mass(const StoneSetup& s, double a, double b);
/// int |f|^2 r^{n-1} dr.
double mode_norm_squared(const StoneSetup& s);
/// Energy beyond which the transform mass of s.f is negligible.
double exhaustive_upper(const StoneSetup& s);

enum class StoneReference { transform, norm };
/// Reference is transform_mass (free potential only) or ||f||^2 (window
/// must exhaust the spectrum and the potential carry no bound states).
CheckReport stone_parseval_check(const StoneSetup& s, double a, double b,
                                 StoneReference reference, double tolerance = 1e-3);

// ----------------------------------------------------------- jump, S, unitarity

struct JumpTolerances {
  double mode = 1e-5;
  double kernel = 1e-8;
};
/// Residual is max(mode / tol.mode, kernel / tol.kernel) against tolerance 1;
/// the raw values are in the details.  Kernel part is the free n = 3 kernel.
CheckReport jump_check(int n, const std::vector<double>& lambdas, const std::vector<int>& ls,
                       const RadialPotential& v, const ModeOptions& opt = {},
                       JumpTolerances tol = {});

/// max_grid |P(lambda) a - P(-lambda)(s a)| / max_grid |P(lambda) a| for one mode,
/// with the right side solved at half the step.
double smatrix_relation_residual(const ModeProblem& p, cplx a, const ModeOptions& opt = {});
CheckReport smatrix_relation_check(int n, const std::vector<double>& lambdas, int l_max,
                                   const RadialPotential& v, const ModeOptions& opt = {},
                                   double tolerance = 1e-7);

CheckReport unitarity_check(int n, const std::vector<double>& lambdas, int l_max,
                            const std::vector<RadialPotential>& potentials,
                            const ModeOptions& opt = {}, double tolerance = 1e-8);

// ----------------------------------------------------------------- propagation

struct PropagationSetup {
  int n = 3;
  double lambda = 1.0;
  int sign = 1;
  double bump_radius = 6.0;  ///< Gaussian e^{-|z|^2/2} truncated to this ball
  double spacing = 0.6;
  int directions = 5;
  double r_start = 60.0;
  double r_end = 180.0;
  double r_step = 0.1;
};
/// Residual is the largest distance / lambda of a detection from the
/// outgoing (sign > 0) or incoming (sign < 0) section.  No detections or a
/// probe resolution warning make the report inconclusive.
CheckReport propagation_containment_check(const PropagationSetup& s, double tolerance = 0.02);

// ----------------------------------------------------------------- driver

struct VerificationConfig {
  int n = 3;
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  int l_max = 10;
  RadialPotential potential = RadialPotential::free();
  ModeOptions options;
  double pairing_lambda = 1.0;
  int pairing_l = 0;
  double cut_start = 2.0;
  double cut_end = 4.0;
  int stone_l = 0;
  PropagationSetup propagation;
  double tol_pairing = 1e-6;
  double tol_stone = 1e-3;
  JumpTolerances tol_jump;
  double tol_smatrix = 1e-7;
  double tol_unitarity = 1e-8;
  double tol_propagation = 0.02;
  std::string config_hash;
};

/// The six checks, run on a pool of `jobs` threads.  Report order is fixed;
/// a check that throws is reported as failed with the message.
std::vector<CheckReport> run_verification(const VerificationConfig& cfg, int jobs = 1);

}  // namespace conicscat
