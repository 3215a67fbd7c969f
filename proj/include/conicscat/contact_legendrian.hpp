#pragma once

// Legendre submanifolds of the scattering cotangent bundle over the boundary:
// the Poisson-operator Legendrians on dX x dX (outgoing/incoming flowouts,
// their zero sections and the single-fibre slices), the spectral-measure
// Legendrian on the double space together with its sections and the
// diagonal conormal, and numeric certification of their contact structure.
//
// Double-space points are stored in the split coordinates
//   q = tau1 dx1/x1^2 + tau2 dx2/x2^2 + mu1.dy1/x1 + mu2.dy2/x2
// and expose the polar coordinates (tau, eta, mut1, mut2) through
//   tau = tau1 cos(theta) + tau2 sin(theta),  eta = tau1 sin(theta) - tau2 cos(theta),
//   mut1 = cos(theta) mu1,                    mut2 = sin(theta) mu2.
// The contact form in polar coordinates is d tau + eta d theta + mut1.dy1 + mut2.dy2.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "conicscat/boundary_geometry.hpp"

namespace conicscat {

struct ScCotangentPoint {
  ChartPoint y;
  double tau = 0.0;
  BVec mu;
};

/// Point of the scattering cotangent bundle over dX x dX.
struct PoissonLegendrianPoint {
  ChartPoint y;
  ChartPoint y_prime;
  double tau = 0.0;
  BVec mu;
  BVec mu_prime;
};

/// Which piece of a double-space Legendrian a sample belongs to.
enum class Branch {
  interior,          ///< generic flowout point
  closure_upper,     ///< (theta, y, y, +lambda, -lambda, 0, 0)
  closure_lower,     ///< (theta, y, y, -lambda, +lambda, 0, 0)
  section_outgoing,  ///< tau1 = tau2 = -lambda, mu = 0
  section_incoming,  ///< tau1 = tau2 = +lambda, mu = 0
  diagonal_conormal  ///< sigma = 1, y1 = y2, mu1 = -mu2, tau = 0
};
std::string to_string(Branch b);

struct DoubleSpacePoint {
  double theta = 0.0;
  ChartPoint y1, y2;
  double tau1 = 0.0, tau2 = 0.0;
  BVec mu1, mu2;
  Branch branch = Branch::interior;

  double sigma() const;
  double tau() const;
  double eta() const;
  BVec mu1_tilde() const;
  BVec mu2_tilde() const;

  /// Inverse of the polar change of coordinates.  Requires 0 < theta < pi/2
  /// whenever the corresponding mut is nonzero.
  static DoubleSpacePoint from_polar(double theta, ChartPoint y1, ChartPoint y2,
                                     double tau, double eta, const BVec& mut1,
                                     const BVec& mut2, Branch branch = Branch::interior);
};

using LegendrianPoint =
    std::variant<ScCotangentPoint, PoissonLegendrianPoint, DoubleSpacePoint>;

enum class LegendrianKind {
  outgoing_poisson,          ///< flowout tau = lambda cos s, s in [0, pi)
  incoming_poisson,          ///< flowout with exp((s - pi) H), s in (0, pi]
  outgoing_poisson_section,  ///< mu = mu' = 0, tau = -lambda
  incoming_poisson_section,  ///< mu = mu' = 0, tau = +lambda
  poisson_fibre,             ///< slice of the outgoing flowout over a fixed y0
  spectral,                  ///< the spectral-measure Legendrian on the double space
  spectral_section_outgoing, ///< (theta, y1, y2, -lambda, -lambda, 0, 0)
  spectral_section_incoming, ///< (theta, y1, y2, +lambda, +lambda, 0, 0)
  diagonal_conormal          ///< boundary of the closure of N^* diag
};
std::string to_string(LegendrianKind k);
LegendrianKind legendrian_kind_from_string(const std::string& name);

/// Parameter layouts.  `standard` is the generic flowout parametrisation; the
/// spectral Legendrian additionally supports its closure strata and the smooth
/// coordinates (sigma, y, mu) valid across them.
enum class ParamLayout { standard, closure_stratum, near_closure };

/// Parameters of a sampler (d = n - 1 is the boundary dimension):
///   poisson flowouts:   [s, y(d), alpha if d = 2]
///   poisson sections:   [y(d), y'(d)]
///   poisson fibre:      [s, alpha if d = 2]
///   spectral standard:  [s, s', y(d), alpha if d = 2]
///   spectral closure:   [theta, y(d)]         (orientation selects upper/lower)
///   spectral near:      [sigma, y(d), mu(d)]
///   spectral sections:  [theta, y1(d), y2(d)]
///   diagonal conormal:  [eta, y(d), nu(d)]
/// For d = 1 the covector direction is the sign `orientation`.
struct SamplerParams {
  std::vector<double> values;
  int chart = 0;
  int chart2 = 0;
  int orientation = 1;
  ParamLayout layout = ParamLayout::standard;
};

struct SamplerOptions {
  /// Flow used inside samples.  A fixed step count over the whole parameter
  /// range keeps the sample map smooth so that finite-difference Jacobians
  /// are meaningful for non-round metrics.
  FlowOptions flow{1e-10, 0.02, true, 1e-14, 3.1415926535897931};
  /// Base point of the poisson_fibre Legendrian.
  std::optional<ChartPoint> fibre_base;
  double fd_step = 1e-5;
};

class LegendrianSampler {
 public:
  LegendrianSampler(LegendrianKind kind, BoundaryMetric metric, double lambda,
                    SamplerOptions options = {});

  LegendrianKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  const BoundaryMetric& metric() const { return metric_; }
  const SamplerOptions& options() const { return options_; }
  int boundary_dimension() const { return metric_.dimension(); }

  int parameter_dimension(ParamLayout layout = ParamLayout::standard) const;
  bool in_domain(const SamplerParams& p) const;
  LegendrianPoint sample(const SamplerParams& p) const;

  /// Random parameters at least `margin` inside the domain (angles and radii).
  SamplerParams random_params(std::mt19937_64& rng,
                              ParamLayout layout = ParamLayout::standard,
                              double margin = 1e-3) const;

 private:
  LegendrianPoint sample_poisson(const SamplerParams& p, bool outgoing) const;
  LegendrianPoint sample_fibre(const SamplerParams& p) const;
  LegendrianPoint sample_spectral(const SamplerParams& p) const;
  CosphereState direction_at(const ChartPoint& y, const SamplerParams& p,
                             std::size_t angle_index) const;

  LegendrianKind kind_;
  BoundaryMetric metric_;
  double lambda_;
  SamplerOptions options_;
};

/// Flattened view used by the contact form: chi = d tau + sum conj d pos over
/// scalar pairs and chart blocks.
struct ContactCoordinates {
  double tau = 0.0;
  std::vector<std::pair<double, double>> scalars;   ///< (position, conjugate)
  std::vector<std::pair<ChartPoint, BVec>> blocks;  ///< (point, covector)
};
ContactCoordinates contact_coordinates(const LegendrianPoint& p);

struct ContactDefect {
  double value = 0.0;
  bool one_sided = false;
};

/// |chi(dPhi . direction)| with dPhi the finite-difference Jacobian of the
/// sampler at `params` (central differences, one-sided near the domain edge).
ContactDefect contact_defect(const LegendrianSampler& sampler,
                             const SamplerParams& params,
                             std::span<const double> direction);

/// |tau^2 + eta^2 + |mut1|^2 + |mut2|^2 - 2 lambda^2| with the mut norms taken in
/// the boundary metric dtheta^2 + cos^2 h(y1) + sin^2 h(y2) of the double space.
double characteristic_defect(const BoundaryMetric& m, const DoubleSpacePoint& p,
                             double lambda);

struct BicharacteristicOptions {
  double tolerance = 1e-11;
  int samples = 16;  ///< output points along the trajectory (incl. both ends)
};

struct BicharacteristicTrajectory {
  std::vector<double> times;
  std::vector<DoubleSpacePoint> points;
  bool truncated = false;  ///< left 0 < theta < pi/2 before reaching t
};

/// Hamilton flow of tau^2 + |(eta, mut1, mut2)|^2 - 2 lambda^2 on the double
/// space; tau decreases at rate 2 |(eta, mut1, mut2)|^2.
BicharacteristicTrajectory bicharacteristic_flow(const BoundaryMetric& m,
                                                 const DoubleSpacePoint& start,
                                                 double lambda, double t,
                                                 const BicharacteristicOptions& opt = {});

/// Chart-free feature vector of a double-space point: (theta, omega1, omega2,
/// tau1, tau2, xi1, xi2) with xi the embedded covectors.
std::vector<double> double_space_features(const DoubleSpacePoint& p);

/// Nearest-point queries on the spectral Legendrian: a k-d tree over a dense
/// sample grid seeds a Gauss-Newton projection in parameter space.
class SpectralLegendrianIndex {
 public:
  SpectralLegendrianIndex(const LegendrianSampler& sampler, std::size_t grid_size,
                          std::uint64_t seed = 1);
  ~SpectralLegendrianIndex();
  SpectralLegendrianIndex(SpectralLegendrianIndex&&) noexcept;
  SpectralLegendrianIndex& operator=(SpectralLegendrianIndex&&) noexcept;

  struct Match {
    double grid_distance;  ///< distance to the nearest grid sample
    double distance;       ///< distance after refinement
    SamplerParams params;
  };
  Match nearest(const DoubleSpacePoint& p) const;
  std::size_t size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ConicProfileEntry {
  double s = 0.0;        ///< path parameter, s -> 0 with s' = pi - arcsin(sigma sin s)
  double mu1_norm = 0.0; ///< |mu1|_h
  double mu2_norm = 0.0; ///< |mu2|_h
  double sigma = 0.0;    ///< tan(theta) of the sample
  double ratio_error = 0.0;  ///< | |mu1|/|mu2| - sigma |
  double tau1 = 0.0, tau2 = 0.0;
  EVec mu2_direction;    ///< embedded unit direction of mu2
  double endpoint_distance = 0.0;  ///< geodesic distance d(y1, y2)
};

struct ConicProfile {
  std::vector<ConicProfileEntry> entries;
  /// Limit point (tau1, tau2) and the section it lies in.
  double limit_tau1 = 0.0, limit_tau2 = 0.0;
  Branch limit_section = Branch::section_outgoing;
};

/// Follows the spectral Legendrian towards the conic point set where it meets
/// the outgoing section: s -> 0, s' -> pi at fixed sigma.
ConicProfile conic_limit_profile(const BoundaryMetric& m, double lambda,
                                 double sigma, const CosphereState& start,
                                 std::span<const double> path);

struct PropagationOptions {
  int points_per_ray = 64;
  double shell_tolerance = 1e-8;
};

struct Ray {
  std::size_t seed = 0;
  std::vector<double> t;
  std::vector<ScCotangentPoint> points;
};

struct PropagationSet {
  double lambda = 0.0;
  std::vector<ScCotangentPoint> seeds;
  bool contains_outgoing_section = true;
  std::vector<Ray> rays;
  /// Seeds dropped because they lie on the incoming section (tau = +lambda, mu = 0).
  std::vector<std::size_t> incoming_seeds;

  std::vector<ScCotangentPoint> points() const;
  /// Distance of p from the set (seeds, ray samples, outgoing section).
  double distance(const BoundaryMetric& m, const ScCotangentPoint& p) const;
};

/// Chart-free distance between two cotangent points over the boundary.
double cotangent_distance(const ScCotangentPoint& a, const ScCotangentPoint& b);

/// Forward propagation of a wavefront seed set along bicharacteristics in the
/// direction of decreasing tau, together with the outgoing section.
PropagationSet propagation_set(const BoundaryMetric& m, double lambda,
                               std::span<const ScCotangentPoint> wf_in,
                               const PropagationOptions& opt = {});

/// CSV with header theta,y1_*,y2_*,tau1,tau2,mu1_*,mu2_*,branch,chart1,chart2.
void write_double_space_csv(std::ostream& os, std::span<const DoubleSpacePoint> pts);
/// JSON array of records with the same fields.
std::string double_space_json(std::span<const DoubleSpacePoint> pts);

}  // namespace conicscat
