#pragma once

// Windowed-oscillation detector for the scattering wavefront set near the
// boundary.  A function e^{i phi(y) r} a(y) r^{-(n-1)/2} with r = 1/x has
// wavefront at tau = -phi(y), mu = d phi, so a Gaussian-windowed Fourier
// transform in r of u r^{(n-1)/2} peaks at k = -tau.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "conicscat/boundary_geometry.hpp"

namespace conicscat {

/// u sampled along rays: values(i, j) = u(radii[j] * directions[i]).
struct AngularSamples {
  int n = 3;
  std::vector<double> radii;
  std::vector<EVec> directions;
  Eigen::MatrixXcd values;
};

struct ProbeOptions {
  double threshold = 1e-3;
  /// Gaussian window standard deviation in r; 0 selects 4 / lambda.
  double window_width = 0.0;
  int windows = 3;
  /// Frequencies |k| <= rate_factor * lambda are scanned.
  double rate_factor = 3.0;
  /// Required r_max * lambda.
  double min_extent = 40.0;
};

struct Detection {
  std::size_t direction = 0;
  ChartPoint y;
  double tau = 0.0;
  /// |mu|_h estimated from the angular phase derivative; 0 with one direction.
  double mu = 0.0;
  double amplitude = 0.0;
  double radius = 0.0;  ///< window centre
};

struct ProbeResult {
  std::vector<Detection> detections;
  bool resolution_warning = false;
  std::string warning;
  double reference = 0.0;  ///< max |u| r^{(n-1)/2} over all samples
};

ProbeResult wavefront_probe(const AngularSamples& u, double lambda,
                            const ProbeOptions& options = {});

}  // namespace conicscat
