#pragma once

// Run configuration: flat `key = value` lines grouped in [section] blocks,
// '#' or ';' starting a comment.  Every key has a default, a type and bounds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace conicscat::cli {

struct GeometryBlock {
  int n = 3;
  std::string metric = "round";  ///< round | bump
  double epsilon = 0.0;
  std::vector<double> bump_center;  ///< empty: (0, 0.6, 0.8) or (0.6, 0.8)
  double bump_width = 1.0;
  std::vector<double> start;        ///< empty: first basis vector
  double direction_angle = 0.3;
};

struct SpectralBlock {
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  int l_max = 10;
};

struct PotentialBlock {
  std::string family = "free";  ///< free | bump | inverse_square | exponential
  double strength = 2.0;
  double scale = 1.5;
};

struct NumericsBlock {
  std::uint64_t seed = 20240607;
  int samples = 2000;
  double contact_tolerance = 1e-7;
  double points_per_wavelength = 200.0;
  double max_step = 0.01;
  double rel_tolerance = 1e-12;
  double match_tolerance = 1e-7;
  double geodesic_length = 6.283185307179586;
  int geodesic_samples = 65;
  double kernel_r_min = 0.5;
  double kernel_r_max = 50.0;
  int kernel_points = 100;
  int mode_points = 200;
};

struct VerifyBlock {
  double pairing_lambda = 1.0;
  int pairing_l = 0;
  double cut_start = 2.0;
  double cut_end = 4.0;
  int stone_l = 0;
  double probe_lambda = 1.0;
  int probe_sign = 1;
  double tol_pairing = 1e-6;
  double tol_stone = 1e-3;
  double tol_jump_mode = 1e-5;
  double tol_jump_kernel = 1e-8;
  double tol_smatrix = 1e-7;
  double tol_unitarity = 1e-8;
  double tol_propagation = 0.02;
};

struct OutputBlock {
  std::string directory = "conicscat_out";
  std::vector<std::string> formats{"csv", "json"};
};

struct RunConfig {
  GeometryBlock geometry;
  SpectralBlock spectral;
  PotentialBlock potential;
  NumericsBlock numerics;
  VerifyBlock verify;
  OutputBlock output;

  bool wants(const std::string& format) const;
};

struct ParseResult {
  std::optional<RunConfig> config;
  std::vector<std::string> violations;  ///< every problem found, in line order
};

ParseResult parse_config(const std::string& text);

/// Bump centre and geodesic start with the dimension-dependent defaults applied.
std::vector<double> resolved_center(const GeometryBlock& g);
std::vector<double> resolved_start(const GeometryBlock& g);

/// Every setting that can change an artifact, one `section.key = value` line
/// each, in schema order.  The output directory is left out.
std::string canonical_text(const RunConfig& cfg);
/// CRC-64/XZ, 16 lowercase hex digits.
std::string crc64_hex(const std::string& bytes);
/// CRC-64 of the canonical text.
std::string config_hash(const RunConfig& cfg);

}  // namespace conicscat::cli
