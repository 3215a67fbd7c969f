#pragma once

// Subcommand drivers behind the command line: each computes its artifacts
// (in parallel where the work splits) and writes them with one writer per file.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "conicscat/boundary_geometry.hpp"
#include "conicscat/contact_legendrian.hpp"
#include "conicscat/euclidean_kernels.hpp"
#include "conicscat/identity_verification.hpp"
#include "conicscat/radial_scattering.hpp"
#include "run_config.hpp"

namespace conicscat::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_failed = 1,
  exit_inconclusive = 2,
  exit_usage = 64,
  exit_config = 65,
  exit_io = 74,
};

const std::vector<std::string>& subcommands();

struct RunOptions {
  std::filesystem::path output_dir;
  int jobs = 1;
};

/// Runs one subcommand (or `all`), writes artifacts plus manifest.json and
/// timings.json into the output directory and returns the exit status.
int run(const std::string& subcommand, const RunConfig& cfg, const RunOptions& opt,
        std::ostream& log);

/// Output directory: CONICSCAT_OUTPUT_DIR if set, else the config's.
std::filesystem::path output_directory(const RunConfig& cfg);

BoundaryMetric make_metric(const RunConfig& cfg);
RadialPotential make_potential(const RunConfig& cfg);
ModeOptions make_mode_options(const RunConfig& cfg);
VerificationConfig make_verification(const RunConfig& cfg);

struct Certification {
  LegendrianKind kind = LegendrianKind::spectral;
  double lambda = 1.0;
  std::size_t samples = 0;
  double max_contact = 0.0;
  /// Largest characteristic defect; -1 for Legendrians off the double space.
  double max_characteristic = -1.0;
  std::size_t one_sided = 0;  ///< samples whose stencil touched the domain edge
};

/// Largest contact defect over `samples` random (parameter, unit direction)
/// pairs drawn with the given seed.
Certification certify(LegendrianKind kind, const BoundaryMetric& m, double lambda,
                      std::size_t samples, std::uint64_t seed);

/// The Legendrians certified by legendrian-check.
const std::vector<LegendrianKind>& certified_kinds();

struct KernelFitSummary {
  OscillatoryFit sp;
  OscillatoryFit resolvent_plus;
  /// max r^{(n-1)/2} |R_+| over max r^{(n-1)/2} |R_+ - 2 pi i (outgoing branch of sp)|.
  double suppression = 0.0;
};
/// Fits of sp and R_+ on 400 log-spaced radii lambda r in [20, 2000].
KernelFitSummary kernel_fit_summary(int n, double lambda);

/// Runs fn(0..count-1) on `jobs` threads.  Exceptions are rethrown after the
/// pool drains (the first one wins).
void parallel_for(int jobs, std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace conicscat::cli
