#pragma once

// Free-space kernels on R^n (n = 2, 3): the spectral projection density
//   sp(lambda)(z', z'') = lambda^{n-2} / (2 (2 pi)^n) int_{S^{n-1}} e^{i lambda (z'-z'').w} dw
// and the outgoing/incoming resolvent kernels R(lambda^2 +- i0), together with
// oscillatory fits of their large-r behaviour and convolution against compactly
// supported data.

#include <cmath>
#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "conicscat/errors.hpp"
#include "conicscat/wavefront_probe.hpp"

namespace conicscat {

using cplx = std::complex<double>;

enum class KernelKind { spectral_projection, resolvent_plus, resolvent_minus };
std::string to_string(KernelKind k);

struct KernelSample {
  double r = 0.0;
  cplx value = 0.0;
  KernelKind kind = KernelKind::spectral_projection;
  int n = 3;
  double lambda = 1.0;
};

/// Smallest admissible quadrature order at lambda r: polar Gauss-Legendre
/// nodes for n = 3, points on the circle (at least 4 lambda r) for n = 2.
int required_sphere_order(int n, double lambda, double r);

/// sp kernel at separation r by sphere quadrature (polar Gauss-Legendre with
/// the axis along z' - z'' for n = 3, trapezoid on the circle for n = 2).
/// order = 0 picks one automatically; an explicit order below the required
/// one throws DomainError.
cplx sp_kernel(int n, double lambda, double r, int order = 0);
/// n = 3 sp kernel for an arbitrary separation vector with a full tensor
/// Gauss-Legendre x uniform-azimuth rule.
cplx sp_kernel(double lambda, const Eigen::Vector3d& separation, int order = 0);

/// J_0(x) + i Y_0(x): power series for x <= 12, Hankel asymptotics above.
cplx hankel0(double x);
/// n = 3: e^{+-i lambda r} / (4 pi r); n = 2: (+-i/4) H_0^{(1,2)}(lambda r).
cplx free_resolvent_kernel(int n, double lambda, double r, int sign);

std::vector<KernelSample> kernel_table(int n, double lambda, const std::vector<double>& radii,
                                       KernelKind kind);
void write_kernel_csv(std::ostream& os, const std::vector<KernelSample>& samples,
                      bool header = true);

/// max_r |R_+ - R_- - 2 pi i sp| over the grid, relative to max_r |R_+ - R_-|.
double kernel_jump_check(int n, double lambda, const std::vector<double>& radii);

struct OscillatoryFit {
  double lambda = 0.0;
  double order = 0.0;        ///< p in A r^{-p}
  cplx amp_plus = 0.0;       ///< leading coefficient of e^{+i lambda r}
  cplx amp_minus = 0.0;
  cplx corr_plus = 0.0;      ///< next coefficient, times r^{-p-1}
  cplx corr_minus = 0.0;
  bool plus_present = false;
  bool minus_present = false;
  double residual = 0.0;     ///< relative to the signal norm
  double condition = 0.0;

  /// e^{+-i lambda r} r^{-p} (A + B / r) for one branch.
  cplx branch(int sign, double r) const;
};

/// Fit sum_+- e^{+-i lambda r} r^{-p} (A_+- + B_+- / r) by variable projection.
/// Requires >= 200 samples spanning two decades with lambda r >= 20.
OscillatoryFit fit_oscillations(const std::vector<double>& r, const std::vector<cplx>& values,
                                double lambda);
std::string fit_json(const OscillatoryFit& fit);

/// Samples of f on the cube [-half_width, half_width]^n with uniform spacing.
struct GridFunction {
  int n = 3;
  double spacing = 0.5;
  double half_width = 3.0;
  std::vector<EVec> nodes;
  std::vector<cplx> values;

  template <class F>
  static GridFunction sample(int n, double half_width, double spacing, F&& f) {
    GridFunction g;
    g.n = n;
    g.spacing = spacing;
    g.half_width = half_width;
    const int m = static_cast<int>(std::floor(half_width / spacing + 1e-9));
    const int side = 2 * m + 1;
    const int total = n == 3 ? side * side * side : side * side;
    for (int k = 0; k < total; ++k) {
      EVec z(n);
      int rem = k;
      for (int d = 0; d < n; ++d) {
        z(d) = (rem % side - m) * spacing;
        rem /= side;
      }
      const cplx v = f(z);
      if (v != cplx(0.0)) {
        g.nodes.push_back(z);
        g.values.push_back(v);
      }
    }
    return g;
  }
  /// Radius of the smallest centred ball containing the nonzero samples.
  double support_radius() const;
};

/// u(x) = sum_z R_{+-}(|x - z|) f(z) spacing^n over the given points.
std::vector<cplx> resolvent_convolve(double lambda, const GridFunction& f, int sign,
                                     const std::vector<EVec>& points);
/// The same on rays, packaged for the wavefront probe (points given in R^n).
AngularSamples resolvent_convolve_rays(double lambda, const GridFunction& f, int sign,
                                       const std::vector<EVec>& directions,
                                       const std::vector<double>& radii);

}  // namespace conicscat
