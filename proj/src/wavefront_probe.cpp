#include "conicscat/wavefront_probe.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/tools/minima.hpp>

namespace conicscat {

namespace {

using cplx = std::complex<double>;

struct Window {
  double centre;
  std::vector<std::size_t> index;
  std::vector<double> weight;  // trapezoid weight times Gaussian
  double total = 0.0;
};

cplx windowed(const Window& w, const std::vector<double>& radii,
              const std::vector<cplx>& scaled, double k) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < w.index.size(); ++i) {
    const std::size_t j = w.index[i];
    acc += w.weight[i] * scaled[j] * std::polar(1.0, -k * radii[j]);
  }
  return acc / w.total;
}

double round_angle(const EVec& a, const EVec& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

}  // namespace

ProbeResult wavefront_probe(const AngularSamples& u, double lambda,
                            const ProbeOptions& options) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  const std::size_t nr = u.radii.size();
  const std::size_t nd = u.directions.size();
  if (nr < 8 || nd == 0 || static_cast<std::size_t>(u.values.rows()) != nd ||
      static_cast<std::size_t>(u.values.cols()) != nr)
    throw DomainError("probe samples have inconsistent shape");
  for (std::size_t j = 1; j < nr; ++j)
    if (!(u.radii[j] > u.radii[j - 1])) throw DomainError("radii must increase");

  ProbeResult out;
  const double power = 0.5 * (u.n - 1);
  const double r_max = u.radii.back();
  const double sigma = options.window_width > 0 ? options.window_width : 4.0 / lambda;
  const double k_max = options.rate_factor * lambda;
  if (r_max * lambda < options.min_extent) {
    out.resolution_warning = true;
    out.warning = "radial extent r_max * lambda = " + std::to_string(r_max * lambda) +
                  " is below " + std::to_string(options.min_extent);
  }

  std::vector<std::vector<cplx>> scaled(nd, std::vector<cplx>(nr));
  for (std::size_t i = 0; i < nd; ++i)
    for (std::size_t j = 0; j < nr; ++j) {
      scaled[i][j] = u.values(i, j) * std::pow(u.radii[j], power);
      out.reference = std::max(out.reference, std::abs(scaled[i][j]));
    }

  // window centres across the outer half of the grid
  const double hi = r_max - 3.0 * sigma;
  const double lo = std::max(0.5 * r_max, u.radii.front() + 3.0 * sigma);
  std::vector<Window> windows;
  const int count = std::max(1, options.windows);
  if (hi < lo) {
    out.resolution_warning = true;
    out.warning += (out.warning.empty() ? "" : "; ") +
                   std::string("grid too short for the analysis window");
  }
  for (int w = 0; w < count; ++w) {
    Window win;
    win.centre = hi < lo ? 0.5 * (u.radii.front() + r_max)
                         : (count == 1 ? hi : lo + (hi - lo) * w / (count - 1));
    for (std::size_t j = 0; j < nr; ++j) {
      const double z = (u.radii[j] - win.centre) / sigma;
      if (std::abs(z) > 6.0) continue;
      const double left = j > 0 ? u.radii[j] - u.radii[j - 1] : 0.0;
      const double right = j + 1 < nr ? u.radii[j + 1] - u.radii[j] : 0.0;
      if (std::max(left, right) * k_max > M_PI && !out.resolution_warning) {
        out.resolution_warning = true;
        out.warning = "radial spacing does not resolve the scanned frequencies";
      }
      const double g = std::exp(-0.5 * z * z) * 0.5 * (left + right);
      win.index.push_back(j);
      win.weight.push_back(g);
      win.total += g;
    }
    if (win.total > 0.0) windows.push_back(std::move(win));
    if (hi < lo) break;
  }

  const double dk = 0.05 / sigma;
  const int steps = static_cast<int>(std::ceil(2.0 * k_max / dk));
  for (const Window& win : windows) {
    // spectra for every direction on the scan grid
    std::vector<std::vector<double>> mag(nd, std::vector<double>(steps + 1));
    double spectral_max = 0.0;
    for (std::size_t i = 0; i < nd; ++i)
      for (int s = 0; s <= steps; ++s) {
        mag[i][s] = std::abs(windowed(win, u.radii, scaled[i], -k_max + s * dk));
        spectral_max = std::max(spectral_max, mag[i][s]);
      }
    const double floor = options.threshold * std::max(out.reference, 0.0);
    const double rel_floor = options.threshold * spectral_max;
    for (std::size_t i = 0; i < nd; ++i) {
      for (int s = 1; s < steps; ++s) {
        const double v = mag[i][s];
        if (!(v >= mag[i][s - 1] && v > mag[i][s + 1])) continue;
        if (v < floor || v < rel_floor || v == 0.0) continue;
        const double k0 = -k_max + s * dk;
        auto neg = [&](double k) { return -std::abs(windowed(win, u.radii, scaled[i], k)); };
        const auto best = boost::math::tools::brent_find_minima(neg, k0 - dk, k0 + dk, 40);
        Detection det;
        det.direction = i;
        det.y = charts::project(u.directions[i], charts::preferred_chart(u.directions[i]));
        det.tau = -best.first;
        det.amplitude = -best.second;
        det.radius = win.centre;
        // angular phase derivative against the nearest neighbouring rays
        const cplx here = windowed(win, u.radii, scaled[i], best.first);
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nd; ++j)
          if (j != i)
            nearest = std::min(nearest, round_angle(u.directions[i], u.directions[j]));
        for (std::size_t j = 0; j < nd; ++j) {
          if (j == i) continue;
          const double ang = round_angle(u.directions[i], u.directions[j]);
          if (ang > 1.5 * nearest || ang == 0.0) continue;
          const cplx there = windowed(win, u.radii, scaled[j], best.first);
          det.mu = std::max(det.mu, std::abs(std::arg(there * std::conj(here))) /
                                        (ang * win.centre));
        }
        out.detections.push_back(std::move(det));
      }
    }
  }
  return out;
}

}  // namespace conicscat
