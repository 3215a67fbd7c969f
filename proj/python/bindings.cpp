#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "conicscat/boundary_geometry.hpp"
#include "conicscat/contact_legendrian.hpp"
#include "conicscat/euclidean_kernels.hpp"
#include "conicscat/identity_verification.hpp"
#include "conicscat/radial_scattering.hpp"
#include "harness.hpp"
#include "run_config.hpp"

namespace py = pybind11;
using namespace conicscat;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(v.size(), v.data());
}
py::array_t<cplx> to_array(const std::vector<cplx>& v) {
  return py::array_t<cplx>(v.size(), v.data());
}

EVec to_evec(const std::vector<double>& v) {
  EVec e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e(i) = v[i];
  return e;
}
std::vector<double> from_evec(const EVec& e) { return {e.data(), e.data() + e.size()}; }

BoundaryMetric metric_for(int n, double epsilon) {
  if (epsilon == 0.0) return BoundaryMetric::round(n);
  EVec c(n);
  if (n == 3) c << 0.0, 0.6, 0.8;
  else c << 0.6, 0.8;
  return BoundaryMetric::perturbed(n, epsilon, c, 1.0);
}

py::dict report_dict(const CheckReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["status"] = to_string(r.status);
  d["passed"] = r.passed;
  d["residual"] = r.residual;
  d["tolerance"] = r.tolerance;
  d["runtime"] = r.runtime;
  py::dict details;
  for (const auto& [k, v] : r.details) details[py::str(k)] = v;
  d["details"] = details;
  d["message"] = r.message;
  return d;
}

cli::RunConfig config_or_throw(const std::string& text) {
  auto parsed = cli::parse_config(text);
  if (!parsed.config) {
    std::string msg = "invalid configuration:";
    for (const auto& v : parsed.violations) msg += "\n  " + v;
    throw py::value_error(msg);
  }
  return *parsed.config;
}

}  // namespace

PYBIND11_MODULE(_conicscat, m) {
  m.doc() = "Scattering on conic boundaries: modes, S-matrix, kernels, Legendrians, checks";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  // ------------------------------------------------------------ radial
  py::class_<RadialPotential>(m, "Potential")
      .def_static("free", &RadialPotential::free)
      .def_static("bump", &RadialPotential::bump, py::arg("amplitude"), py::arg("radius"))
      .def_static("inverse_square", &RadialPotential::inverse_square, py::arg("c"),
                  py::arg("cutoff") = 0.0)
      .def_static("exponential", &RadialPotential::exponential, py::arg("c"))
      .def("__call__", &RadialPotential::operator(), py::arg("r"))
      .def("__repr__", &RadialPotential::describe);

  m.def("free_scattering_eigenvalue", &free_scattering_eigenvalue, py::arg("n"), py::arg("l"));
  m.def(
      "scattering_eigenvalue",
      [](int n, int l, double lambda, const RadialPotential& v) {
        return scattering_eigenvalue({n, l, lambda, v});
      },
      py::arg("n"), py::arg("l"), py::arg("lam"), py::arg("potential") = RadialPotential::free());
  m.def(
      "smatrix",
      [](int n, double lambda, const RadialPotential& v, int l_max) {
        const auto t = smatrix_diag(n, lambda, v, l_max);
        py::list rows;
        for (const auto& e : t.entries) {
          py::dict d;
          d["l"] = e.l;
          d["s"] = e.s;
          d["phase_shift"] = e.phase_shift;
          d["residual"] = e.residual;
          rows.append(d);
        }
        return rows;
      },
      py::arg("n"), py::arg("lam"), py::arg("potential") = RadialPotential::free(),
      py::arg("l_max") = 10);
  m.def("inverse_square_phase_shift", &inverse_square_phase_shift, py::arg("n"), py::arg("l"),
        py::arg("c"));
  m.def(
      "solve_mode",
      [](int n, int l, double lambda, const RadialPotential& v) {
        const auto s = solve_mode({n, l, lambda, v});
        py::dict d;
        d["r"] = to_array(s.r);
        d["w"] = to_array(s.w);
        d["a_minus"] = s.a_minus;
        d["a_plus"] = s.a_plus;
        d["residual"] = s.residual;
        return d;
      },
      py::arg("n"), py::arg("l"), py::arg("lam"), py::arg("potential") = RadialPotential::free());
  m.def(
      "jump_identity_mode",
      [](int n, int l, double lambda, const RadialPotential& v) {
        return jump_identity_mode({n, l, lambda, v}, [l](double r) {
          return cplx(std::pow(r, l) * std::exp(-0.5 * r * r));
        });
      },
      py::arg("n"), py::arg("l"), py::arg("lam"), py::arg("potential") = RadialPotential::free(),
      "Relative jump-identity residual for the forcing r^l exp(-r^2/2).");

  // ------------------------------------------------------------ kernels
  m.def("sp_kernel", py::overload_cast<int, double, double, int>(&sp_kernel), py::arg("n"),
        py::arg("lam"), py::arg("r"), py::arg("order") = 0);
  m.def("free_resolvent_kernel", &free_resolvent_kernel, py::arg("n"), py::arg("lam"),
        py::arg("r"), py::arg("sign"));
  m.def("kernel_jump_check", &kernel_jump_check, py::arg("n"), py::arg("lam"), py::arg("radii"));
  m.def(
      "kernel_fits",
      [](int n, double lambda) {
        const auto f = cli::kernel_fit_summary(n, lambda);
        auto fit = [](const OscillatoryFit& o) {
          py::dict d;
          d["order"] = o.order;
          d["amp_plus"] = o.amp_plus;
          d["amp_minus"] = o.amp_minus;
          d["plus_present"] = o.plus_present;
          d["minus_present"] = o.minus_present;
          d["residual"] = o.residual;
          return d;
        };
        py::dict d;
        d["sp"] = fit(f.sp);
        d["resolvent_plus"] = fit(f.resolvent_plus);
        d["suppression"] = f.suppression;
        return d;
      },
      py::arg("n"), py::arg("lam"));

  // ------------------------------------------------------------ geometry
  m.def(
      "geodesic",
      [](const std::vector<double>& start, const std::vector<double>& direction, double s,
         double epsilon) {
        const int n = static_cast<int>(start.size());
        if (direction.size() != start.size()) throw DomainError("start/direction size mismatch");
        const BoundaryMetric metric = metric_for(n, epsilon);
        const EVec w = to_evec(start).normalized();
        EVec v = to_evec(direction);
        v -= w * w.dot(v);
        const ChartPoint p = charts::project(w, charts::preferred_chart(w));
        const auto st = CosphereState::normalized(metric, p, charts::pull_covector(p, v));
        const auto r = flow(metric, st, s);
        py::dict d;
        d["omega"] = from_evec(charts::embed(r.state.point));
        d["xi"] = from_evec(charts::embed_covector(r.state.point, r.state.mu));
        d["energy_drift"] = r.energy_drift;
        return d;
      },
      py::arg("start"), py::arg("direction"), py::arg("s"), py::arg("epsilon") = 0.0,
      "Unit-speed geodesic on S^{n-1} from an embedded point along an embedded direction.");
  m.def(
      "certify",
      [](const std::string& kind, int n, double lambda, std::size_t samples, std::uint64_t seed,
         double epsilon) {
        const auto c = cli::certify(legendrian_kind_from_string(kind), metric_for(n, epsilon),
                                    lambda, samples, seed);
        py::dict d;
        d["kind"] = to_string(c.kind);
        d["samples"] = c.samples;
        d["max_contact"] = c.max_contact;
        d["max_characteristic"] =
            c.max_characteristic < 0 ? py::object(py::none()) : py::float_(c.max_characteristic);
        return d;
      },
      py::arg("kind"), py::arg("n"), py::arg("lam"), py::arg("samples") = 1000,
      py::arg("seed") = 1, py::arg("epsilon") = 0.0,
      "Largest contact defect over random samples of a Legendrian.");
  m.def("legendrian_kinds", [] {
    std::vector<std::string> out;
    for (auto k : cli::certified_kinds()) out.push_back(to_string(k));
    return out;
  });

  // ------------------------------------------------------------ checks
  m.def(
      "verify",
      [](const std::string& config, int jobs) {
        const auto reports = run_verification(cli::make_verification(config_or_throw(config)), jobs);
        py::list out;
        for (const auto& r : reports) out.append(report_dict(r));
        return out;
      },
      py::arg("config") = "", py::arg("jobs") = 1,
      "Runs the six identity checks for a configuration given as text.");
  m.def(
      "config_hash", [](const std::string& config) { return cli::config_hash(config_or_throw(config)); },
      py::arg("config") = "");
  m.def(
      "config_violations",
      [](const std::string& config) { return cli::parse_config(config).violations; },
      py::arg("config"));
  m.def(
      "run",
      [](const std::string& subcommand, const std::string& config,
         const std::filesystem::path& output_dir, int jobs) {
        std::ostringstream log;
        const int code = cli::run(subcommand, config_or_throw(config), {output_dir, jobs}, log);
        return py::make_tuple(code, log.str());
      },
      py::arg("subcommand"), py::arg("config"), py::arg("output_dir"), py::arg("jobs") = 1,
      "Runs a command-line subcommand; returns (exit status, log).");
}
