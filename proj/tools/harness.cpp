#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "conicscat/errors.hpp"
#include "conicscat/euclidean_kernels.hpp"
#include "json.hpp"

#ifndef CONICSCAT_VERSION
#define CONICSCAT_VERSION "0.0.0"
#endif

namespace conicscat::cli {

namespace {

using ojson = nlohmann::ordered_json;
constexpr cplx I(0.0, 1.0);

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Collects artifacts of one run; each file is written once, by this writer.
class Bundle {
 public:
  Bundle(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& bytes, bool hashed = true) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << bytes;
    os.close();
    if (!os) throw IoError("failed writing " + path.string());
    ojson rec;
    rec["file"] = name;
    rec["bytes"] = hashed ? ojson(bytes.size()) : ojson(nullptr);
    rec["crc64"] = hashed ? ojson(crc64_hex(bytes)) : ojson(nullptr);
    artifacts_.push_back(rec);
  }
  void timing(const std::string& what, double seconds) { timings_[what] = seconds; }
  const ojson& artifacts() const { return artifacts_; }
  const ojson& timings() const { return timings_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  ojson artifacts_ = ojson::array();
  ojson timings_ = ojson::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EVec to_evec(const std::vector<double>& v) {
  EVec e(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) e(static_cast<int>(i)) = v[i];
  return e.normalized();
}

std::vector<double> unit_direction(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> g;
  std::vector<double> v(k);
  double norm = 0.0;
  for (auto& x : v) {
    x = g(rng);
    norm += x * x;
  }
  for (auto& x : v) x /= std::sqrt(norm);
  return v;
}

bool on_characteristic_set(LegendrianKind k) {
  return k == LegendrianKind::spectral || k == LegendrianKind::spectral_section_outgoing ||
         k == LegendrianKind::spectral_section_incoming;
}

// ----------------------------------------------------------------- subcommands

int run_geodesic(const RunConfig& cfg, Bundle& out) {
  const BoundaryMetric m = make_metric(cfg);
  const EVec w = to_evec(resolved_start(cfg.geometry));
  const ChartPoint p = charts::project(w, charts::preferred_chart(w));
  CosphereState st =
      m.dimension() == 2
          ? CosphereState::from_angle(m, p, cfg.geometry.direction_angle)
          : CosphereState::from_sign(m, p, std::cos(cfg.geometry.direction_angle) >= 0 ? 1 : -1);
  const int count = cfg.numerics.geodesic_samples;
  const double ds = cfg.numerics.geodesic_length / (count - 1);
  const int n = m.ambient_dimension();
  std::ostringstream csv;
  ojson records = ojson::array();
  csv << "s";
  for (int i = 0; i < n; ++i) csv << ",omega" << i + 1;
  for (int i = 0; i < n; ++i) csv << ",xi" << i + 1;
  csv << ",cosphere_defect,energy_drift\n";
  double drift = 0.0;
  for (int k = 0; k < count; ++k) {
    if (k > 0) {
      const FlowResult r = flow(m, st, ds);
      st = r.state;
      drift = std::max(drift, r.energy_drift);
    }
    const EVec om = charts::embed(st.point);
    const EVec xi = charts::embed_covector(st.point, st.mu);
    const double defect = std::abs(metric_eval(m, st.point, st.mu) - 1.0);
    csv << g17(k * ds);
    for (int i = 0; i < n; ++i) csv << ',' << g17(om(i));
    for (int i = 0; i < n; ++i) csv << ',' << g17(xi(i));
    csv << ',' << g17(defect) << ',' << g17(drift) << '\n';
    ojson rec;
    rec["s"] = k * ds;
    rec["omega"] = std::vector<double>(om.data(), om.data() + n);
    rec["xi"] = std::vector<double>(xi.data(), xi.data() + n);
    rec["cosphere_defect"] = defect;
    rec["energy_drift"] = drift;
    records.push_back(rec);
  }
  if (cfg.wants("csv")) out.write("geodesic.csv", csv.str());
  if (cfg.wants("json")) out.write("geodesic.json", records.dump(1));
  return exit_ok;
}

int run_legendrian_check(const RunConfig& cfg, const RunOptions& opt, Bundle& out,
                         std::ostream& log) {
  const BoundaryMetric m = make_metric(cfg);
  const auto& kinds = certified_kinds();
  const auto& lambdas = cfg.spectral.lambdas;
  std::vector<Certification> rows(kinds.size() * lambdas.size());
  parallel_for(opt.jobs, rows.size(), [&](std::size_t i) {
    const auto kind = kinds[i / lambdas.size()];
    const double lambda = lambdas[i % lambdas.size()];
    rows[i] = certify(kind, m, lambda, cfg.numerics.samples, cfg.numerics.seed + i);
  });
  const double tol = cfg.numerics.contact_tolerance;
  const double char_tol = 1e-8;
  bool ok = true;
  std::ostringstream csv;
  csv << "kind,lambda,samples,max_contact_defect,max_characteristic_defect,one_sided\n";
  ojson records = ojson::array();
  for (const auto& r : rows) {
    const bool pass = r.max_contact <= tol && r.max_characteristic <= char_tol;
    ok = ok && pass;
    csv << to_string(r.kind) << ',' << g17(r.lambda) << ',' << r.samples << ','
        << g17(r.max_contact) << ',' << g17(r.max_characteristic) << ',' << r.one_sided << '\n';
    ojson rec;
    rec["kind"] = to_string(r.kind);
    rec["lambda"] = r.lambda;
    rec["samples"] = r.samples;
    rec["max_contact_defect"] = r.max_contact;
    rec["max_characteristic_defect"] = r.max_characteristic;
    rec["one_sided"] = r.one_sided;
    rec["passed"] = pass;
    records.push_back(rec);
  }

  // a sample set of the spectral Legendrian for plotting
  const LegendrianSampler L(LegendrianKind::spectral, m, lambdas.front());
  std::mt19937_64 rng(cfg.numerics.seed);
  std::vector<DoubleSpacePoint> pts;
  const int count = std::min(cfg.numerics.samples, 500);
  for (int k = 0; k < count; ++k)
    pts.push_back(std::get<DoubleSpacePoint>(L.sample(L.random_params(rng))));

  if (cfg.wants("csv")) {
    out.write("legendrian_check.csv", csv.str());
    std::ostringstream s;
    write_double_space_csv(s, pts);
    out.write("spectral_samples.csv", s.str());
  }
  if (cfg.wants("json")) {
    ojson doc;
    doc["contact_tolerance"] = tol;
    doc["characteristic_tolerance"] = char_tol;
    doc["passed"] = ok;
    doc["rows"] = records;
    out.write("legendrian_check.json", doc.dump(1));
    out.write("spectral_samples.json", double_space_json(pts));
  }
  log << "legendrian-check: " << (ok ? "all defects within tolerance" : "defect above tolerance")
      << '\n';
  return ok ? exit_ok : exit_failed;
}

int run_modes(const RunConfig& cfg, const RunOptions& opt, Bundle& out) {
  const auto& lambdas = cfg.spectral.lambdas;
  const int ls = cfg.spectral.l_max + 1;
  const int n = cfg.geometry.n;
  const RadialPotential v = make_potential(cfg);
  const ModeOptions mo = make_mode_options(cfg);
  std::vector<ModeSolution> sols(lambdas.size() * ls);
  parallel_for(opt.jobs, sols.size(), [&](std::size_t i) {
    const ModeProblem p{n, static_cast<int>(i % ls), lambdas[i / ls], v};
    ModeSolver solver(p, mo);
    sols[i] = solver.poisson(1.0, 1);
  });
  std::ostringstream csv;
  csv << "lambda,l,r,re_u,im_u\n";
  ojson records = ojson::array();
  const std::size_t want = static_cast<std::size_t>(cfg.numerics.mode_points);
  for (const auto& s : sols) {
    const std::size_t m = s.r.size();
    const std::size_t count = std::min(want, m);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t j = count == 1 ? 0 : (k * (m - 1)) / (count - 1);
      const cplx u = s.u(j);
      csv << g17(s.problem.lambda) << ',' << s.problem.l << ',' << g17(s.r[j]) << ','
          << g17(u.real()) << ',' << g17(u.imag()) << '\n';
    }
    ojson rec;
    rec["lambda"] = s.problem.lambda;
    rec["l"] = s.problem.l;
    rec["a_minus"] = {s.a_minus.real(), s.a_minus.imag()};
    rec["a_plus"] = {s.a_plus.real(), s.a_plus.imag()};
    rec["match_residual"] = s.residual;
    rec["grid_points"] = m;
    rec["r_max"] = s.r.back();
    records.push_back(rec);
  }
  if (cfg.wants("csv")) out.write("modes.csv", csv.str());
  if (cfg.wants("json")) {
    ojson doc;
    doc["n"] = n;
    doc["potential"] = v.describe();
    doc["normalization"] = "incoming coefficient a_- = 1";
    doc["modes"] = records;
    out.write("modes.json", doc.dump(1));
  }
  return exit_ok;
}

int run_smatrix(const RunConfig& cfg, const RunOptions& opt, Bundle& out) {
  const auto& lambdas = cfg.spectral.lambdas;
  const RadialPotential v = make_potential(cfg);
  const ModeOptions mo = make_mode_options(cfg);
  std::vector<SMatrixDiag> tables(lambdas.size());
  parallel_for(opt.jobs, tables.size(), [&](std::size_t i) {
    tables[i] = smatrix_diag(cfg.geometry.n, lambdas[i], v, cfg.spectral.l_max, mo);
  });
  if (cfg.wants("csv")) {
    std::ostringstream s;
    write_smatrix_csv(s, tables);
    out.write("smatrix.csv", s.str());
  }
  if (cfg.wants("json")) {
    ojson doc;
    doc["n"] = cfg.geometry.n;
    doc["potential"] = v.describe();
    doc["normalization"] = tables.empty() ? "geometric" : tables.front().normalization;
    ojson arr = ojson::array();
    for (const auto& t : tables)
      for (const auto& e : t.entries) {
        ojson rec;
        rec["lambda"] = t.lambda;
        rec["l"] = e.l;
        rec["s"] = {e.s.real(), e.s.imag()};
        rec["phase_shift"] = e.phase_shift;
        rec["residual"] = e.residual;
        arr.push_back(rec);
      }
    doc["entries"] = arr;
    out.write("smatrix.json", doc.dump(1));
  }
  return exit_ok;
}

int run_kernel(const RunConfig& cfg, const RunOptions& opt, Bundle& out) {
  const int n = cfg.geometry.n;
  const auto& lambdas = cfg.spectral.lambdas;
  const int count = cfg.numerics.kernel_points;
  std::vector<double> radii(count);
  for (int k = 0; k < count; ++k)
    radii[k] = cfg.numerics.kernel_r_min +
               (cfg.numerics.kernel_r_max - cfg.numerics.kernel_r_min) * k / (count - 1);
  struct Result {
    std::vector<KernelSample> table;
    KernelFitSummary fits;
    double jump = 0.0;
  };
  std::vector<Result> res(lambdas.size());
  parallel_for(opt.jobs, res.size(), [&](std::size_t i) {
    const double lambda = lambdas[i];
    for (KernelKind k :
         {KernelKind::spectral_projection, KernelKind::resolvent_plus, KernelKind::resolvent_minus}) {
      const auto t = kernel_table(n, lambda, radii, k);
      res[i].table.insert(res[i].table.end(), t.begin(), t.end());
    }
    res[i].fits = kernel_fit_summary(n, lambda);
    res[i].jump = kernel_jump_check(n, lambda, radii);
  });
  if (cfg.wants("csv")) {
    std::ostringstream s;
    s << "lambda,r,re,im,kind\n";
    for (const auto& r : res)
      for (const auto& k : r.table)
        s << g17(k.lambda) << ',' << g17(k.r) << ',' << g17(k.value.real()) << ','
          << g17(k.value.imag()) << ',' << to_string(k.kind) << '\n';
    out.write("kernel.csv", s.str());
  }
  if (cfg.wants("json")) {
    ojson arr = ojson::array();
    for (std::size_t i = 0; i < res.size(); ++i) {
      ojson rec;
      rec["lambda"] = lambdas[i];
      rec["jump_residual"] = res[i].jump;
      rec["sp_fit"] = ojson::parse(fit_json(res[i].fits.sp));
      rec["resolvent_plus_fit"] = ojson::parse(fit_json(res[i].fits.resolvent_plus));
      rec["outgoing_suppression"] = res[i].fits.suppression;
      arr.push_back(rec);
    }
    ojson doc;
    doc["n"] = n;
    doc["kernels"] = arr;
    out.write("kernel_fits.json", doc.dump(1));
  }
  return exit_ok;
}

int run_verify(const RunConfig& cfg, const RunOptions& opt, Bundle& out, std::ostream& log) {
  const auto reports = run_verification(make_verification(cfg), opt.jobs);
  out.write("verify.json", reports_json(reports));
  bool failed = false, inconclusive = false;
  for (const auto& r : reports) {
    out.timing("verify." + r.name, r.runtime);
    failed = failed || r.status == CheckStatus::fail;
    inconclusive = inconclusive || r.status == CheckStatus::inconclusive;
    log << "verify " << r.name << ": " << to_string(r.status) << " residual " << g17(r.residual)
        << " tolerance " << g17(r.tolerance) << (r.message.empty() ? "" : " (" + r.message + ")")
        << '\n';
  }
  if (failed) return exit_failed;
  return inconclusive ? exit_inconclusive : exit_ok;
}

int combine(int a, int b) {
  if (a == exit_failed || b == exit_failed) return exit_failed;
  if (a == exit_inconclusive || b == exit_inconclusive) return exit_inconclusive;
  return exit_ok;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"geodesic", "legendrian-check", "modes", "smatrix",
                                              "kernel",   "verify",           "all"};
  return names;
}

const std::vector<LegendrianKind>& certified_kinds() {
  static const std::vector<LegendrianKind> kinds{
      LegendrianKind::outgoing_poisson,          LegendrianKind::incoming_poisson,
      LegendrianKind::outgoing_poisson_section,  LegendrianKind::incoming_poisson_section,
      LegendrianKind::spectral,                  LegendrianKind::spectral_section_outgoing,
      LegendrianKind::spectral_section_incoming, LegendrianKind::diagonal_conormal};
  return kinds;
}

void parallel_for(int jobs, std::size_t count, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_lock;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(error_lock);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t pool = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(count, 1));
  std::vector<std::thread> threads;
  for (std::size_t k = 1; k < pool; ++k) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

Certification certify(LegendrianKind kind, const BoundaryMetric& m, double lambda,
                      std::size_t samples, std::uint64_t seed) {
  const LegendrianSampler s(kind, m, lambda);
  std::mt19937_64 rng(seed);
  Certification c;
  c.kind = kind;
  c.lambda = lambda;
  c.samples = samples;
  const bool characteristic = on_characteristic_set(kind);
  c.max_characteristic = characteristic ? 0.0 : -1.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const SamplerParams p = s.random_params(rng);
    const auto dir = unit_direction(rng, p.values.size());
    const ContactDefect d = contact_defect(s, p, dir);
    c.max_contact = std::max(c.max_contact, d.value);
    if (d.one_sided) ++c.one_sided;
    if (characteristic) {
      const auto q = std::get<DoubleSpacePoint>(s.sample(p));
      c.max_characteristic = std::max(c.max_characteristic, characteristic_defect(m, q, lambda));
    }
  }
  return c;
}

KernelFitSummary kernel_fit_summary(int n, double lambda) {
  std::vector<double> r(400);
  for (int k = 0; k < 400; ++k) r[k] = 20.0 / lambda * std::pow(100.0, k / 399.0);
  std::vector<cplx> sp, rp;
  for (double x : r) {
    sp.push_back(sp_kernel(n, lambda, x));
    rp.push_back(free_resolvent_kernel(n, lambda, x, 1));
  }
  KernelFitSummary out;
  out.sp = fit_oscillations(r, sp, lambda);
  out.resolvent_plus = fit_oscillations(r, rp, lambda);
  double before = 0.0, after = 0.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double w = std::pow(r[j], 0.5 * (n - 1));
    before = std::max(before, std::abs(rp[j]) * w);
    after = std::max(after, std::abs(rp[j] - 2.0 * M_PI * I * out.sp.branch(1, r[j])) * w);
  }
  out.suppression = after > 0.0 ? before / after : std::numeric_limits<double>::infinity();
  return out;
}

std::filesystem::path output_directory(const RunConfig& cfg) {
  if (const char* env = std::getenv("CONICSCAT_OUTPUT_DIR"); env && *env) return env;
  return cfg.output.directory;
}

BoundaryMetric make_metric(const RunConfig& cfg) {
  const auto& g = cfg.geometry;
  if (g.metric == "round") return BoundaryMetric::round(g.n);
  return BoundaryMetric::perturbed(g.n, g.epsilon, to_evec(resolved_center(g)), g.bump_width);
}

RadialPotential make_potential(const RunConfig& cfg) {
  const auto& p = cfg.potential;
  if (p.family == "bump") return RadialPotential::bump(p.strength, p.scale);
  if (p.family == "inverse_square") return RadialPotential::inverse_square(p.strength, p.scale);
  if (p.family == "exponential") return RadialPotential::exponential(p.strength);
  return RadialPotential::free();
}

ModeOptions make_mode_options(const RunConfig& cfg) {
  ModeOptions o;
  o.points_per_wavelength = cfg.numerics.points_per_wavelength;
  o.max_step = cfg.numerics.max_step;
  o.rel_tolerance = cfg.numerics.rel_tolerance;
  o.match_tolerance = cfg.numerics.match_tolerance;
  return o;
}

VerificationConfig make_verification(const RunConfig& cfg) {
  VerificationConfig v;
  v.n = cfg.geometry.n;
  v.lambdas = cfg.spectral.lambdas;
  v.l_max = cfg.spectral.l_max;
  v.potential = make_potential(cfg);
  v.options = make_mode_options(cfg);
  const auto& b = cfg.verify;
  v.pairing_lambda = b.pairing_lambda;
  v.pairing_l = b.pairing_l;
  v.cut_start = b.cut_start;
  v.cut_end = b.cut_end;
  v.stone_l = b.stone_l;
  v.propagation.n = cfg.geometry.n;
  v.propagation.lambda = b.probe_lambda;
  v.propagation.sign = b.probe_sign;
  v.tol_pairing = b.tol_pairing;
  v.tol_stone = b.tol_stone;
  v.tol_jump.mode = b.tol_jump_mode;
  v.tol_jump.kernel = b.tol_jump_kernel;
  v.tol_smatrix = b.tol_smatrix;
  v.tol_unitarity = b.tol_unitarity;
  v.tol_propagation = b.tol_propagation;
  v.config_hash = config_hash(cfg);
  return v;
}

int run(const std::string& subcommand, const RunConfig& cfg, const RunOptions& opt,
        std::ostream& log) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) return exit_usage;
  std::error_code ec;
  std::filesystem::create_directories(opt.output_dir, ec);
  if (ec) {
    log << "error: cannot create " << opt.output_dir.string() << ": " << ec.message() << '\n';
    return exit_io;
  }
  Bundle bundle(opt.output_dir);
  std::vector<std::string> steps;
  if (subcommand == "all") steps.assign(names.begin(), names.end() - 1);
  else steps.push_back(subcommand);

  int status = exit_ok;
  std::string failure;
  try {
    for (const auto& step : steps) {
      const auto t0 = std::chrono::steady_clock::now();
      int code = exit_ok;
      try {
        if (step == "geodesic") code = run_geodesic(cfg, bundle);
        else if (step == "legendrian-check") code = run_legendrian_check(cfg, opt, bundle, log);
        else if (step == "modes") code = run_modes(cfg, opt, bundle);
        else if (step == "smatrix") code = run_smatrix(cfg, opt, bundle);
        else if (step == "kernel") code = run_kernel(cfg, opt, bundle);
        else if (step == "verify") code = run_verify(cfg, opt, bundle, log);
      } catch (const IoError&) {
        throw;
      } catch (const std::exception& e) {
        log << "error in " << step << ": " << e.what() << '\n';
        code = exit_failed;
      }
      bundle.timing(step, seconds_since(t0));
      status = combine(status, code);
    }
    bundle.write("timings.json", bundle.timings().dump(1), false);

    ojson manifest;
    manifest["tool"] = "conicscat";
    manifest["subcommand"] = subcommand;
    manifest["config_hash"] = config_hash(cfg);
    manifest["config"] = canonical_text(cfg);
    ojson versions;
    versions["conicscat"] = CONICSCAT_VERSION;
    versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    versions["boost"] = BOOST_LIB_VERSION;
    versions["compiler"] = __VERSION__;
    manifest["versions"] = versions;
    manifest["timings"] = "timings.json";
    manifest["artifacts"] = bundle.artifacts();
    manifest["exit_status"] = status;
    bundle.write("manifest.json", manifest.dump(1), false);
  } catch (const IoError& e) {
    log << "error: " << e.what() << '\n';
    return exit_io;
  }
  return status;
}

}  // namespace conicscat::cli
