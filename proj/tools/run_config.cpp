#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <boost/crc.hpp>

namespace conicscat::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string brief(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
std::optional<T> number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) return std::nullopt;
  return v;
}

// A setter parses and range-checks one value, returning an error message or "".
struct Field {
  std::string section, key;
  std::function<std::string(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string range_text(double lo, double hi, bool open_lo) {
  return std::string(open_lo ? "(" : "[") + brief(lo) + ", " + brief(hi) + "]";
}

template <class Block>
Field real_field(std::string sec, std::string key, Block RunConfig::*block, double Block::*member,
                 double lo, double hi, bool open_lo = false) {
  Field f{sec, key, nullptr, nullptr};
  f.set = [=](RunConfig& c, const std::string& v) -> std::string {
    const auto x = number<double>(v);
    if (!x) return "'" + v + "' is not a number";
    if (*x > hi || *x < lo || (open_lo && *x == lo))
      return brief(*x) + " is outside " + range_text(lo, hi, open_lo);
    (c.*block).*member = *x;
    return "";
  };
  f.get = [=](const RunConfig& c) { return fmt((c.*block).*member); };
  return f;
}

template <class Block>
Field int_field(std::string sec, std::string key, Block RunConfig::*block, int Block::*member,
                int lo, int hi) {
  Field f{sec, key, nullptr, nullptr};
  f.set = [=](RunConfig& c, const std::string& v) -> std::string {
    const auto x = number<int>(v);
    if (!x) return "'" + v + "' is not an integer";
    if (*x < lo || *x > hi)
      return std::to_string(*x) + " is outside [" + std::to_string(lo) + ", " +
             std::to_string(hi) + "]";
    (c.*block).*member = *x;
    return "";
  };
  f.get = [=](const RunConfig& c) { return std::to_string((c.*block).*member); };
  return f;
}

template <class Block>
Field choice_field(std::string sec, std::string key, Block RunConfig::*block,
                   std::string Block::*member, std::vector<std::string> allowed) {
  Field f{sec, key, nullptr, nullptr};
  f.set = [=](RunConfig& c, const std::string& v) -> std::string {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string msg = "'" + v + "' is not one of";
      for (const auto& a : allowed) msg += " " + a;
      return msg;
    }
    (c.*block).*member = v;
    return "";
  };
  f.get = [=](const RunConfig& c) { return (c.*block).*member; };
  return f;
}

template <class Block>
Field vector_field(std::string sec, std::string key, Block RunConfig::*block,
                   std::vector<double> Block::*member, double lo, double hi, bool open_lo,
                   std::size_t max_size) {
  Field f{sec, key, nullptr, nullptr};
  f.set = [=](RunConfig& c, const std::string& v) -> std::string {
    std::vector<double> out;
    for (const auto& item : split_list(v)) {
      const auto x = number<double>(item);
      if (!x) return "'" + item + "' is not a number";
      if (*x > hi || *x < lo || (open_lo && *x == lo))
        return brief(*x) + " is outside " + range_text(lo, hi, open_lo);
      out.push_back(*x);
    }
    if (out.empty() || out.size() > max_size)
      return "needs between 1 and " + std::to_string(max_size) + " values";
    (c.*block).*member = out;
    return "";
  };
  f.get = [=](const RunConfig& c) {
    std::string s;
    for (double x : (c.*block).*member) s += (s.empty() ? "" : ", ") + fmt(x);
    return s;
  };
  return f;
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    using R = RunConfig;
    std::vector<Field> f;
    const std::string g = "geometry", s = "spectral", p = "potential", n = "numerics",
                      v = "verify", o = "output";
    f.push_back(int_field(g, "n", &R::geometry, &GeometryBlock::n, 2, 3));
    f.push_back(choice_field(g, "metric", &R::geometry, &GeometryBlock::metric, {"round", "bump"}));
    f.push_back(real_field(g, "epsilon", &R::geometry, &GeometryBlock::epsilon, 0.0, 0.2));
    f.push_back(vector_field(g, "bump_center", &R::geometry, &GeometryBlock::bump_center, -1.0,
                             1.0, false, 3));
    f.push_back(real_field(g, "bump_width", &R::geometry, &GeometryBlock::bump_width, 0.0, 2.0,
                           true));
    f.push_back(vector_field(g, "start", &R::geometry, &GeometryBlock::start, -1.0, 1.0, false, 3));
    f.push_back(real_field(g, "direction_angle", &R::geometry, &GeometryBlock::direction_angle,
                           -7.0, 7.0));

    f.push_back(vector_field(s, "lambdas", &R::spectral, &SpectralBlock::lambdas, 0.05, 20.0,
                             false, 64));
    f.push_back(int_field(s, "l_max", &R::spectral, &SpectralBlock::l_max, 0, 40));

    f.push_back(choice_field(p, "family", &R::potential, &PotentialBlock::family,
                             {"free", "bump", "inverse_square", "exponential"}));
    f.push_back(real_field(p, "strength", &R::potential, &PotentialBlock::strength, -50.0, 50.0));
    f.push_back(real_field(p, "scale", &R::potential, &PotentialBlock::scale, 0.0, 20.0));

    Field seed{n, "seed", nullptr, nullptr};
    seed.set = [](RunConfig& c, const std::string& val) -> std::string {
      const auto x = number<std::uint64_t>(val);
      if (!x) return "'" + val + "' is not a nonnegative integer";
      c.numerics.seed = *x;
      return "";
    };
    seed.get = [](const RunConfig& c) { return std::to_string(c.numerics.seed); };
    f.push_back(seed);
    f.push_back(int_field(n, "samples", &R::numerics, &NumericsBlock::samples, 1, 1000000));
    f.push_back(real_field(n, "contact_tolerance", &R::numerics,
                           &NumericsBlock::contact_tolerance, 0.0, 1e-2, true));
    f.push_back(real_field(n, "points_per_wavelength", &R::numerics,
                           &NumericsBlock::points_per_wavelength, 50.0, 5000.0));
    f.push_back(real_field(n, "max_step", &R::numerics, &NumericsBlock::max_step, 1e-4, 0.1));
    f.push_back(real_field(n, "rel_tolerance", &R::numerics, &NumericsBlock::rel_tolerance,
                           1e-14, 1e-6));
    f.push_back(real_field(n, "match_tolerance", &R::numerics, &NumericsBlock::match_tolerance,
                           1e-12, 1e-3));
    f.push_back(real_field(n, "geodesic_length", &R::numerics, &NumericsBlock::geodesic_length,
                           0.0, 100.0, true));
    f.push_back(int_field(n, "geodesic_samples", &R::numerics, &NumericsBlock::geodesic_samples,
                          2, 100000));
    f.push_back(real_field(n, "kernel_r_min", &R::numerics, &NumericsBlock::kernel_r_min, 0.0,
                           1e4, true));
    f.push_back(real_field(n, "kernel_r_max", &R::numerics, &NumericsBlock::kernel_r_max, 0.0,
                           1e4, true));
    f.push_back(int_field(n, "kernel_points", &R::numerics, &NumericsBlock::kernel_points, 2,
                          1000000));
    f.push_back(int_field(n, "mode_points", &R::numerics, &NumericsBlock::mode_points, 2,
                          1000000));

    f.push_back(real_field(v, "pairing_lambda", &R::verify, &VerifyBlock::pairing_lambda, 0.05,
                           20.0));
    f.push_back(int_field(v, "pairing_l", &R::verify, &VerifyBlock::pairing_l, 0, 40));
    f.push_back(real_field(v, "cut_start", &R::verify, &VerifyBlock::cut_start, 0.0, 100.0, true));
    f.push_back(real_field(v, "cut_end", &R::verify, &VerifyBlock::cut_end, 0.0, 100.0, true));
    f.push_back(int_field(v, "stone_l", &R::verify, &VerifyBlock::stone_l, 0, 20));
    f.push_back(real_field(v, "probe_lambda", &R::verify, &VerifyBlock::probe_lambda, 0.5, 1.5));
    f.push_back(int_field(v, "probe_sign", &R::verify, &VerifyBlock::probe_sign, -1, 1));
    for (auto [key, member] :
         {std::pair{"tol_pairing", &VerifyBlock::tol_pairing},
          std::pair{"tol_stone", &VerifyBlock::tol_stone},
          std::pair{"tol_jump_mode", &VerifyBlock::tol_jump_mode},
          std::pair{"tol_jump_kernel", &VerifyBlock::tol_jump_kernel},
          std::pair{"tol_smatrix", &VerifyBlock::tol_smatrix},
          std::pair{"tol_unitarity", &VerifyBlock::tol_unitarity},
          std::pair{"tol_propagation", &VerifyBlock::tol_propagation}})
      f.push_back(real_field(v, key, &R::verify, member, 0.0, 1.0, true));

    Field dir{o, "directory", nullptr, nullptr};
    dir.set = [](RunConfig& c, const std::string& val) -> std::string {
      if (val.empty()) return "must not be empty";
      c.output.directory = val;
      return "";
    };
    dir.get = [](const RunConfig& c) { return c.output.directory; };
    f.push_back(dir);
    Field formats{o, "formats", nullptr, nullptr};
    formats.set = [](RunConfig& c, const std::string& val) -> std::string {
      std::vector<std::string> out;
      for (const auto& item : split_list(val)) {
        if (item != "csv" && item != "json") return "'" + item + "' is not one of csv json";
        if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
      }
      if (out.empty()) return "needs at least one format";
      std::sort(out.begin(), out.end());
      c.output.formats = out;
      return "";
    };
    formats.get = [](const RunConfig& c) {
      std::string s;
      for (const auto& x : c.output.formats) s += (s.empty() ? "" : ", ") + x;
      return s;
    };
    f.push_back(formats);
    return f;
  }();
  return fields;
}

void cross_checks(const RunConfig& c, std::vector<std::string>& out) {
  const auto& g = c.geometry;
  auto unit_vector = [&](const std::vector<double>& v, const std::string& name) {
    if (v.empty()) return;
    if (static_cast<int>(v.size()) != g.n)
      out.push_back(name + " has " + std::to_string(v.size()) + " components but geometry.n = " +
                    std::to_string(g.n));
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm < 1e-12) out.push_back(name + " must be nonzero");
  };
  unit_vector(g.bump_center, "geometry.bump_center");
  unit_vector(g.start, "geometry.start");
  if (g.metric == "round" && g.epsilon != 0.0)
    out.push_back("geometry.epsilon = " + brief(g.epsilon) + " requires geometry.metric = bump");
  if (c.potential.family == "bump" && !(c.potential.scale > 0.0))
    out.push_back("potential.scale must be positive for the bump family");
  if (c.numerics.kernel_r_min >= c.numerics.kernel_r_max)
    out.push_back("numerics.kernel_r_min must be below numerics.kernel_r_max");
  if (c.verify.cut_start >= c.verify.cut_end)
    out.push_back("verify.cut_start must be below verify.cut_end");
  if (c.verify.probe_sign == 0) out.push_back("verify.probe_sign must be -1 or 1");
}

}  // namespace

std::vector<double> resolved_center(const GeometryBlock& g) {
  if (!g.bump_center.empty()) return g.bump_center;
  return g.n == 3 ? std::vector<double>{0.0, 0.6, 0.8} : std::vector<double>{0.6, 0.8};
}

std::vector<double> resolved_start(const GeometryBlock& g) {
  if (!g.start.empty()) return g.start;
  std::vector<double> e(g.n, 0.0);
  e[0] = 1.0;
  return e;
}

bool RunConfig::wants(const std::string& format) const {
  return std::find(output.formats.begin(), output.formats.end(), format) != output.formats.end();
}

ParseResult parse_config(const std::string& text) {
  ParseResult result;
  RunConfig cfg;
  std::map<std::string, int> seen;  // section.key -> line
  std::string section;
  bool section_ok = false;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto violation = [&](const std::string& msg) {
    result.violations.push_back("line " + std::to_string(line_no) + ": " + msg);
  };
  static const std::vector<std::string> sections{"geometry", "spectral", "potential",
                                                 "numerics", "verify",   "output"};
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        violation("malformed section header '" + line + "'");
        section_ok = false;
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      section_ok = std::find(sections.begin(), sections.end(), section) != sections.end();
      if (!section_ok) violation("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      violation("expected key = value, got '" + line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      violation("key '" + key + "' appears before any section");
      continue;
    }
    if (!section_ok) continue;
    const std::string full = section + "." + key;
    const auto& fields = schema();
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) {
      return f.section == section && f.key == key;
    });
    if (it == fields.end()) {
      violation("unknown key " + full);
      continue;
    }
    if (auto prev = seen.find(full); prev != seen.end()) {
      violation("duplicate key " + full + " (first set on line " + std::to_string(prev->second) +
                ")");
      continue;
    }
    seen[full] = line_no;
    if (const std::string err = it->set(cfg, value); !err.empty()) violation(full + " = " + err);
  }
  std::vector<std::string> cross;
  cross_checks(cfg, cross);
  for (auto& c : cross) result.violations.push_back(std::move(c));
  if (result.violations.empty()) result.config = cfg;
  return result;
}

std::string canonical_text(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.geometry.bump_center = resolved_center(cfg.geometry);
  c.geometry.start = resolved_start(cfg.geometry);
  std::string out;
  for (const auto& f : schema()) {
    if (f.section == "output" && f.key == "directory") continue;
    out += f.section + "." + f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

std::string crc64_hex(const std::string& bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(crc.checksum()));
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return crc64_hex(canonical_text(cfg)); }

}  // namespace conicscat::cli
