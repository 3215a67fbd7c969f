#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "harness.hpp"
#include "run_config.hpp"

using namespace conicscat::cli;

namespace {

const char* describe(const std::string& name) {
  if (name == "geodesic") return "unit-cosphere geodesic flow on the boundary";
  if (name == "legendrian-check") return "contact and characteristic defects of the Legendrians";
  if (name == "modes") return "Poisson mode solutions P(lambda) 1 on the radial grid";
  if (name == "smatrix") return "diagonal scattering matrix and phase shifts";
  if (name == "kernel") return "free sp and resolvent kernels with oscillatory fits";
  if (name == "verify") return "the six identity checks";
  return "every subcommand above into one bundle";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conicscat: scattering on conic boundaries, numerically"};
  app.require_subcommand(1);
  std::string config_path;
  int jobs = 1;
  app.add_option("-c,--config", config_path, "run configuration file (defaults if omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("-j,--jobs", jobs, "worker threads")->check(CLI::Range(1, 256));
  for (const auto& name : subcommands()) app.add_subcommand(name, describe(name))->fallthrough();
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return exit_usage;
  }

  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in) {
      std::cerr << "error: cannot read " << config_path << '\n';
      return exit_io;
    }
    text = ss.str();
  }
  const ParseResult parsed = parse_config(text);
  if (!parsed.config) {
    std::cerr << (config_path.empty() ? "config" : config_path) << ": "
              << parsed.violations.size() << " violation(s)\n";
    for (const auto& v : parsed.violations) std::cerr << "  " << v << '\n';
    return exit_config;
  }
  const RunConfig& cfg = *parsed.config;
  RunOptions opt;
  opt.output_dir = output_directory(cfg);
  opt.jobs = jobs;
  const std::string sub = app.get_subcommands().front()->get_name();
  std::cerr << "conicscat " << sub << ": config " << config_hash(cfg) << ", output "
            << opt.output_dir.string() << '\n';
  return run(sub, cfg, opt, std::cerr);
}
