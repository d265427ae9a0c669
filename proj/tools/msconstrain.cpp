// msconstrain: run wave-map experiments from JSON configurations.
//
//   msconstrain run --config <file> --out <dir>
//   msconstrain convergence --config <file> [--out <dir>]
//   msconstrain list
//
// Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "msconstrain/io.hpp"

namespace {

using namespace msconstrain;

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_numerical = 2;

int cmd_list() {
  for (const auto& name : experiment_names()) {
    const RunConfig c = experiment_config(name);
    std::cout << name << "  (" << c.grid.dim() << "D, " << c.initial << ", T = "
              << c.final_time << ")\n";
  }
  return exit_ok;
}

int cmd_run(const std::string& config_path, const std::string& out) {
  const RunConfig c = load_config(config_path).run;
  const auto dir = resolve_output_dir(out.empty() ? std::filesystem::path("runs") / c.experiment
                                                  : std::filesystem::path(out));
  const RunResult r = run_to_directory(c, dir);
  if (r.failure) {
    std::cerr << "numerical failure after " << r.steps_taken << " steps: "
              << r.failure->what() << "\npartial output in " << dir.string() << '\n';
    return exit_numerical;
  }
  std::cout << "completed " << r.steps_taken << " steps, t = " << r.state.time()
            << ", output in " << dir.string() << '\n';
  return exit_ok;
}

int cmd_convergence(const std::string& config_path, const std::string& out) {
  const LoadedConfig lc = load_config(config_path);
  const RunConfig& c = lc.run;
  if (c.initial != "circle-modes")
    throw ConfigError("convergence needs the exact circle-modes solution (experiment convergence2d)");
  const auto modes = table1_modes();
  const ConvergenceResult r =
      convergence_study(lc.convergence.ns, c.courant, c.final_time, modes);
  for (std::size_t k = 0; k < r.ns.size(); ++k)
    std::cout << "N = " << r.ns[k] << "  error = " << format_double(r.errors[k]) << '\n';
  if (!r.monotone) std::cout << "warning: errors are not monotone in N\n";
  std::cout << "slope " << format_double(r.slope) << '\n';
  if (!out.empty()) {
    const auto dir = resolve_output_dir(out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
    std::ofstream csv(dir / "convergence.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write convergence.csv");
    csv << "n,error\n";
    for (std::size_t k = 0; k < r.ns.size(); ++k)
      csv << r.ns[k] << ',' << format_double(r.errors[k]) << '\n';
    json m = {{"tool", "msconstrain"}, {"tool_version", tool_version},
              {"experiment", c.experiment}, {"courant", c.courant},
              {"final_time", c.final_time}, {"ns", r.ns}, {"slope", r.slope},
              {"monotone", r.monotone}, {"files", {"convergence.csv"}}};
    std::ofstream(dir / "metadata.json", std::ios::binary | std::ios::trunc) << m.dump(2) << '\n';
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained multi-symplectic Euler box scheme for wave maps"};
  app.require_subcommand(1);

  std::string config, out;
  auto* run = app.add_subcommand("run", "run one experiment into an output directory");
  run->add_option("--config", config, "JSON configuration")->required();
  run->add_option("--out", out, "output directory (relative paths go below $MSCONSTRAIN_OUT)");

  auto* conv = app.add_subcommand("convergence", "order study against the exact torus solution");
  conv->add_option("--config", config, "JSON configuration")->required();
  conv->add_option("--out", out, "optional directory for convergence.csv");

  app.add_subcommand("list", "list registered experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*conv) return cmd_convergence(config, out);
    return cmd_list();
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const DetectionError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config;
  }
}
