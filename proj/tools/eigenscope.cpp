#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eigenscope/experiments.hpp"
#include "eigenscope/parallel.hpp"

using namespace eigenscope;

namespace {

std::string usage_text() {
  std::string s =
      "usage: eigenscope [--threads N] run <config-file> [key=value ...]\n"
      "       eigenscope plot <report.json> ...\n\nexperiments:";
  for (const auto& n : experiment_names()) s += " " + n;
  s += "\nconfig keys:";
  for (const auto& k : config_keys()) s += " " + k;
  return s + "\n";
}

int do_run(const std::string& config_path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = config_path == "-" ? ExperimentConfig{} : ExperimentConfig::parse_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const RunOutcome r = run_experiment(cfg);
  if (r.exit_code != 0) {
    std::cerr << r.message << "\n";
    return r.exit_code;
  }
  for (const auto& f : r.files) std::cout << f << "\n";
  std::cerr << r.message << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eigenscope: entropy bounds for quantized cat maps"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker threads (default: EIGENSCOPE_THREADS or all cores)");

  auto* run = app.add_subcommand("run", "run one experiment");
  std::string config_path;
  std::vector<std::string> overrides;
  run->add_option("config", config_path, "key=value config file, or - for none")->required();
  run->add_option("overrides", overrides, "key=value overrides, later ones win");

  auto* plot = app.add_subcommand("plot", "write plot-ready CSVs next to reports");
  std::vector<std::string> reports;
  plot->add_option("reports", reports, "report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      std::cout << usage_text();
      return 0;
    }
    std::cerr << e.what() << "\n" << usage_text();
    return 1;
  }
  if (threads > 0) set_thread_count(threads);

  try {
    if (*run) return do_run(config_path, overrides);
    for (const auto& f : emit_plot_data(reports)) std::cout << f << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n" << usage_text();
    return 1;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
