#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mqgrad/experiment.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mqgrad: simulated parameter-server training with learned "
      "gradient-quantization bit widths"};
  app.require_subcommand(1);

  std::string run_config, run_out;
  auto* run = app.add_subcommand("run", "run one experiment from a config");
  run->add_option("--config", run_config, "experiment config (.ini)")
      ->required();
  run->add_option("--out", run_out, "output directory (overrides output_dir)");

  std::vector<std::string> sweep_configs;
  std::vector<double> sweep_budgets;
  std::string sweep_out = "sweep_out";
  auto* sweep = app.add_subcommand(
      "sweep", "run several configs and tabulate loss/accuracy at budgets");
  sweep->add_option("--configs", sweep_configs, "experiment configs (.ini)")
      ->required()
      ->expected(-1);
  sweep->add_option("--budgets", sweep_budgets,
                    "simulated-time budgets in ms (comma separated)")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "output directory");

  std::string sum_trace, sum_probes, sum_config;
  auto* summ = app.add_subcommand(
      "summarize", "recompute the summary JSON from emitted CSVs");
  summ->add_option("--trace", sum_trace, "trace.csv path")->required();
  summ->add_option("--probes", sum_probes,
                   "probes.csv path (adds accuracy fields)");
  summ->add_option("--config", sum_config,
                   "resolved.ini path (adds cost-model fields)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = mqgrad::load_config(run_config);
      const auto art = mqgrad::run_experiment(cfg, run_out);
      std::cout << "wrote " << art.dir << "/{trace.csv,probes.csv,summary.json,resolved.ini}\n"
                << art.summary_json;
      return 0;
    }
    if (*sweep) {
      const auto table =
          mqgrad::run_sweep(sweep_configs, sweep_budgets, sweep_out);
      std::cout << table.to_text() << "\nwrote " << sweep_out << "/sweep.csv\n";
      return 0;
    }
    if (*summ) {
      const auto trace = mqgrad::trace_from_csv(slurp(sum_trace));
      std::vector<mqgrad::ProbeRecord> probes;
      bool have_probes = false;
      if (!sum_probes.empty()) {
        probes = mqgrad::probes_from_csv(slurp(sum_probes));
        have_probes = true;
      }
      mqgrad::ExperimentConfig cfg;
      bool have_cfg = false;
      if (!sum_config.empty()) {
        cfg = mqgrad::load_config(sum_config);
        have_cfg = true;
      }
      std::cout << mqgrad::summarize(trace, have_probes ? &probes : nullptr,
                                     have_cfg ? &cfg : nullptr);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
