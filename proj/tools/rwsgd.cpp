// Command-line front end: fit, resume, report, simulate, export.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rwsgd/commands.hpp"

namespace {

// Binds string options whose values, when given, override config-file keys.
class SettingFlags {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto& slot = values_[key];
    app->add_option(flag, slot, help);
    options_.push_back({app->get_option(flag.substr(0, flag.find(','))), key});
  }

  rwsgd::Settings collect() const {
    rwsgd::Settings out;
    for (const auto& [opt, key] : options_) {
      if (opt->count() > 0) out[key] = values_.at(key);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> options_;
};

void add_ensemble_flags(CLI::App* app, SettingFlags& flags) {
  flags.add(app, "--model", "model", "least_squares | logistic | quantile | lad");
  flags.add(app, "--tau", "tau", "quantile level for the quantile model");
  flags.add(app, "--gamma", "gamma", "learning rate scale");
  flags.add(app, "--alpha", "alpha", "learning rate exponent in (0.5, 1)");
  flags.add(app, "-B,--replicates", "B", "number of perturbed replicates");
  flags.add(app, "--burn-in", "burn_in", "iterates excluded from the averages");
  flags.add(app, "--weights", "weights", "exp1 | poisson1 | one");
  flags.add(app, "--seed", "seed", "master seed for the weight streams");
}

void add_output_flags(CLI::App* app, SettingFlags& flags) {
  flags.add(app, "--level", "level", "confidence level");
  flags.add(app, "--interval", "interval", "normal | percentile");
  flags.add(app, "--bins", "bins", "histogram bins per coordinate (0: none)");
  flags.add(app, "-o,--output", "output", "output directory");
}

void print_outcome(const rwsgd::RunOutcome& out) {
  rwsgd::write_estimate_table(std::cout, out.rw);
  if (out.ingestion) {
    std::cout << "rows read " << out.ingestion->rows_read << ", used "
              << out.ingestion->rows_emitted << ", skipped " << out.ingestion->rows_skipped
              << '\n';
  }
  if (!out.plugin) std::cout << "plug-in: " << out.plugin_status << '\n';
  std::cout << "wrote " << out.output_dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Averaged SGD with online perturbation-resampling inference"};
  app.require_subcommand(1);

  std::optional<std::string> fit_config;
  SettingFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "stream a CSV file once and report estimates");
  fit->add_option("-c,--config", fit_config, "run config (key = value lines)");
  fit_flags.add(fit, "-i,--input", "input", "input CSV");
  add_ensemble_flags(fit, fit_flags);
  add_output_flags(fit, fit_flags);

  std::optional<std::string> resume_config;
  SettingFlags resume_flags;
  auto* resume = app.add_subcommand("resume", "continue a checkpointed run over more data");
  resume->add_option("-c,--config", resume_config, "run config (ingestion keys)");
  resume_flags.add(resume, "--checkpoint", "checkpoint", "checkpoint file");
  resume_flags.add(resume, "-i,--input", "input", "additional input CSV");
  add_ensemble_flags(resume, resume_flags);
  add_output_flags(resume, resume_flags);

  std::optional<std::string> report_config;
  SettingFlags report_flags;
  auto* report = app.add_subcommand("report", "write reports from a checkpoint");
  report->add_option("-c,--config", report_config, "run config");
  report_flags.add(report, "--checkpoint", "checkpoint", "checkpoint file");
  add_output_flags(report, report_flags);

  rwsgd::SimulateOptions sim;
  std::optional<std::size_t> sim_reps;
  std::optional<unsigned> sim_threads;
  auto* simulate = app.add_subcommand("simulate", "run coverage scenarios");
  simulate->add_option("scenarios", sim.scenario_file, "scenario file")->required();
  simulate->add_option("-o,--output", sim.output_dir, "output directory");
  simulate->add_option("--repetitions", sim_reps, "override repetitions for every cell");
  simulate->add_option("--threads", sim_threads, "worker threads (default: all cores)");

  std::string export_scenarios;
  std::string export_csv = "synthetic.csv";
  std::string export_truth = "truth.csv";
  std::uint64_t export_rep = 0;
  auto* exporter = app.add_subcommand("export", "write one synthetic data set as CSV");
  exporter->add_option("scenarios", export_scenarios, "scenario file (first cell used)")
      ->required();
  exporter->add_option("--csv", export_csv, "output CSV");
  exporter->add_option("--truth", export_truth, "file receiving the true coefficients");
  exporter->add_option("--repetition", export_rep, "repetition index selecting the data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) {
      const auto m = rwsgd::parse_manifest(rwsgd::load_settings(fit_config, fit_flags.collect()));
      print_outcome(rwsgd::cmd_fit(m));
    } else if (*resume) {
      const auto m =
          rwsgd::parse_manifest(rwsgd::load_settings(resume_config, resume_flags.collect()));
      print_outcome(rwsgd::cmd_resume(m));
    } else if (*report) {
      const auto m =
          rwsgd::parse_manifest(rwsgd::load_settings(report_config, report_flags.collect()));
      print_outcome(rwsgd::cmd_report(m));
    } else if (*simulate) {
      sim.repetitions = sim_reps;
      sim.threads = sim_threads;
      rwsgd::cmd_simulate(sim, &std::cout);
      std::cout << "wrote " << sim.output_dir << '\n';
    } else if (*exporter) {
      std::ifstream in(export_scenarios);
      if (!in) throw rwsgd::ConfigError("cannot open scenario file '" + export_scenarios + "'");
      const auto cells = rwsgd::parse_scenarios(in);
      rwsgd::cmd_export(cells.front(), export_rep, export_csv, export_truth);
      std::cout << "wrote " << export_csv << " and " << export_truth << '\n';
    }
  } catch (const rwsgd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
