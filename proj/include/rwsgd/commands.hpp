#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rwsgd/checkpoint.hpp"
#include "rwsgd/config.hpp"
#include "rwsgd/engine.hpp"
#include "rwsgd/inference.hpp"
#include "rwsgd/ingest.hpp"
#include "rwsgd/io.hpp"
#include "rwsgd/simulate.hpp"

namespace rwsgd {

using Settings = std::map<std::string, std::string>;

/// Everything a fit/resume/report run needs, parsed from key/value settings.
///
/// Keys:
///   model, tau, gamma, alpha, B, burn_in, weights, seed, plugin, plugin_point,
///   divergence_limit, level, interval (normal|percentile), bins,
///   write_replicates, input, output, checkpoint,
///   response, covariates, intercept, header, delimiter, missing, labels,
///   standardize, discover_categories, categorical.<col>, hour_bins.<col>
struct RunManifest {
  EnsembleConfig ensemble;
  double level = 0.95;
  bool percentile = false;
  std::size_t bins = 0;
  bool write_replicates = false;
  std::string input;
  std::string output_dir = "rwsgd-out";
  std::string checkpoint;
  IngestionSpec ingest;
  Settings raw;
};

inline const std::set<std::string>& manifest_keys() {
  static const std::set<std::string> keys{
      "model", "tau", "gamma", "alpha", "B", "burn_in", "weights", "seed", "plugin",
      "plugin_point", "divergence_limit", "level", "interval", "bins", "write_replicates",
      "input", "output", "checkpoint", "response", "covariates", "intercept", "header",
      "delimiter", "missing", "labels", "standardize", "discover_categories"};
  return keys;
}

// Keys that fix the shape or randomness of an ensemble; a resumed run may
// not change them.
inline const std::vector<std::string>& ensemble_identity_keys() {
  static const std::vector<std::string> keys{"model", "tau", "gamma", "alpha", "B",
                                             "burn_in", "weights", "seed", "plugin",
                                             "plugin_point"};
  return keys;
}

inline Settings load_settings(const std::optional<std::string>& path, const Settings& overrides) {
  Settings out;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config '" + *path + "'");
    const auto file = parse_config(in);
    if (!file.sections.empty()) {
      throw ConfigError("run configs take plain 'key = value' lines without sections");
    }
    out = file.defaults.entries;
  }
  for (const auto& [k, v] : overrides) out[k] = v;
  return out;
}

inline RunManifest parse_manifest(const Settings& s) {
  Settings plain;
  std::map<std::string, std::string> categorical;
  std::map<std::string, std::string> hour_bins;
  for (const auto& [k, v] : s) {
    if (k.rfind("categorical.", 0) == 0) {
      categorical[k.substr(12)] = v;
    } else if (k.rfind("hour_bins.", 0) == 0) {
      hour_bins[k.substr(10)] = v;
    } else {
      plain[k] = v;
    }
  }
  reject_unknown_keys(plain, manifest_keys(), "run config");

  RunManifest m;
  m.raw = s;
  const auto get = [&](const std::string& key) -> const std::string* {
    auto it = plain.find(key);
    return it == plain.end() ? nullptr : &it->second;
  };
  auto& e = m.ensemble;
  const double tau = get("tau") ? parse_real("tau", *get("tau")) : 0.5;
  if (auto v = get("model")) e.model = ModelKind::parse(*v, tau);
  if (auto v = get("gamma")) e.schedule.gamma = parse_real("gamma", *v);
  if (auto v = get("alpha")) e.schedule.alpha = parse_real("alpha", *v);
  if (auto v = get("B")) e.replicates = parse_count("B", *v);
  if (auto v = get("burn_in")) e.burn_in = parse_count("burn_in", *v);
  if (auto v = get("weights")) e.weights = parse_weight_distribution(*v);
  if (auto v = get("seed")) e.seed = parse_count("seed", *v);
  if (auto v = get("plugin")) e.plugin = parse_flag("plugin", *v);
  if (auto v = get("plugin_point")) {
    if (*v == "pre") {
      e.plugin_point = PluginPoint::PreUpdate;
    } else if (*v == "post") {
      e.plugin_point = PluginPoint::PostUpdate;
    } else {
      throw ConfigError("plugin_point must be 'pre' or 'post'");
    }
  }
  if (auto v = get("divergence_limit")) e.divergence_limit = parse_real("divergence_limit", *v);
  if (auto v = get("level")) m.level = parse_real("level", *v);
  if (auto v = get("interval")) {
    if (*v != "normal" && *v != "percentile") {
      throw ConfigError("interval must be 'normal' or 'percentile'");
    }
    m.percentile = *v == "percentile";
  }
  if (auto v = get("bins")) m.bins = parse_count("bins", *v);
  if (auto v = get("write_replicates")) m.write_replicates = parse_flag("write_replicates", *v);
  if (auto v = get("input")) m.input = *v;
  if (auto v = get("output")) m.output_dir = *v;
  if (auto v = get("checkpoint")) m.checkpoint = *v;

  auto& in = m.ingest;
  if (auto v = get("response")) in.response = *v;
  if (auto v = get("covariates")) in.covariates = split_list(*v);
  if (auto v = get("intercept")) in.intercept = parse_flag("intercept", *v);
  if (auto v = get("header")) in.header = parse_flag("header", *v);
  if (auto v = get("delimiter")) {
    if (*v == "tab" || *v == "\\t") {
      in.delimiter = '\t';
    } else if (v->size() == 1) {
      in.delimiter = v->front();
    } else {
      throw ConfigError("delimiter must be a single character or 'tab'");
    }
  }
  if (auto v = get("missing")) {
    in.missing_tokens = split_list(*v, '|');
    in.missing_tokens.push_back("");
  }
  if (auto v = get("labels")) {
    for (const auto& pair : split_list(*v)) {
      const auto colon = pair.rfind(':');
      if (colon == std::string::npos) throw ConfigError("labels take 'name:+1, other:-1'");
      const auto label = trim(pair.substr(0, colon));
      const double y = parse_real("labels", trim(pair.substr(colon + 1)));
      if (y != 1.0 && y != -1.0) throw ConfigError("labels must map to +1 or -1");
      in.labels[label] = y;
    }
  }
  if (auto v = get("standardize")) in.standardize = read_affine_transforms(*v);
  if (auto v = get("discover_categories")) {
    in.discover_categories = parse_flag("discover_categories", *v);
  }
  std::set<std::string> cat_columns;
  for (const auto& [col, v] : categorical) cat_columns.insert(col);
  for (const auto& [col, v] : hour_bins) cat_columns.insert(col);
  for (const auto& col : cat_columns) {
    CategoricalSpec spec;
    spec.column = col;
    if (auto it = categorical.find(col); it != categorical.end()) {
      spec.categories = split_list(it->second, '|');
    }
    if (auto it = hour_bins.find(col); it != hour_bins.end()) {
      spec.hour_bin_width = static_cast<int>(parse_count("hour_bins." + col, it->second));
      if (spec.hour_bin_width < 1) throw ConfigError("hour bin width must be positive");
    }
    in.categorical.push_back(std::move(spec));
  }

  e.validate();
  check_level(m.level);
  return m;
}

/// Reports and files produced by fit/resume/report.
struct RunOutcome {
  InferenceReport rw;
  std::optional<InferenceReport> plugin;
  std::string plugin_status;  // "ok", or why the plug-in report is absent
  std::optional<IngestionStats> ingestion;
  std::filesystem::path output_dir;
};

inline RunOutcome write_run_outputs(const Ensemble& ensemble, const std::vector<std::string>& names,
                                    const RunManifest& m,
                                    const std::optional<IngestionStats>& stats) {
  namespace fs = std::filesystem;
  const fs::path dir(m.output_dir);
  fs::create_directories(dir);

  RunOutcome out;
  out.output_dir = dir;
  out.ingestion = stats;
  const bool keep = m.write_replicates || m.bins > 0;
  out.rw = m.percentile ? percentile_report(ensemble, m.level, keep)
                        : replicate_report(ensemble, m.level, keep);
  out.rw.names = names;
  try {
    out.plugin = plugin_report(ensemble, m.level);
    out.plugin->names = names;
    out.plugin_status = "ok";
  } catch (const PlugInUnavailable& e) {
    out.plugin_status = e.what();
  } catch (const NumericalError& e) {
    out.plugin_status = e.what();
  } catch (const ConfigError& e) {
    out.plugin_status = e.what();
  }

  {
    auto f = open_output(dir / "report.csv");
    write_report_csv_header(f);
    write_report_csv_rows(f, out.rw);
    if (out.plugin) write_report_csv_rows(f, *out.plugin);
  }
  {
    auto f = open_output(dir / "report.txt");
    write_estimate_table(f, out.rw);
  }
  {
    auto f = open_output(dir / "covariance.csv");
    write_matrix_csv(f, out.rw.covariance);
  }
  if (m.write_replicates) {
    auto f = open_output(dir / "replicates.csv");
    write_matrix_csv(f, *out.rw.replicate_averages);
  }
  if (m.bins > 0) {
    fs::create_directories(dir / "histograms");
    const Matrix& reps = *out.rw.replicate_averages;
    for (Index j = 0; j < reps.cols(); ++j) {
      const std::vector<double> col(reps.col(j).data(), reps.col(j).data() + reps.rows());
      auto f = open_output(dir / "histograms" /
                           ("hist_" + std::to_string(j + 1) + "_" +
                            slug(coordinate_name(out.rw, j)) + ".csv"));
      write_histogram_csv(f, histogram(col, m.bins));
    }
  }
  {
    json j;
    j["rw"] = report_to_json(out.rw);
    j["plugin"] = out.plugin ? report_to_json(*out.plugin) : json(nullptr);
    j["plugin_status"] = out.plugin_status;
    j["config"] = {{"model", ensemble.config().model.name()},
                   {"tau", ensemble.config().model.tau()},
                   {"gamma", ensemble.config().schedule.gamma},
                   {"alpha", ensemble.config().schedule.alpha},
                   {"B", ensemble.replicate_count()},
                   {"burn_in", ensemble.config().burn_in},
                   {"weights", to_string(ensemble.config().weights)},
                   {"seed", ensemble.config().seed}};
    if (stats) {
      j["ingestion"] = {{"rows_read", stats->rows_read},
                        {"rows_emitted", stats->rows_emitted},
                        {"rows_skipped", stats->rows_skipped}};
    }
    auto f = open_output(dir / "report.json");
    f << j.dump(2) << '\n';
  }
  save_checkpoint_file((dir / "checkpoint.rwsgd").string(), ensemble, names);
  return out;
}

/// One pass over the input CSV, then reports and a checkpoint.
inline RunOutcome cmd_fit(const RunManifest& m) {
  if (m.input.empty()) throw ConfigError("fit needs an input file");
  CsvSource source(m.input, m.ingest, m.ensemble.model);
  Ensemble ensemble = run_stream(source, m.ensemble);
  return write_run_outputs(ensemble, source.names(), m, source.stats());
}

/// Continues a checkpointed ensemble over more data.
inline RunOutcome cmd_resume(const RunManifest& m) {
  if (m.checkpoint.empty()) throw ConfigError("resume needs a checkpoint");
  if (m.input.empty()) throw ConfigError("resume needs an input file");
  Checkpoint cp = load_checkpoint_file(m.checkpoint);
  const auto& saved = cp.ensemble.config();

  std::string changed;
  const EnsembleConfig& asked = m.ensemble;
  const auto differs = [&](const std::string& key) {
    if (!m.raw.contains(key)) return false;
    if (key == "model" || key == "tau") return !(asked.model == saved.model);
    if (key == "gamma" || key == "alpha") return !(asked.schedule == saved.schedule);
    if (key == "B") return asked.replicates != saved.replicates;
    if (key == "burn_in") return asked.burn_in != saved.burn_in;
    if (key == "weights") return asked.weights != saved.weights;
    if (key == "seed") return asked.seed != saved.seed;
    if (key == "plugin") return asked.plugin != saved.plugin;
    if (key == "plugin_point") return asked.plugin_point != saved.plugin_point;
    return false;
  };
  for (const auto& key : ensemble_identity_keys()) {
    if (differs(key)) changed += (changed.empty() ? "" : ", ") + key;
  }
  if (!changed.empty()) {
    throw ConfigError("ensemble settings are fixed by the checkpoint; conflicting: " + changed);
  }

  CsvSource source(m.input, m.ingest, saved.model);
  if (source.dim() != cp.ensemble.dim()) {
    throw DataError("input has " + std::to_string(source.dim()) +
                    " covariates but the checkpoint has " + std::to_string(cp.ensemble.dim()));
  }
  feed(cp.ensemble, source);
  const auto names = cp.names.empty() ? source.names() : cp.names;
  return write_run_outputs(cp.ensemble, names, m, source.stats());
}

/// Reports from a checkpoint without consuming data.
inline RunOutcome cmd_report(const RunManifest& m) {
  if (m.checkpoint.empty()) throw ConfigError("report needs a checkpoint");
  const Checkpoint cp = load_checkpoint_file(m.checkpoint);
  if (cp.ensemble.count() == 0) throw DataError("checkpoint has consumed no observations");
  return write_run_outputs(cp.ensemble, cp.names, m, std::nullopt);
}

struct SimulateOptions {
  std::string scenario_file;
  std::string output_dir = "rwsgd-sim";
  std::optional<std::size_t> repetitions;
  std::optional<unsigned> threads;
};

/// Runs every scenario cell in the file; writes per-cell coverage/SE tables
/// (CSV), a JSON summary per cell and one combined text file.
inline std::vector<CoverageReport> cmd_simulate(const SimulateOptions& opt,
                                                std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream in(opt.scenario_file);
  if (!in) throw ConfigError("cannot open scenario file '" + opt.scenario_file + "'");
  auto scenarios = parse_scenarios(in);
  const fs::path dir(opt.output_dir);
  fs::create_directories(dir);

  std::vector<CoverageReport> reports;
  auto text = open_output(dir / "tables.txt");
  for (auto& sc : scenarios) {
    if (opt.repetitions) sc.repetitions = *opt.repetitions;
    if (opt.threads) sc.threads = *opt.threads;
    sc.validate();
    if (log) *log << "running " << sc.name << " (" << sc.repetitions << " repetitions)\n";
    auto report = run_scenario(sc);
    const auto table = report_columns(report);
    const auto base = slug(sc.name);
    {
      auto f = open_output(dir / (base + "_coverage.csv"));
      write_coverage_csv(f, table);
    }
    {
      auto f = open_output(dir / (base + "_se.csv"));
      write_se_csv(f, table);
    }
    {
      auto f = open_output(dir / (base + ".json"));
      f << coverage_to_json(report).dump(2) << '\n';
    }
    text << "[" << sc.name << "] model=" << sc.model.name()
         << " repetitions=" << report.repetitions << '\n';
    write_coverage_text(text, table);
    text << '\n';
    if (log) write_coverage_text(*log, table);
    reports.push_back(std::move(report));
  }
  return reports;
}

/// Writes one synthetic data set from a scenario as CSV (y,x1..xp) and its
/// true coefficients to `truth_path` (one value per line).
inline void cmd_export(const ScenarioConfig& sc, std::uint64_t repetition,
                       const std::string& csv_path, const std::string& truth_path) {
  sc.validate();
  const ParamVector truth = true_theta(sc.p, sc.q, sc.mu);
  SyntheticSource source(sc.model, truth, repetition_data_seed(sc.seed, repetition), sc.n);
  auto out = open_output(csv_path);
  out << "y";
  for (Index j = 0; j < sc.p; ++j) out << ",x" << (j + 1);
  out << '\n' << std::setprecision(17);
  while (auto z = source.next()) {
    out << z->y;
    for (Index j = 0; j < sc.p; ++j) out << ',' << z->x[j];
    out << '\n';
  }
  auto t = open_output(truth_path);
  t << std::setprecision(17);
  for (Index j = 0; j < sc.p; ++j) t << truth[j] << '\n';
}

}  // namespace rwsgd
