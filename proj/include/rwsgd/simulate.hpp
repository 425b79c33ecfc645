#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rwsgd/config.hpp"
#include "rwsgd/engine.hpp"
#include "rwsgd/inference.hpp"

namespace rwsgd {

/// Step sizes that keep the standard-normal designs stable at p <= 20.
inline LearningRateSchedule recommended_schedule(const ModelKind& model) {
  switch (model.family()) {
    case ModelFamily::LeastSquares: return {0.1, 0.6};
    case ModelFamily::Logistic: return {0.5, 0.6};
    case ModelFamily::Quantile: return {0.3, 0.6};
  }
  return {};
}

/// One cell of a coverage study.
struct ScenarioConfig {
  std::string name = "scenario";
  ModelKind model = ModelKind::least_squares();
  std::uint64_t n = 10000;
  Index p = 10;
  Index q = 6;
  double mu = 0.1;
  std::size_t replicates = 200;
  std::uint64_t burn_in = 2000;
  std::size_t repetitions = 200;
  double level = 0.95;
  std::optional<LearningRateSchedule> schedule;  // unset: recommended_schedule(model)
  WeightDistribution weights = WeightDistribution::Exponential1;
  std::uint64_t seed = 20180101;
  std::vector<Index> coordinates;  // 0-based; empty: {0, q/2, q}
  unsigned threads = 0;            // 0: hardware concurrency

  LearningRateSchedule effective_schedule() const {
    return schedule ? *schedule : recommended_schedule(model);
  }

  std::vector<Index> report_coordinates() const {
    if (!coordinates.empty()) return coordinates;
    std::vector<Index> out{0, q / 2, q};
    out.erase(std::remove_if(out.begin(), out.end(), [&](Index j) { return j >= p; }),
              out.end());
    return out;
  }

  void validate() const {
    if (n < 1) throw ConfigError(name + ": N must be positive");
    if (p < 1) throw ConfigError(name + ": p must be positive");
    if (q < 0 || q % 2 != 0) throw ConfigError(name + ": q must be a nonnegative even number");
    if (q > p) throw ConfigError(name + ": q must not exceed p");
    if (burn_in >= n) throw ConfigError(name + ": burn-in must be smaller than N");
    if (repetitions < 1) throw ConfigError(name + ": repetitions must be positive");
    if (replicates < 2) throw ConfigError(name + ": B must be at least 2");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError(name + ": level must lie in (0, 1)");
    effective_schedule().validate();
    for (const Index j : coordinates) {
      if (j < 0 || j >= p) {
        throw ConfigError(name + ": report coordinate " + std::to_string(j + 1) +
                          " is outside 1.." + std::to_string(p));
      }
    }
  }

  EnsembleConfig ensemble_config(std::uint64_t weight_seed) const {
    EnsembleConfig c;
    c.model = model;
    c.schedule = effective_schedule();
    c.replicates = replicates;
    c.burn_in = burn_in;
    c.weights = weights;
    c.seed = weight_seed;
    c.plugin = model.has_hessian();
    return c;
  }
};

/// (mu 1_{q/2}, -mu 1_{q/2}, 0_{p-q}).
inline ParamVector true_theta(Index p, Index q, double mu) {
  if (q < 0 || q % 2 != 0) throw ConfigError("q must be a nonnegative even number");
  if (q > p) throw ConfigError("q must not exceed p");
  ParamVector theta = ParamVector::Zero(p);
  theta.head(q / 2).setConstant(mu);
  theta.segment(q / 2, q / 2).setConstant(-mu);
  return theta;
}

/// Random source for the synthetic designs.
struct DataRng {
  explicit DataRng(std::uint64_t seed) : engine(seed) {}
  std::mt19937_64 engine;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::exponential_distribution<double> exponential{1.0};
  std::uniform_real_distribution<double> uniform{0.0, 1.0};
  std::bernoulli_distribution coin{0.5};
};

/// Standard Laplace draw, density exp(-|u|)/2.
inline double draw_laplace(DataRng& rng) {
  const double magnitude = rng.exponential(rng.engine);
  return rng.coin(rng.engine) ? magnitude : -magnitude;
}

/// x ~ N(0, I). Least squares: y = x'theta + N(0,1). Logistic: y = +1 with
/// probability 1/(1+exp(-x'theta)), else -1. Quantile: y = x'theta + Laplace(0,1).
inline Observation generate_observation(const ModelKind& model, const ParamVector& theta0,
                                        DataRng& rng) {
  Observation z;
  z.x.resize(theta0.size());
  for (Index j = 0; j < theta0.size(); ++j) z.x[j] = rng.normal(rng.engine);
  const double eta = z.x.dot(theta0);
  switch (model.family()) {
    case ModelFamily::LeastSquares:
      z.y = eta + rng.normal(rng.engine);
      break;
    case ModelFamily::Logistic: {
      const double prob = 1.0 / (1.0 + std::exp(-eta));
      z.y = rng.uniform(rng.engine) < prob ? 1.0 : -1.0;
      break;
    }
    case ModelFamily::Quantile:
      z.y = eta + draw_laplace(rng);
      break;
  }
  return z;
}

/// Finite synthetic stream.
class SyntheticSource {
 public:
  SyntheticSource(ModelKind model, ParamVector theta0, std::uint64_t seed, std::uint64_t count)
      : model_(model), theta0_(std::move(theta0)), rng_(seed), remaining_(count) {}

  std::optional<Observation> next() {
    if (remaining_ == 0) return std::nullopt;
    --remaining_;
    return generate_observation(model_, theta0_, rng_);
  }

 private:
  ModelKind model_;
  ParamVector theta0_;
  DataRng rng_;
  std::uint64_t remaining_;
};

inline std::uint64_t repetition_data_seed(std::uint64_t seed, std::uint64_t r) {
  return derive_seed(seed, r, 0);
}
inline std::uint64_t repetition_weight_seed(std::uint64_t seed, std::uint64_t r) {
  return derive_seed(seed, r, 1);
}

/// What one repetition contributes to the coverage tables.
struct RepetitionResult {
  ParamVector estimate;
  ParamVector rw_se;
  ParamVector rw_hit;  // 1.0 if the interval covers the truth
  std::optional<ParamVector> plugin_se;
  std::optional<ParamVector> plugin_hit;
  bool plugin_failed = false;
};

inline RepetitionResult run_repetition(const ScenarioConfig& config, std::uint64_t r) {
  const ParamVector truth = true_theta(config.p, config.q, config.mu);
  SyntheticSource source(config.model, truth, repetition_data_seed(config.seed, r), config.n);
  const Ensemble ensemble =
      run_stream(source, config.ensemble_config(repetition_weight_seed(config.seed, r)));

  RepetitionResult out;
  const auto covers = [&](const InferenceReport& rep) {
    return ParamVector(((rep.ci_lower.array() <= truth.array()) &&
                        (truth.array() <= rep.ci_upper.array()))
                           .cast<double>());
  };
  const auto rw = replicate_report(ensemble, config.level);
  out.estimate = rw.point;
  out.rw_se = rw.se;
  out.rw_hit = covers(rw);
  if (ensemble.plugin()) {
    try {
      const auto pi = plugin_report(ensemble, config.level);
      out.plugin_se = pi.se;
      out.plugin_hit = covers(pi);
    } catch (const NumericalError&) {
      out.plugin_failed = true;
    }
  }
  return out;
}

/// Per-coordinate summaries across repetitions.
struct CoverageReport {
  ScenarioConfig config;
  std::size_t repetitions = 0;
  ParamVector truth;
  ParamVector mean_estimate;
  ParamVector empirical_se;  // across-repetition SD of the averaged estimate
  ParamVector rw_coverage;
  ParamVector rw_mean_se;
  std::optional<ParamVector> plugin_coverage;
  std::optional<ParamVector> plugin_mean_se;
  std::size_t plugin_failures = 0;
};

/// Combines per-repetition results, always in repetition order, so the
/// outcome does not depend on which worker finished first.
inline CoverageReport aggregate(const ScenarioConfig& config,
                                const std::vector<RepetitionResult>& results) {
  if (results.empty()) throw ConfigError("no repetitions to aggregate");
  const Index p = config.p;
  CoverageReport rep;
  rep.config = config;
  rep.repetitions = results.size();
  rep.truth = true_theta(config.p, config.q, config.mu);

  RunningCovariance spread(p);
  ParamVector rw_hits = ParamVector::Zero(p);
  ParamVector rw_se = ParamVector::Zero(p);
  ParamVector pi_hits = ParamVector::Zero(p);
  ParamVector pi_se = ParamVector::Zero(p);
  std::size_t pi_count = 0;
  for (const auto& r : results) {
    spread.add(r.estimate);
    rw_hits += r.rw_hit;
    rw_se += r.rw_se;
    if (r.plugin_se) {
      pi_hits += *r.plugin_hit;
      pi_se += *r.plugin_se;
      ++pi_count;
    }
    if (r.plugin_failed) ++rep.plugin_failures;
  }
  const double reps = static_cast<double>(results.size());
  rep.mean_estimate = spread.mean();
  rep.empirical_se = results.size() >= 2 ? standard_errors(spread.covariance())
                                         : ParamVector::Zero(p);
  rep.rw_coverage = rw_hits / reps;
  rep.rw_mean_se = rw_se / reps;
  if (pi_count > 0) {
    rep.plugin_coverage = pi_hits / static_cast<double>(pi_count);
    rep.plugin_mean_se = pi_se / static_cast<double>(pi_count);
  }
  return rep;
}

namespace detail {

template <typename E>
[[noreturn]] void rethrow_annotated(const E& e, std::uint64_t r) {
  throw E("repetition " + std::to_string(r) + ": " + e.what());
}

}  // namespace detail

/// Runs repetitions `indices` (any order, any thread count) and stores each
/// result at its own slot.
inline std::vector<RepetitionResult> run_repetitions(const ScenarioConfig& config,
                                                     const std::vector<std::uint64_t>& indices,
                                                     unsigned threads) {
  std::vector<RepetitionResult> results(config.repetitions);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= indices.size()) return;
      const std::uint64_t r = indices[k];
      try {
        try {
          results.at(r) = run_repetition(config, r);
        } catch (const NumericalError& e) {
          detail::rethrow_annotated(e, r);
        } catch (const DataError& e) {
          detail::rethrow_annotated(e, r);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(indices.size());
        return;
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline CoverageReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  std::vector<std::uint64_t> order(config.repetitions);
  for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  return aggregate(config, run_repetitions(config, order, resolve_threads(config.threads)));
}

// ---------------------------------------------------------------------------
// Tables

struct TableRow {
  std::string method;
  std::vector<std::optional<double>> values;
};

struct CoverageTable {
  std::string cell;  // "(N,p,q,mu)"
  std::vector<std::string> headers;
  std::vector<Index> coordinates;
  std::vector<TableRow> coverage;  // RW, Plug in
  std::vector<TableRow> se;        // RW, Plug in, Empirical
};

inline std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

inline std::string cell_label(const ScenarioConfig& c) {
  return "(" + std::to_string(c.n) + "," + std::to_string(c.p) + "," + std::to_string(c.q) +
         "," + format_number(c.mu) + ")";
}

/// Extracts the chosen coordinates (0-based) into coverage and SE tables.
inline CoverageTable report_columns(const CoverageReport& report,
                                    const std::vector<Index>& coordinates) {
  CoverageTable t;
  t.cell = cell_label(report.config);
  t.coordinates = coordinates;
  for (const Index j : coordinates) {
    if (j < 0 || j >= report.config.p) {
      throw ConfigError("coordinate " + std::to_string(j + 1) + " is outside 1.." +
                        std::to_string(report.config.p));
    }
    t.headers.push_back("Dim " + std::to_string(j + 1));
  }
  const auto pick = [&](const std::string& method, const std::optional<ParamVector>& v) {
    TableRow row{method, {}};
    for (const Index j : coordinates) {
      row.values.push_back(v ? std::optional<double>((*v)[j]) : std::nullopt);
    }
    return row;
  };
  t.coverage.push_back(pick("RW", report.rw_coverage));
  t.coverage.push_back(pick("Plug in", report.plugin_coverage));
  t.se.push_back(pick("RW", report.rw_mean_se));
  t.se.push_back(pick("Plug in", report.plugin_mean_se));
  t.se.push_back(pick("Empirical", report.empirical_se));
  return t;
}

inline CoverageTable report_columns(const CoverageReport& report) {
  return report_columns(report, report.config.report_coordinates());
}

namespace detail {

inline void write_rows(std::ostream& out, const CoverageTable& t,
                       const std::vector<TableRow>& rows, int digits) {
  bool first = true;
  for (const auto& row : rows) {
    out << std::left << std::setw(20) << (first ? t.cell : "") << std::setw(11) << row.method;
    for (const auto& v : row.values) {
      std::ostringstream cell;
      if (v) {
        cell << std::fixed << std::setprecision(digits) << *v;
      } else {
        cell << "-";
      }
      out << std::right << std::setw(10) << cell.str();
    }
    out << '\n';
    first = false;
  }
}

inline void write_header(std::ostream& out, const CoverageTable& t) {
  out << std::left << std::setw(20) << "(N, p, q, mu)" << std::setw(11) << "Method";
  for (const auto& h : t.headers) out << std::right << std::setw(10) << h;
  out << '\n';
}

inline void write_csv_rows(std::ostream& out, const CoverageTable& t,
                           const std::vector<TableRow>& rows) {
  out << "cell,method";
  for (const auto& h : t.headers) out << ',' << h;
  out << '\n';
  for (const auto& row : rows) {
    out << '"' << t.cell << "\"," << row.method;
    for (const auto& v : row.values) {
      out << ',';
      if (v) {
        out << std::setprecision(17) << *v;
      } else {
        out << '-';
      }
    }
    out << '\n';
  }
}

}  // namespace detail

/// Aligned text: coverage block (3 decimals) then SE block (4 decimals).
inline void write_coverage_text(std::ostream& out, const CoverageTable& t) {
  out << "Coverage probabilities\n";
  detail::write_header(out, t);
  detail::write_rows(out, t, t.coverage, 3);
  out << "\nAveraged estimated SE and empirical SE\n";
  detail::write_header(out, t);
  detail::write_rows(out, t, t.se, 4);
}

inline void write_coverage_csv(std::ostream& out, const CoverageTable& t) {
  detail::write_csv_rows(out, t, t.coverage);
}

inline void write_se_csv(std::ostream& out, const CoverageTable& t) {
  detail::write_csv_rows(out, t, t.se);
}

// ---------------------------------------------------------------------------
// Scenario files

inline const std::set<std::string>& scenario_keys() {
  static const std::set<std::string> keys{
      "model", "tau", "N", "p", "q", "mu", "B", "burn_in", "repetitions", "level",
      "gamma", "alpha", "weights", "seed", "coordinates", "threads"};
  return keys;
}

inline ScenarioConfig scenario_from_entries(const std::string& name,
                                            const std::map<std::string, std::string>& base,
                                            const std::map<std::string, std::string>& own) {
  std::map<std::string, std::string> kv = base;
  for (const auto& [k, v] : own) kv[k] = v;
  reject_unknown_keys(kv, scenario_keys(), "scenario '" + name + "'");

  ScenarioConfig c;
  c.name = name;
  const auto get = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  const double tau = get("tau") ? parse_real("tau", *get("tau")) : 0.5;
  if (auto v = get("model")) c.model = ModelKind::parse(*v, tau);
  if (auto v = get("N")) c.n = parse_count("N", *v);
  if (auto v = get("p")) c.p = static_cast<Index>(parse_count("p", *v));
  if (auto v = get("q")) c.q = static_cast<Index>(parse_count("q", *v));
  if (auto v = get("mu")) c.mu = parse_real("mu", *v);
  if (auto v = get("B")) c.replicates = parse_count("B", *v);
  if (auto v = get("burn_in")) c.burn_in = parse_count("burn_in", *v);
  if (auto v = get("repetitions")) c.repetitions = parse_count("repetitions", *v);
  if (auto v = get("level")) c.level = parse_real("level", *v);
  if (get("gamma") || get("alpha")) {
    auto s = recommended_schedule(c.model);
    if (auto v = get("gamma")) s.gamma = parse_real("gamma", *v);
    if (auto v = get("alpha")) s.alpha = parse_real("alpha", *v);
    c.schedule = s;
  }
  if (auto v = get("weights")) c.weights = parse_weight_distribution(*v);
  if (auto v = get("seed")) c.seed = parse_count("seed", *v);
  if (auto v = get("coordinates")) {
    for (const auto& tok : split_list(*v)) {
      const auto j = parse_count("coordinates", tok);
      if (j < 1) throw ConfigError("coordinates are 1-based");
      c.coordinates.push_back(static_cast<Index>(j - 1));
    }
  }
  if (auto v = get("threads")) c.threads = static_cast<unsigned>(parse_count("threads", *v));
  c.validate();
  return c;
}

/// Top-level keys are defaults; each [section] is one scenario cell. A file
/// with no sections describes a single scenario.
inline std::vector<ScenarioConfig> parse_scenarios(std::istream& in) {
  const ConfigFile file = parse_config(in);
  std::vector<ScenarioConfig> out;
  if (file.sections.empty()) {
    out.push_back(scenario_from_entries("scenario", {}, file.defaults.entries));
    return out;
  }
  for (const auto& s : file.sections) {
    out.push_back(scenario_from_entries(s.name, file.defaults.entries, s.entries));
  }
  return out;
}

}  // namespace rwsgd
