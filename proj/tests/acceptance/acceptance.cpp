// Acceptance gate: one PASS/FAIL line per criterion; nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rwsgd/rwsgd.hpp"

using namespace rwsgd;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void run(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  if (!out.pass) ++failures;
  std::printf("%s [%d] %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", id, title.c_str(),
              seconds_since(t0), out.detail.c_str());
  std::fflush(stdout);
}

ScenarioConfig coverage_cell(const ModelKind& model) {
  ScenarioConfig c;
  c.name = model.name();
  c.model = model;
  c.n = 10000;
  c.p = 10;
  c.q = 6;
  c.mu = 0.1;
  c.replicates = 200;
  c.burn_in = 2000;
  c.repetitions = 200;
  c.level = 0.95;
  c.weights = WeightDistribution::Exponential1;
  return c;
}

const std::vector<Index> kCoords{0, 3, 6};  // Dim 1, Dim q/2+1, Dim q+1

std::string coord_list(const ParamVector& v, int digits) {
  std::string s = "(";
  for (std::size_t k = 0; k < kCoords.size(); ++k) {
    s += (k ? ", " : "") + fmt(v[kCoords[k]], digits);
  }
  return s + ")";
}

// ---------------------------------------------------------------------------
// Independent brute-force evaluation of the recursions on plain arrays.

struct BruteRun {
  std::vector<double> main_avg;
  std::vector<std::vector<double>> rep_avg;
};

double brute_scale(const ModelKind& kind, double eta, double y) {
  switch (kind.family()) {
    case ModelFamily::LeastSquares: return -2.0 * (y - eta);
    case ModelFamily::Logistic: return -y / (1.0 + std::exp(y * eta));
    case ModelFamily::Quantile: return -(kind.tau() - ((y - eta) < 0.0 ? 1.0 : 0.0));
  }
  return 0.0;
}

BruteRun brute_force(const ModelKind& kind, const std::vector<Observation>& data,
                     const std::vector<std::vector<double>>& weights, double gamma, double alpha,
                     std::size_t burn_in) {
  const std::size_t p = static_cast<std::size_t>(data.front().x.size());
  const std::size_t b_count = weights.size();
  std::vector<double> theta(p, 0.0);
  std::vector<std::vector<double>> reps(b_count, std::vector<double>(p, 0.0));
  BruteRun out;
  out.main_avg.assign(p, 0.0);
  out.rep_avg.assign(b_count, std::vector<double>(p, 0.0));
  std::size_t used = 0;
  for (std::size_t n = 1; n <= data.size(); ++n) {
    const auto& z = data[n - 1];
    const double rate = gamma * std::pow(static_cast<double>(n), -alpha);
    auto step = [&](std::vector<double>& th, double w) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += z.x[static_cast<Index>(j)] * th[j];
      const double s = brute_scale(kind, eta, z.y);
      for (std::size_t j = 0; j < p; ++j) th[j] -= rate * w * s * z.x[static_cast<Index>(j)];
    };
    step(theta, 1.0);
    for (std::size_t b = 0; b < b_count; ++b) step(reps[b], weights[b][n - 1]);
    if (n > burn_in) {
      ++used;
      for (std::size_t j = 0; j < p; ++j) {
        out.main_avg[j] += (theta[j] - out.main_avg[j]) / static_cast<double>(used);
        for (std::size_t b = 0; b < b_count; ++b) {
          out.rep_avg[b][j] += (reps[b][j] - out.rep_avg[b][j]) / static_cast<double>(used);
        }
      }
    }
  }
  return out;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

Observation obs(double y, std::initializer_list<double> x) {
  Observation z;
  z.y = y;
  z.x.resize(static_cast<Index>(x.size()));
  Index i = 0;
  for (double v : x) z.x[i++] = v;
  return z;
}

// ---------------------------------------------------------------------------

Outcome unit_weight_degeneracy() {
  Outcome out;
  const auto t0 = Clock::now();
  for (const auto& kind :
       {ModelKind::least_squares(), ModelKind::logistic(), ModelKind::quantile(0.5)}) {
    ScenarioConfig sc = coverage_cell(kind);
    sc.replicates = 8;
    sc.weights = WeightDistribution::DegenerateOne;
    sc.n = 5000;
    sc.burn_in = 500;
    EnsembleConfig cfg = sc.ensemble_config(11);
    SyntheticSource src(kind, true_theta(sc.p, sc.q, sc.mu), 3, sc.n);
    Ensemble e(cfg, sc.p);
    bool equal = true;
    while (auto z = src.next()) {
      e.process(*z);
      for (const auto& r : e.replicates()) {
        equal = equal && r.iterate == e.main_iterate() &&
                r.average.mean() == e.main_average().mean();
      }
    }
    out.require(equal, kind.name() + " trajectories differ");
  }
  const double secs = seconds_since(t0);
  out.require(secs < 5.0, "runtime " + fmt(secs, 2) + " s >= 5 s");
  out.note("B=8, N=5000, all three models bitwise equal at every step");
  return out;
}

Outcome oracles() {
  Outcome out;
  const auto t0 = Clock::now();
  double worst = 0.0;

  // Single-step oracles.
  const auto s1 = sgd_step(ParamVector::Zero(2), obs(1, {1, 0}), 0.5, 1.0,
                           ModelKind::least_squares());
  worst = std::max({worst, rel_err(s1[0], 1.0), rel_err(s1[1], 0.0)});
  const auto s2 = sgd_step(ParamVector::Zero(1), obs(1, {1}), 1.0, 2.0, ModelKind::quantile(0.5));
  worst = std::max(worst, rel_err(s2[0], 1.0));

  // Three-step oracle (gamma 0.5, alpha 0.75), values scripted by hand.
  EnsembleConfig c;
  c.model = ModelKind::least_squares();
  c.schedule = {0.5, 0.75};
  c.replicates = 2;
  c.weights = WeightDistribution::DegenerateOne;
  Ensemble e(c, 2);
  e.process(obs(1, {1, 0}));
  e.process(obs(2, {0, 1}));
  e.process(obs(-1, {1, 1}));
  worst = std::max({worst, rel_err(e.main_iterate()[0], -0.39907753532609047),
                    rel_err(e.main_iterate()[1], -0.20987042032336944),
                    rel_err(e.main_average().mean()[0], 0.5336408215579699),
                    rel_err(e.main_average().mean()[1], 0.3264455648931172)});

  // Brute-force replay of main and weighted paths for every model.
  for (const auto& kind :
       {ModelKind::least_squares(), ModelKind::logistic(), ModelKind::quantile(0.3)}) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    std::vector<Observation> data;
    for (int i = 0; i < 25; ++i) {
      Observation z;
      z.x.resize(3);
      z.x << nd(rng), nd(rng), nd(rng);
      z.y = kind.family() == ModelFamily::Logistic ? (nd(rng) > 0 ? 1.0 : -1.0) : nd(rng);
      data.push_back(z);
    }
    EnsembleConfig cfg;
    cfg.model = kind;
    cfg.schedule = {0.4, 0.7};
    cfg.replicates = 4;
    cfg.burn_in = 5;
    cfg.seed = 31;
    Ensemble en(cfg, 3);
    for (const auto& z : data) en.process(z);
    std::vector<std::vector<double>> w(4);
    for (std::size_t b = 0; b < 4; ++b) {
      const CounterStream stream(cfg.seed, b + 1);
      for (std::size_t n = 1; n <= data.size(); ++n) {
        w[b].push_back(draw_weight(cfg.weights, stream, n));
      }
    }
    const auto ref = brute_force(kind, data, w, 0.4, 0.7, 5);
    for (Index j = 0; j < 3; ++j) {
      worst = std::max(worst, rel_err(en.main_average().mean()[j], ref.main_avg[j]));
      for (std::size_t b = 0; b < 4; ++b) {
        worst = std::max(worst, rel_err(en.replicates()[b].average.mean()[j], ref.rep_avg[b][j]));
      }
    }
  }
  const double secs = seconds_since(t0);
  out.require(worst <= 1e-12, "max relative error " + sci(worst));
  out.require(secs < 1.0, "runtime " + fmt(secs, 3) + " s >= 1 s");
  out.note("max relative error " + sci(worst));
  return out;
}

Outcome ls_coverage(const CoverageReport& ls) {
  Outcome out;
  for (const Index j : kCoords) {
    const double c = ls.rw_coverage[j];
    out.require(c >= 0.90 && c <= 0.99, "Dim " + std::to_string(j + 1) + " coverage " + fmt(c, 3));
  }
  out.note("RW coverage Dim 1/4/7 = " + coord_list(ls.rw_coverage, 3) + ", band [0.90, 0.99]");
  return out;
}

Outcome plugin_undercoverage(const CoverageReport& ls, const CoverageReport& logit) {
  Outcome out;
  for (const auto* rep : {&ls, &logit}) {
    const std::string m = rep->config.model.name();
    if (!rep->plugin_coverage) {
      out.require(false, m + " has no plug-in coverage");
      continue;
    }
    for (const Index j : kCoords) {
      out.require((*rep->plugin_coverage)[j] < rep->rw_coverage[j],
                  m + " Dim " + std::to_string(j + 1) + " plug-in " +
                      fmt((*rep->plugin_coverage)[j], 3) + " not below RW " +
                      fmt(rep->rw_coverage[j], 3));
    }
    out.note(m + ": RW " + coord_list(rep->rw_coverage, 3) + " vs plug-in " +
             coord_list(*rep->plugin_coverage, 3) + " (failures " +
             std::to_string(rep->plugin_failures) + ")");
  }
  return out;
}

Outcome se_calibration(const CoverageReport& ls) {
  Outcome out;
  for (const Index j : kCoords) {
    const double rw = ls.rw_mean_se[j];
    const double emp = ls.empirical_se[j];
    const std::string dim = "Dim " + std::to_string(j + 1);
    out.require(std::abs(rw - emp) <= 0.15 * emp, dim + " RW/empirical off by more than 15%");
    out.require(rw >= 0.008 && rw <= 0.025, dim + " RW SE " + fmt(rw) + " outside [0.008, 0.025]");
    out.require(emp >= 0.008 && emp <= 0.025,
                dim + " empirical SE " + fmt(emp) + " outside [0.008, 0.025]");
  }
  out.note("RW SE " + coord_list(ls.rw_mean_se, 4) + " vs empirical " +
           coord_list(ls.empirical_se, 4));
  return out;
}

Outcome lad_inference(const CoverageReport& lad) {
  Outcome out;
  for (const Index j : kCoords) {
    const double c = lad.rw_coverage[j];
    out.require(c >= 0.90 && c <= 0.99, "Dim " + std::to_string(j + 1) + " coverage " + fmt(c, 3));
    const double se = lad.rw_mean_se[j];
    out.require(se >= 0.008 && se <= 0.025,
                "Dim " + std::to_string(j + 1) + " RW SE " + fmt(se) + " outside [0.008, 0.025]");
  }
  out.require(!lad.plugin_coverage, "plug-in coverage reported for LAD");

  EnsembleConfig cfg = lad.config.ensemble_config(1);
  cfg.plugin = true;
  Ensemble e(cfg, lad.config.p);
  SyntheticSource src(lad.config.model, true_theta(10, 6, 0.1), 1, 100);
  feed(e, src);
  bool unavailable = false;
  try {
    plugin_report(e);
  } catch (const PlugInUnavailable&) {
    unavailable = true;
  }
  out.require(unavailable, "plug-in path did not raise PlugInUnavailable");

  AsymptoticSpec spec;
  spec.design_second_moment = Matrix::Identity(10, 10);
  spec.error_density_at_zero = 0.5;
  const Matrix theory = theoretical_covariance(lad.config.model, spec, 10000.0);
  out.require(theory == Matrix::Identity(10, 10) / 10000.0, "theoretical covariance != I/N");

  out.note("RW coverage " + coord_list(lad.rw_coverage, 3) + ", RW SE " +
           coord_list(lad.rw_mean_se, 4) + ", empirical SE " + coord_list(lad.empirical_se, 4) +
           ", plug-in unavailable, theory = I/N");
  return out;
}

Outcome distributional_equivalence() {
  Outcome out;
  const auto t0 = Clock::now();
  ScenarioConfig sc;
  sc.model = ModelKind::least_squares();
  sc.n = 20000;
  sc.p = 1;
  sc.q = 0;
  sc.mu = 0.0;
  sc.burn_in = 2000;
  sc.seed = 424242;
  const ParamVector truth = true_theta(sc.p, sc.q, sc.mu);
  const double root_n = std::sqrt(static_cast<double>(sc.n));

  // (a) 500 replicate deviations from a single run.
  sc.replicates = 500;
  SyntheticSource one(sc.model, truth, repetition_data_seed(sc.seed, 0), sc.n);
  const Ensemble e = run_stream(one, sc.ensemble_config(repetition_weight_seed(sc.seed, 0)));
  std::vector<double> boot;
  for (const auto& r : e.replicates()) {
    boot.push_back(root_n * (r.average.mean()[0] - e.main_average().mean()[0]));
  }

  // (b) 500 sampling deviations from independent runs.
  sc.replicates = 2;
  std::vector<double> mc;
  for (std::uint64_t r = 1; r <= 500; ++r) {
    SyntheticSource src(sc.model, truth, repetition_data_seed(sc.seed, r), sc.n);
    const Ensemble run = run_stream(src, sc.ensemble_config(repetition_weight_seed(sc.seed, r)));
    mc.push_back(root_n * (run.main_average().mean()[0] - truth[0]));
  }
  const double ks = ks_distance(boot, mc);
  const double secs = seconds_since(t0);
  out.require(ks < 0.15, "KS " + fmt(ks) + " >= 0.15");
  out.require(secs < 600.0, "runtime " + fmt(secs, 1) + " s >= 600 s");
  out.note("KS distance " + fmt(ks) + " (threshold 0.15)");
  return out;
}

Outcome property_suites() {
  Outcome out;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;

  // Gradient vs central finite differences.
  double worst_fd = 0.0;
  for (const auto& kind : {ModelKind::least_squares(), ModelKind::logistic()}) {
    for (int c = 0; c < 100; ++c) {
      const Index p = 1 + c % 5;
      ParamVector theta(p);
      Observation z;
      z.x.resize(p);
      for (Index j = 0; j < p; ++j) {
        theta[j] = nd(rng);
        z.x[j] = nd(rng);
      }
      z.y = kind.family() == ModelFamily::Logistic ? (c % 2 ? 1.0 : -1.0) : nd(rng);
      const ParamVector g = gradient(kind, theta, z);
      for (Index j = 0; j < p; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
        ParamVector up = theta;
        ParamVector down = theta;
        up[j] += h;
        down[j] -= h;
        const double fd = (loss(kind, up, z) - loss(kind, down, z)) / (2.0 * h);
        worst_fd = std::max(worst_fd, std::abs(fd - g[j]) / std::max(std::abs(g[j]), 1e-3));
      }
    }
  }
  out.require(worst_fd <= 1e-5, "finite-difference error " + sci(worst_fd));

  // Covariance PSD and symmetric.
  bool psd = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Index p = 1 + trial % 6;
    RunningCovariance rc(p);
    for (int i = 0; i < 2 + trial * 5; ++i) {
      ParamVector v(p);
      for (Index j = 0; j < p; ++j) v[j] = nd(rng);
      rc.add(v);
    }
    const Matrix cov = rc.covariance();
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    psd = psd && cov == cov.transpose() && eig.eigenvalues().minCoeff() >= -1e-12 * cov.trace();
  }
  out.require(psd, "covariance not symmetric PSD");

  // Histogram conservation.
  bool conserved = true;
  for (std::size_t bins : {1u, 10u, 37u}) {
    std::vector<double> v(1000);
    for (auto& x : v) x = nd(rng);
    const auto h = histogram(v, bins);
    std::uint64_t total = 0;
    for (auto c : h.counts) total += c;
    conserved = conserved && total == 1000;
  }
  out.require(conserved, "histogram counts not conserved");

  // Weight moments at 10^6 draws.
  std::string moments;
  for (auto dist : {WeightDistribution::Exponential1, WeightDistribution::Poisson1}) {
    const CounterStream s(2018, 1);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 1000000;
    for (int k = 1; k <= n; ++k) {
      const double w = draw_weight(dist, s, static_cast<std::uint64_t>(k));
      sum += w;
      sq += w * w;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    out.require(std::abs(mean - 1.0) <= 0.01 && std::abs(var - 1.0) <= 0.01,
                to_string(dist) + " moments " + fmt(mean) + "/" + fmt(var));
    moments += to_string(dist) + " mean " + fmt(mean) + " var " + fmt(var) + " ";
  }

  // Pause/resume bitwise equality.
  {
    EnsembleConfig cfg;
    cfg.schedule = {0.1, 0.6};
    cfg.replicates = 10;
    cfg.burn_in = 100;
    cfg.seed = 5;
    SyntheticSource a(cfg.model, true_theta(4, 2, 0.2), 9, 1000);
    SyntheticSource b(cfg.model, true_theta(4, 2, 0.2), 9, 1000);
    Ensemble whole(cfg, 4);
    feed(whole, a);
    Ensemble part(cfg, 4);
    for (int i = 0; i < 600; ++i) part.process(*b.next());
    std::stringstream buf;
    save_checkpoint(buf, part);
    Checkpoint cp = load_checkpoint(buf);
    feed(cp.ensemble, b);
    std::stringstream x;
    std::stringstream y;
    save_checkpoint(x, whole);
    save_checkpoint(y, cp.ensemble);
    out.require(x.str() == y.str(), "pause/resume differs from one-shot");
  }

  // Repetition-order independence.
  {
    ScenarioConfig sc;
    sc.n = 1500;
    sc.p = 4;
    sc.q = 2;
    sc.replicates = 10;
    sc.burn_in = 100;
    sc.repetitions = 10;
    sc.threads = 1;
    const auto serial = run_scenario(sc);
    std::vector<std::uint64_t> order{9, 3, 0, 7, 1, 8, 2, 6, 5, 4};
    const auto shuffled = aggregate(sc, run_repetitions(sc, order, 3));
    out.require(serial.rw_coverage == shuffled.rw_coverage &&
                    serial.rw_mean_se == shuffled.rw_mean_se &&
                    serial.mean_estimate == shuffled.mean_estimate &&
                    serial.empirical_se == shuffled.empirical_se &&
                    *serial.plugin_mean_se == *shuffled.plugin_mean_se,
                "coverage report depends on repetition order");
  }
  out.note("FD max error " + sci(worst_fd) + "; " + moments +
           "; covariance, histogram, pause/resume, order checks");
  return out;
}

}  // namespace

int main() {
  std::printf("rwsgd acceptance suite\n");
  run(1, "unit-weight degeneracy", unit_weight_degeneracy);
  run(2, "single- and three-step oracles", oracles);

  const auto t0 = Clock::now();
  const CoverageReport ls = run_scenario(coverage_cell(ModelKind::least_squares()));
  const CoverageReport logit = run_scenario(coverage_cell(ModelKind::logistic()));
  const CoverageReport lad = run_scenario(coverage_cell(ModelKind::quantile(0.5)));
  std::printf("     coverage cells (N=10000, p=10, q=6, mu=0.1; B=200, burn-in 2000, "
              "200 repetitions) ran in %.1f s\n",
              seconds_since(t0));

  run(3, "least-squares RW coverage", [&] { return ls_coverage(ls); });
  run(4, "plug-in undercoverage vs RW", [&] { return plugin_undercoverage(ls, logit); });
  run(5, "RW SE calibration", [&] { return se_calibration(ls); });
  run(6, "LAD inference without plug-in", [&] { return lad_inference(lad); });
  run(7, "distributional equivalence (KS)", distributional_equivalence);
  run(8, "property suites", property_suites);

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
