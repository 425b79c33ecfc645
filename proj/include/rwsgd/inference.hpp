#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "rwsgd/core.hpp"
#include "rwsgd/engine.hpp"
#include "rwsgd/models.hpp"
#include "rwsgd/plugin.hpp"

namespace rwsgd {

// ---------------------------------------------------------------------------
// Covariance estimates

/// Sample covariance of the rows of a B x p matrix of replicate averages.
inline Matrix replicate_covariance(const Matrix& replicate_averages) {
  if (replicate_averages.rows() < 2) {
    throw NumericalError("replicate covariance needs B >= 2 replicates, have " +
                         std::to_string(replicate_averages.rows()));
  }
  RunningCovariance rc(replicate_averages.cols());
  for (Index b = 0; b < replicate_averages.rows(); ++b) {
    rc.add(replicate_averages.row(b).transpose());
  }
  return rc.covariance();
}

inline ParamVector standard_errors(const Matrix& covariance) {
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// S^{-1} V S^{-1} / n. S must be symmetric positive definite with
/// condition number below `condition_cap`.
inline Matrix sandwich_covariance(const Matrix& s_hat, const Matrix& v_hat, double n,
                                  double condition_cap = 1e12) {
  if (s_hat.rows() != s_hat.cols() || v_hat.rows() != s_hat.rows() ||
      v_hat.cols() != s_hat.cols()) {
    throw DataError("sandwich inputs must be square matrices of equal size");
  }
  if (!(n > 0.0)) throw NumericalError("sandwich covariance needs a positive count");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s_hat, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || !(condition <= condition_cap)) {
    throw NumericalError("Hessian estimate is singular or ill-conditioned (condition " +
                         std::to_string(condition) + ", cap " +
                         std::to_string(condition_cap) + ")");
  }
  const Eigen::LLT<Matrix> llt(s_hat);
  const Matrix s_inv = llt.solve(Matrix::Identity(s_hat.rows(), s_hat.cols()));
  const Matrix raw = s_inv * v_hat * s_inv / n;
  return (raw + raw.transpose()) / 2.0;
}

inline Matrix sandwich_covariance(const SandwichInputs& acc, double condition_cap = 1e12) {
  return sandwich_covariance(acc.s_hat(), acc.v_hat(), static_cast<double>(acc.count()),
                             condition_cap);
}

/// Nuisance quantities for the closed-form asymptotic covariances.
struct AsymptoticSpec {
  Matrix design_second_moment;  // G = E[x x']
  double noise_variance = 1.0;  // least squares
  double error_density_at_zero = 0.0;  // quantile
  std::optional<Matrix> information;  // logistic: E[x x' s(1-s)] at the truth
};

/// G^{-1} varphi(0) / phidot(0)^2, the M-estimation form for losses rho(y - x'theta).
inline Matrix m_estimation_covariance(const Matrix& design_second_moment, double psi_variance,
                                      double psi_slope) {
  if (!(psi_slope > 0.0)) throw ConfigError("phidot(0) must be positive");
  const Eigen::LLT<Matrix> llt(design_second_moment);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("design second moment G is not positive definite");
  }
  const Matrix g_inv =
      llt.solve(Matrix::Identity(design_second_moment.rows(), design_second_moment.cols()));
  return g_inv * (psi_variance / (psi_slope * psi_slope));
}

/// Asymptotic covariance of sqrt(n)(avg - truth), divided by `n`.
inline Matrix theoretical_covariance(const ModelKind& kind, const AsymptoticSpec& spec,
                                     double n = 1.0) {
  switch (kind.family()) {
    case ModelFamily::LeastSquares:
      // psi(u) = 2u: varphi(0) = 4 sigma^2, phidot(0) = 2.
      return m_estimation_covariance(spec.design_second_moment, 4.0 * spec.noise_variance,
                                     2.0) / n;
    case ModelFamily::Quantile: {
      if (!(spec.error_density_at_zero > 0.0)) {
        throw ConfigError("error density at zero must be positive");
      }
      const double tau = kind.tau();
      return m_estimation_covariance(spec.design_second_moment, tau * (1.0 - tau),
                                     spec.error_density_at_zero) / n;
    }
    case ModelFamily::Logistic: {
      if (!spec.information) {
        throw ConfigError("logistic asymptotic covariance needs the information matrix");
      }
      const Eigen::LLT<Matrix> llt(*spec.information);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("information matrix is not positive definite");
      }
      return llt.solve(Matrix::Identity(spec.information->rows(), spec.information->cols())) /
             n;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Intervals

/// Standard normal quantile.
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw ConfigError("normal quantile needs a probability in (0, 1)");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * prob);
}

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("confidence level must lie in (0, 1), got " + std::to_string(level));
  }
}

struct Interval {
  ParamVector lower;
  ParamVector upper;
};

/// point -/+ z_{(1+level)/2} * se, coordinatewise.
inline Interval confidence_intervals(const ParamVector& point, const ParamVector& se,
                                     double level) {
  check_level(level);
  if (point.size() != se.size()) throw DataError("point and se differ in dimension");
  if ((se.array() < 0.0).any()) throw DataError("standard errors must be nonnegative");
  const double z = normal_quantile((1.0 + level) / 2.0);
  return {point - z * se, point + z * se};
}

/// Type-7 (linear interpolation) sample quantile.
inline double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// Reports

enum class IntervalMethod { ReplicateRW, PlugIn, ReplicatePercentile };

inline std::string to_string(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::ReplicateRW: return "RW";
    case IntervalMethod::PlugIn: return "PlugIn";
    case IntervalMethod::ReplicatePercentile: return "RW-percentile";
  }
  return "unknown";
}

struct InferenceReport {
  std::vector<std::string> names;
  ParamVector point;
  ParamVector se;
  ParamVector ci_lower;
  ParamVector ci_upper;
  double level = 0.95;
  IntervalMethod method = IntervalMethod::ReplicateRW;
  std::uint64_t n_total = 0;
  std::uint64_t n_used = 0;
  Matrix covariance;
  std::optional<Matrix> replicate_averages;
};

namespace detail {

inline InferenceReport report_skeleton(const Ensemble& ensemble, double level,
                                       IntervalMethod method) {
  check_level(level);
  InferenceReport r;
  r.point = ensemble.main_average().mean();
  r.level = level;
  r.method = method;
  r.n_total = ensemble.count();
  r.n_used = ensemble.main_average().count_used();
  return r;
}

}  // namespace detail

/// Normal intervals from the spread of the replicate averages.
inline InferenceReport replicate_report(const Ensemble& ensemble, double level = 0.95,
                                        bool keep_replicates = false) {
  auto r = detail::report_skeleton(ensemble, level, IntervalMethod::ReplicateRW);
  Matrix reps = ensemble.replicate_averages();
  r.covariance = replicate_covariance(reps);
  r.se = standard_errors(r.covariance);
  auto ci = confidence_intervals(r.point, r.se, level);
  r.ci_lower = std::move(ci.lower);
  r.ci_upper = std::move(ci.upper);
  if (keep_replicates) r.replicate_averages = std::move(reps);
  return r;
}

/// Basic-bootstrap intervals from replicate quantiles:
/// [2 avg - q_{(1+level)/2}, 2 avg - q_{(1-level)/2}]. Not the normal
/// interval; offered because the replicates estimate the whole distribution.
inline InferenceReport percentile_report(const Ensemble& ensemble, double level = 0.95,
                                         bool keep_replicates = false) {
  auto r = detail::report_skeleton(ensemble, level, IntervalMethod::ReplicatePercentile);
  Matrix reps = ensemble.replicate_averages();
  r.covariance = replicate_covariance(reps);
  r.se = standard_errors(r.covariance);
  r.ci_lower.resize(r.point.size());
  r.ci_upper.resize(r.point.size());
  for (Index j = 0; j < reps.cols(); ++j) {
    std::vector<double> col(reps.col(j).data(), reps.col(j).data() + reps.rows());
    const double q_hi = sample_quantile(col, (1.0 + level) / 2.0);
    const double q_lo = sample_quantile(std::move(col), (1.0 - level) / 2.0);
    r.ci_lower[j] = 2.0 * r.point[j] - q_hi;
    r.ci_upper[j] = 2.0 * r.point[j] - q_lo;
  }
  if (keep_replicates) r.replicate_averages = std::move(reps);
  return r;
}

/// Normal intervals from the plug-in sandwich estimate.
inline InferenceReport plugin_report(const Ensemble& ensemble, double level = 0.95,
                                     double condition_cap = 1e12) {
  if (!ensemble.plugin()) {
    if (!ensemble.config().model.has_hessian()) throw PlugInUnavailable();
    throw ConfigError("plug-in accumulation was disabled for this run");
  }
  auto r = detail::report_skeleton(ensemble, level, IntervalMethod::PlugIn);
  r.covariance = sandwich_covariance(*ensemble.plugin(), condition_cap);
  r.se = standard_errors(r.covariance);
  auto ci = confidence_intervals(r.point, r.se, level);
  r.ci_lower = std::move(ci.lower);
  r.ci_upper = std::move(ci.upper);
  return r;
}

// ---------------------------------------------------------------------------
// Distribution diagnostics

/// Two-sample Kolmogorov-Smirnov statistic sup_t |F_a(t) - F_b(t)|.
inline double ks_distance(std::span<const double> sample_a, std::span<const double> sample_b) {
  if (sample_a.empty() || sample_b.empty()) {
    throw DataError("KS distance needs two nonempty samples");
  }
  std::vector<double> a(sample_a.begin(), sample_a.end());
  std::vector<double> b(sample_b.begin(), sample_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::uint64_t> counts;
};

/// Equal-width histogram over [min, max]. A zero-width range is widened so
/// that a constant sample still lands in one bin.
inline Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw DataError("histogram of an empty sample");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!(hi > lo)) {
    const double eps = std::max(std::abs(lo) * 1e-9, 1e-12);
    lo -= eps;
    hi += eps;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (const double v : values) {
    auto k = static_cast<std::size_t>(std::floor((v - lo) / width));
    h.counts[std::min(k, bins - 1)]++;
  }
  return h;
}

}  // namespace rwsgd
