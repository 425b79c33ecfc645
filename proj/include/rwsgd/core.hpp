#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "rwsgd/error.hpp"

namespace rwsgd {

using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Polynomially decaying step size gamma * n^(-alpha).
struct LearningRateSchedule {
  double gamma = 1.0;
  double alpha = 2.0 / 3.0;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw ConfigError("learning rate scale gamma must be positive, got " +
                        std::to_string(gamma));
    }
    if (!(alpha > 0.5 && alpha < 1.0)) {
      throw ConfigError("learning rate exponent alpha must lie in (0.5, 1), got " +
                        std::to_string(alpha));
    }
  }

  double operator()(std::uint64_t n) const {
    if (n == 0) {
      throw std::domain_error("learning rate step index is 1-based");
    }
    return gamma * std::pow(static_cast<double>(n), -alpha);
  }

  friend bool operator==(const LearningRateSchedule&,
                         const LearningRateSchedule&) = default;
};

inline double learning_rate(const LearningRateSchedule& schedule, std::uint64_t n) {
  return schedule(n);
}

/// Running Polyak-Ruppert average of SGD iterates, skipping the first
/// `burn_in` iterates. Until an iterate survives the burn-in, mean() reports
/// the most recent raw iterate.
class AveragedAccumulator {
 public:
  AveragedAccumulator() = default;

  AveragedAccumulator(Index dim, std::uint64_t burn_in)
      : burn_in_(burn_in),
        mean_(ParamVector::Zero(dim)),
        latest_(ParamVector::Zero(dim)) {}

  AveragedAccumulator(const ParamVector& initial, std::uint64_t burn_in)
      : burn_in_(burn_in), mean_(ParamVector::Zero(initial.size())), latest_(initial) {}

  // Rebuilds an accumulator from serialized state.
  static AveragedAccumulator restore(std::uint64_t count_total, std::uint64_t burn_in,
                                     ParamVector mean, ParamVector latest) {
    AveragedAccumulator acc;
    acc.count_total_ = count_total;
    acc.burn_in_ = burn_in;
    acc.mean_ = std::move(mean);
    acc.latest_ = std::move(latest);
    return acc;
  }

  void add(const ParamVector& iterate) {
    if (iterate.size() != mean_.size()) {
      throw DataError("averaged accumulator dimension mismatch: expected " +
                      std::to_string(mean_.size()) + ", got " +
                      std::to_string(iterate.size()));
    }
    ++count_total_;
    latest_ = iterate;
    if (count_total_ > burn_in_) {
      const auto used = static_cast<double>(count_total_ - burn_in_);
      mean_ += (iterate - mean_) / used;
    }
  }

  const ParamVector& mean() const { return count_used() == 0 ? latest_ : mean_; }
  const ParamVector& raw_mean() const { return mean_; }
  const ParamVector& latest() const { return latest_; }

  std::uint64_t count_total() const { return count_total_; }
  std::uint64_t burn_in() const { return burn_in_; }
  std::uint64_t count_used() const {
    return count_total_ > burn_in_ ? count_total_ - burn_in_ : 0;
  }
  Index dim() const { return mean_.size(); }

 private:
  std::uint64_t count_total_ = 0;
  std::uint64_t burn_in_ = 0;
  ParamVector mean_;
  ParamVector latest_;
};

inline AveragedAccumulator accumulate_average(AveragedAccumulator acc,
                                              const ParamVector& iterate) {
  acc.add(iterate);
  return acc;
}

/// Single-pass mean and centered scatter (Welford). Only the upper triangle of
/// the scatter is updated, so the finalized covariance is exactly symmetric.
class RunningCovariance {
 public:
  RunningCovariance() = default;
  explicit RunningCovariance(Index dim)
      : mean_(ParamVector::Zero(dim)), scatter_(Matrix::Zero(dim, dim)) {}

  void add(const ParamVector& v) {
    if (v.size() != mean_.size()) {
      throw DataError("running covariance dimension mismatch: expected " +
                      std::to_string(mean_.size()) + ", got " +
                      std::to_string(v.size()));
    }
    ++count_;
    const ParamVector delta = v - mean_;
    const double n = static_cast<double>(count_);
    mean_ += delta / n;
    scatter_.selfadjointView<Eigen::Upper>().rankUpdate(delta, (n - 1.0) / n);
  }

  Matrix covariance() const {
    if (count_ < 2) {
      throw NumericalError("covariance needs at least two values, have " +
                           std::to_string(count_));
    }
    Matrix full = scatter_.selfadjointView<Eigen::Upper>();
    return full / static_cast<double>(count_ - 1);
  }

  std::uint64_t count() const { return count_; }
  const ParamVector& mean() const { return mean_; }
  Index dim() const { return mean_.size(); }

 private:
  std::uint64_t count_ = 0;
  ParamVector mean_;
  Matrix scatter_;
};

inline RunningCovariance accumulate_covariance(RunningCovariance rc, const ParamVector& v) {
  rc.add(v);
  return rc;
}

}  // namespace rwsgd
