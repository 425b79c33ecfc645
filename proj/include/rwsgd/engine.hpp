#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rwsgd/core.hpp"
#include "rwsgd/models.hpp"
#include "rwsgd/plugin.hpp"
#include "rwsgd/random.hpp"

namespace rwsgd {

/// Where the plug-in accumulators evaluate the gradient and Hessian when
/// observation i arrives: at the iterate before or after it is absorbed.
enum class PluginPoint { PreUpdate, PostUpdate };

struct EnsembleConfig {
  ModelKind model = ModelKind::least_squares();
  LearningRateSchedule schedule{};
  std::size_t replicates = 200;
  std::uint64_t burn_in = 0;
  WeightDistribution weights = WeightDistribution::Exponential1;
  std::uint64_t seed = 0;
  bool plugin = true;
  PluginPoint plugin_point = PluginPoint::PreUpdate;
  // Iterates whose Euclidean norm exceeds this abort the run.
  double divergence_limit = 1e8;

  void validate() const {
    schedule.validate();
    if (replicates < 1) throw ConfigError("number of replicates B must be at least 1");
    if (!(divergence_limit > 0.0)) throw ConfigError("divergence limit must be positive");
  }
};

namespace detail {

inline void apply_step(ParamVector& theta, const Observation& z, double rate, double weight,
                       const ModelKind& kind, std::uint64_t step, double limit) {
  const double scale = gradient_scale(kind, z.x.dot(theta), z.y);
  if (!std::isfinite(scale)) {
    throw NumericalError("non-finite gradient at step " + std::to_string(step));
  }
  if (weight == 0.0) return;
  theta.noalias() -= (rate * weight * scale) * z.x;
  const double norm = theta.norm();
  if (!(norm <= limit)) {
    throw NumericalError("iterate norm " + std::to_string(norm) + " exceeded limit " +
                         std::to_string(limit) + " at step " + std::to_string(step) +
                         "; reduce the learning rate scale gamma");
  }
}

}  // namespace detail

/// One (possibly weighted) SGD update: iterate - rate * weight * grad.
inline ParamVector sgd_step(ParamVector iterate, const Observation& z, double rate,
                            double weight, const ModelKind& kind, std::uint64_t step = 0,
                            double divergence_limit = 1e8) {
  if (!(rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(weight >= 0.0)) throw ConfigError("weight must be nonnegative");
  detail::check_dims(iterate, z);
  detail::check_label(kind, z.y);
  detail::apply_step(iterate, z, rate, weight, kind, step, divergence_limit);
  return iterate;
}

struct ReplicateState {
  std::size_t id = 0;  // 1-based
  ParamVector iterate;
  AveragedAccumulator average;
  CounterStream rng;
};

class Ensemble;
struct CheckpointAccess;

/// The main SGD path, its B randomly weighted copies and the plug-in
/// accumulators, all advanced together by one observation at a time.
class Ensemble {
 public:
  Ensemble(EnsembleConfig config, Index dim) : Ensemble(std::move(config), ParamVector::Zero(dim)) {}

  Ensemble(EnsembleConfig config, const ParamVector& initial) : config_(std::move(config)) {
    config_.validate();
    if (initial.size() < 1) throw ConfigError("parameter dimension must be at least 1");
    main_iterate_ = initial;
    main_average_ = AveragedAccumulator(initial, config_.burn_in);
    replicates_.reserve(config_.replicates);
    for (std::size_t b = 1; b <= config_.replicates; ++b) {
      replicates_.push_back(ReplicateState{b, initial,
                                           AveragedAccumulator(initial, config_.burn_in),
                                           CounterStream(config_.seed, b)});
    }
    if (config_.plugin && config_.model.has_hessian()) plugin_ = SandwichInputs(dim());
  }

  /// Absorbs the next observation into every path.
  void process(const Observation& z) { process(z, {}); }

  /// As process(z), with the replicates visited in the order given by the
  /// permutation `order` (empty means 0..B-1). The result does not depend on
  /// the order.
  void process(const Observation& z, std::span<const std::size_t> order) {
    check_observation(z);
    if (!order.empty() && order.size() != replicates_.size()) {
      throw ConfigError("replicate order must list every replicate once");
    }
    const std::uint64_t step = n_ + 1;
    const double rate = config_.schedule(step);

    if (plugin_ && config_.plugin_point == PluginPoint::PreUpdate) update_plugin(z);
    advance_main(z, step, rate);
    if (plugin_ && config_.plugin_point == PluginPoint::PostUpdate) update_plugin(z);

    if (order.empty()) {
      for (auto& rep : replicates_) advance_replicate(rep, z, step, rate);
    } else {
      for (const std::size_t b : order) advance_replicate(replicates_.at(b), z, step, rate);
    }
    n_ = step;
  }

  void check_observation(const Observation& z) const {
    if (z.x.size() != dim()) {
      throw DataError("observation " + std::to_string(n_ + 1) + " has " +
                      std::to_string(z.x.size()) + " covariates, expected " +
                      std::to_string(dim()));
    }
    if (!z.x.allFinite() || !std::isfinite(z.y)) {
      throw DataError("observation " + std::to_string(n_ + 1) + " has non-finite values");
    }
    detail::check_label(config_.model, z.y);
  }

  const EnsembleConfig& config() const { return config_; }
  Index dim() const { return main_iterate_.size(); }
  std::uint64_t count() const { return n_; }
  std::size_t replicate_count() const { return replicates_.size(); }

  const ParamVector& main_iterate() const { return main_iterate_; }
  const AveragedAccumulator& main_average() const { return main_average_; }
  const std::vector<ReplicateState>& replicates() const { return replicates_; }
  const std::optional<SandwichInputs>& plugin() const { return plugin_; }

  /// B x p matrix whose rows are the replicate averages.
  Matrix replicate_averages() const {
    Matrix out(static_cast<Index>(replicates_.size()), dim());
    for (std::size_t b = 0; b < replicates_.size(); ++b) {
      out.row(static_cast<Index>(b)) = replicates_[b].average.mean().transpose();
    }
    return out;
  }

 private:
  friend struct CheckpointAccess;
  Ensemble() = default;

  void advance_main(const Observation& z, std::uint64_t step, double rate) {
    detail::apply_step(main_iterate_, z, rate, 1.0, config_.model, step,
                       config_.divergence_limit);
    main_average_.add(main_iterate_);
  }

  void advance_replicate(ReplicateState& rep, const Observation& z, std::uint64_t step,
                         double rate) {
    const double w = draw_weight(config_.weights, rep.rng, step);
    try {
      detail::apply_step(rep.iterate, z, rate, w, config_.model, step,
                         config_.divergence_limit);
    } catch (const NumericalError& e) {
      throw NumericalError("replicate " + std::to_string(rep.id) + ": " + e.what());
    }
    rep.average.add(rep.iterate);
  }

  void update_plugin(const Observation& z) {
    const double eta = z.x.dot(main_iterate_);
    const double g = gradient_scale(config_.model, eta, z.y);
    const auto h = hessian_scale(config_.model, eta);
    if (!h) throw PlugInUnavailable();
    plugin_->add(z.x, g, *h);
  }

  EnsembleConfig config_;
  std::uint64_t n_ = 0;
  ParamVector main_iterate_;
  AveragedAccumulator main_average_;
  std::vector<ReplicateState> replicates_;
  std::optional<SandwichInputs> plugin_;
};

inline Ensemble process_observation(Ensemble state, const Observation& z) {
  state.process(z);
  return state;
}

/// Anything with `std::optional<Observation> next()`.
template <typename S>
concept ObservationSource = requires(S& s) {
  { s.next() } -> std::convertible_to<std::optional<Observation>>;
};

/// Feeds every remaining observation of `source` into `ensemble`, one at a
/// time. Returns the number consumed.
template <ObservationSource S>
std::uint64_t feed(Ensemble& ensemble, S& source) {
  std::uint64_t consumed = 0;
  while (auto z = source.next()) {
    ensemble.process(*z);
    ++consumed;
  }
  return consumed;
}

/// Runs a fresh ensemble over the whole stream. The first observation fixes
/// the dimension; `initial` overrides the zero starting point.
template <ObservationSource S>
Ensemble run_stream(S& source, const EnsembleConfig& config,
                    const std::optional<ParamVector>& initial = std::nullopt) {
  auto first = source.next();
  if (!first) throw DataError("observation stream is empty");
  if (initial && initial->size() != first->x.size()) {
    throw ConfigError("initial point has dimension " + std::to_string(initial->size()) +
                      ", data has " + std::to_string(first->x.size()));
  }
  Ensemble ensemble(config, initial ? *initial : ParamVector::Zero(first->x.size()));
  ensemble.process(*first);
  feed(ensemble, source);
  return ensemble;
}

/// Adapts an in-memory vector of observations (tests, small examples).
class VectorSource {
 public:
  explicit VectorSource(const std::vector<Observation>& data) : data_(&data) {}
  std::optional<Observation> next() {
    if (pos_ >= data_->size()) return std::nullopt;
    ++requested_;
    return (*data_)[pos_++];
  }
  std::size_t requested() const { return requested_; }

 private:
  const std::vector<Observation>* data_;
  std::size_t pos_ = 0;
  std::size_t requested_ = 0;
};

}  // namespace rwsgd
