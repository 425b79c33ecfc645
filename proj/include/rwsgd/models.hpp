#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "rwsgd/core.hpp"

namespace rwsgd {

/// One (response, covariates) pair. Logistic responses are coded -1/+1.
struct Observation {
  double y = 0.0;
  ParamVector x;
};

enum class ModelFamily { LeastSquares, Logistic, Quantile };

/// Loss family plus its parameter (the quantile level for Quantile).
class ModelKind {
 public:
  static ModelKind least_squares() { return ModelKind(ModelFamily::LeastSquares, 0.5); }
  static ModelKind logistic() { return ModelKind(ModelFamily::Logistic, 0.5); }
  static ModelKind quantile(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw ConfigError("quantile level tau must lie in (0, 1), got " + std::to_string(tau));
    }
    return ModelKind(ModelFamily::Quantile, tau);
  }

  // Accepts "ls", "least_squares", "logistic", "logit", "quantile", "lad".
  static ModelKind parse(std::string_view name, double tau = 0.5) {
    if (name == "ls" || name == "least_squares" || name == "linear") return least_squares();
    if (name == "logistic" || name == "logit") return logistic();
    if (name == "quantile") return quantile(tau);
    if (name == "lad") return quantile(0.5);
    throw ConfigError("unknown model '" + std::string(name) + "'");
  }

  ModelFamily family() const { return family_; }
  double tau() const { return tau_; }
  bool has_hessian() const { return family_ != ModelFamily::Quantile; }

  std::string name() const {
    switch (family_) {
      case ModelFamily::LeastSquares: return "least_squares";
      case ModelFamily::Logistic: return "logistic";
      case ModelFamily::Quantile: return "quantile";
    }
    return "unknown";
  }

  friend bool operator==(const ModelKind&, const ModelKind&) = default;

 private:
  ModelKind(ModelFamily family, double tau) : family_(family), tau_(tau) {}

  ModelFamily family_;
  double tau_;
};

namespace detail {

// 1 / (1 + exp(t)) without overflow for large |t|.
inline double inverse_one_plus_exp(double t) {
  if (t > 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

// log(1 + exp(t)), stable on both tails.
inline double log1p_exp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

inline void check_dims(const ParamVector& theta, const Observation& z) {
  if (theta.size() != z.x.size()) {
    throw DataError("dimension mismatch: parameter has " + std::to_string(theta.size()) +
                    " entries, covariates have " + std::to_string(z.x.size()));
  }
}

inline void check_label(const ModelKind& kind, double y) {
  if (kind.family() == ModelFamily::Logistic && y != 1.0 && y != -1.0) {
    throw DataError("logistic response must be -1 or +1, got " + std::to_string(y));
  }
}

}  // namespace detail

/// Every model in this library has a gradient of the form c * x. Returns c
/// given the linear predictor x'theta and the response.
inline double gradient_scale(const ModelKind& kind, double linear_predictor, double y) {
  switch (kind.family()) {
    case ModelFamily::LeastSquares:
      return -2.0 * (y - linear_predictor);
    case ModelFamily::Logistic:
      return -y * detail::inverse_one_plus_exp(y * linear_predictor);
    case ModelFamily::Quantile: {
      // Strict inequality: a zero residual takes the tau branch.
      const double indicator = (y - linear_predictor < 0.0) ? 1.0 : 0.0;
      return -(kind.tau() - indicator);
    }
  }
  return 0.0;
}

inline ParamVector gradient(const ModelKind& kind, const ParamVector& theta,
                            const Observation& z) {
  detail::check_dims(theta, z);
  detail::check_label(kind, z.y);
  return gradient_scale(kind, z.x.dot(theta), z.y) * z.x;
}

/// Hessians are h * x x'. Returns h, or nullopt when the loss has no Hessian.
inline std::optional<double> hessian_scale(const ModelKind& kind, double linear_predictor) {
  switch (kind.family()) {
    case ModelFamily::LeastSquares:
      return 2.0;
    case ModelFamily::Logistic: {
      // Label-free: s(1-s) with s the logistic sigmoid of x'theta.
      const double s = detail::inverse_one_plus_exp(-linear_predictor);
      return s * (1.0 - s);
    }
    case ModelFamily::Quantile:
      return std::nullopt;
  }
  return std::nullopt;
}

/// Second derivative of the loss in theta, or nullopt for the check loss.
inline std::optional<Matrix> hessian(const ModelKind& kind, const ParamVector& theta,
                                     const Observation& z) {
  detail::check_dims(theta, z);
  const auto scale = hessian_scale(kind, z.x.dot(theta));
  if (!scale) return std::nullopt;
  const Index p = z.x.size();
  Matrix h = Matrix::Zero(p, p);
  h.selfadjointView<Eigen::Upper>().rankUpdate(z.x, *scale);
  return Matrix(h.selfadjointView<Eigen::Upper>());
}

/// Check-loss value rho_tau(u) = u (tau - 1[u < 0]).
inline double check_loss(double tau, double residual) {
  return residual * (tau - (residual < 0.0 ? 1.0 : 0.0));
}

inline double loss(const ModelKind& kind, const ParamVector& theta, const Observation& z) {
  detail::check_dims(theta, z);
  detail::check_label(kind, z.y);
  const double eta = z.x.dot(theta);
  switch (kind.family()) {
    case ModelFamily::LeastSquares: {
      const double r = z.y - eta;
      return r * r;
    }
    case ModelFamily::Logistic:
      return detail::log1p_exp(-z.y * eta);
    case ModelFamily::Quantile:
      return check_loss(kind.tau(), z.y - eta);
  }
  return 0.0;
}

}  // namespace rwsgd
