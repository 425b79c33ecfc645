#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "rwsgd/core.hpp"

namespace rwsgd {

/// Running sums behind the plug-in sandwich estimator: averaged loss Hessians
/// (S) and averaged gradient outer products (V). Only upper triangles are
/// accumulated; the accessors return full symmetric matrices.
class SandwichInputs {
 public:
  SandwichInputs() = default;
  explicit SandwichInputs(Index dim)
      : hessian_sum_(Matrix::Zero(dim, dim)), outer_sum_(Matrix::Zero(dim, dim)) {}

  static SandwichInputs restore(std::uint64_t count, Matrix hessian_sum, Matrix outer_sum) {
    SandwichInputs s;
    s.count_ = count;
    s.hessian_sum_ = std::move(hessian_sum);
    s.outer_sum_ = std::move(outer_sum);
    return s;
  }

  // `grad` is c * x for a scalar c; callers on the hot path pass the pieces.
  void add(const ParamVector& x, double gradient_scale, double hessian_scale) {
    ++count_;
    hessian_sum_.selfadjointView<Eigen::Upper>().rankUpdate(x, hessian_scale);
    outer_sum_.selfadjointView<Eigen::Upper>().rankUpdate(x, gradient_scale * gradient_scale);
  }

  void add(const ParamVector& grad, const std::optional<Matrix>& hess) {
    if (!hess) throw PlugInUnavailable();
    if (grad.size() != hessian_sum_.rows() || hess->rows() != hessian_sum_.rows() ||
        hess->cols() != hessian_sum_.cols()) {
      throw DataError("plug-in accumulator dimension mismatch");
    }
    ++count_;
    hessian_sum_.triangularView<Eigen::Upper>() += *hess;
    outer_sum_.selfadjointView<Eigen::Upper>().rankUpdate(grad, 1.0);
  }

  std::uint64_t count() const { return count_; }
  Index dim() const { return hessian_sum_.rows(); }

  Matrix s_hat() const { return mean_of(hessian_sum_); }
  Matrix v_hat() const { return mean_of(outer_sum_); }

  const Matrix& hessian_sum() const { return hessian_sum_; }
  const Matrix& outer_sum() const { return outer_sum_; }

 private:
  Matrix mean_of(const Matrix& upper_sum) const {
    if (count_ == 0) throw NumericalError("plug-in accumulator is empty");
    Matrix full = upper_sum.selfadjointView<Eigen::Upper>();
    return full / static_cast<double>(count_);
  }

  std::uint64_t count_ = 0;
  Matrix hessian_sum_;
  Matrix outer_sum_;
};

inline SandwichInputs update_plugin(SandwichInputs acc, const ParamVector& grad,
                                    const std::optional<Matrix>& hess) {
  acc.add(grad, hess);
  return acc;
}

}  // namespace rwsgd
