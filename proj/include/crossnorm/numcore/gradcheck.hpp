#pragma once

#include <functional>
#include <span>

#include "crossnorm/norm/norm.hpp"
#include "crossnorm/numcore/mat.hpp"
#include "crossnorm/numcore/mlp.hpp"

namespace crossnorm {

// Central differences of `loss` with respect to every entry of `x`.
Vec numeric_gradient(std::span<double> x, const std::function<double()>& loss, double h = 1e-5);

// ||a - b|| / max(||a||, ||b||, 1e-8) over the whole tensor.
double relative_error(std::span<const double> a, std::span<const double> b);

// sum(y .* w): a scalar loss whose output gradient is w.
double weighted_sum(const Mat& y, const Mat& w);

struct GradientError {
  double input = 0.0;
  double params = 0.0;  // worst parameter tensor

  double worst() const { return input > params ? input : params; }
};

// norm_backward against central differences of sum(w .* y). Every evaluation
// starts from a copy of `state`, so running updates cannot leak between them.
GradientError norm_gradient_error(const NormSpec& spec, const NormState& state, Mat x,
                                  const NormContext& ctx, const Mat& w, double h = 1e-6);

// Same for mlp_backward. Normalization states are restored before every
// evaluation.
GradientError mlp_gradient_error(const Mlp& net, Mat x, const NormContext& ctx, const Mat& w,
                                 double h = 1e-6);

}  // namespace crossnorm
