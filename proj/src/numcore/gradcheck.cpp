#include "crossnorm/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace crossnorm {

Vec numeric_gradient(std::span<double> x, const std::function<double()>& loss, double h) {
  Vec grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

double weighted_sum(const Mat& y, const Mat& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += y.data()[i] * w.data()[i];
  return total;
}

GradientError norm_gradient_error(const NormSpec& spec, const NormState& state, Mat x,
                                  const NormContext& ctx, const Mat& w, double h) {
  NormState live = state;
  NormCache cache;
  norm_forward(x, spec, live, ctx, &cache);
  const NormGrads grads = norm_backward(cache, w);

  NormState probe = state;
  auto loss = [&] {
    NormState s = probe;
    return weighted_sum(norm_forward(x, spec, s, ctx, nullptr), w);
  };
  GradientError err;
  err.input = relative_error(grads.input.data(), numeric_gradient(x.data(), loss, h));
  if (spec.affine && spec.kind != NormKind::kNone) {
    err.params = std::max(relative_error(grads.scale, numeric_gradient(probe.scale, loss, h)),
                          relative_error(grads.shift, numeric_gradient(probe.shift, loss, h)));
  }
  return err;
}

GradientError mlp_gradient_error(const Mlp& net, Mat x, const NormContext& ctx, const Mat& w,
                                 double h) {
  Mlp live = net;
  MlpCache cache;
  mlp_forward(live, x, ctx, &cache);
  const MlpGrads grads = mlp_backward(live, cache, w);

  Mlp probe = net;
  std::vector<NormState> saved;
  for (const NormLayer* layer : probe.norm_layers()) saved.push_back(layer->state());
  // Parameters are perturbed in place, so only running statistics are reset.
  auto loss = [&] {
    auto layers = probe.mutable_norm_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      NormState& s = layers[l]->mutable_state();
      s.running_mean = saved[l].running_mean;
      s.running_var = saved[l].running_var;
      s.step = saved[l].step;
    }
    return weighted_sum(mlp_forward(probe, x, ctx), w);
  };
  GradientError err;
  err.input = relative_error(grads.input.data(), numeric_gradient(x.data(), loss, h));
  auto params = probe.mutable_parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    err.params = std::max(err.params,
                          relative_error(grads.params[p], numeric_gradient(params[p], loss, h)));
  }
  return err;
}

}  // namespace crossnorm
