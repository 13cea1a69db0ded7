#include "crossnorm/numcore/mlp.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <utility>

#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

void apply_activation(Activation act, Mat& z) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu:
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::kTanh:
      for (double& v : z.data()) v = std::tanh(v);
      return;
  }
}

// d activation / d pre-activation, multiplied into `grad` in place.
void activation_backward(Activation act, const Mat& pre, const Mat& post, Mat& grad) {
  auto g = grad.data();
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu: {
      const auto z = pre.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (z[i] <= 0.0) g[i] = 0.0;
      }
      return;
    }
    case Activation::kTanh: {
      const auto a = post.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
      return;
    }
  }
}

void require_finite(const Mat& m, int layer, const char* what) {
  if (!all_finite(m.data())) {
    throw NumericError(std::string("non-finite ") + what + " at layer " + std::to_string(layer),
                       layer);
  }
}

void push_norm_params(const std::optional<NormLayer>& norm,
                      std::vector<std::span<const double>>& out) {
  if (norm && norm->spec().affine && norm->spec().kind != NormKind::kNone) {
    out.emplace_back(norm->state().scale);
    out.emplace_back(norm->state().shift);
  }
}

void push_norm_params(std::optional<NormLayer>& norm, std::vector<std::span<double>>& out) {
  if (norm && norm->spec().affine && norm->spec().kind != NormKind::kNone) {
    out.emplace_back(norm->mutable_state().scale);
    out.emplace_back(norm->mutable_state().shift);
  }
}

void push_norm_grads(const std::optional<NormLayer>& norm, NormGrads& g,
                     std::vector<Vec>& out) {
  if (norm && norm->spec().affine && norm->spec().kind != NormKind::kNone) {
    out.push_back(std::move(g.scale));
    out.push_back(std::move(g.shift));
  }
}

}  // namespace

Mlp::Mlp(const MlpSpec& spec, std::mt19937_64& rng) : id_(next_net_id()) {
  spec.norm.validate();
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw ConfigError("Mlp: input and output dimensions must be positive");
  }
  const bool attach = spec.norm.kind != NormKind::kNone;
  if (attach && spec.input_norm && spec.norm.kind != NormKind::kLayer) {
    input_norm_.emplace(spec.norm, spec.input_dim);
  }
  std::size_t fan_in = spec.input_dim;
  auto make_layer = [&](std::size_t out, Activation act) {
    DenseLayer layer;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weight = Mat(fan_in, out);
    for (double& w : layer.weight.data()) w = dist(rng);
    layer.bias.resize(out);
    for (double& b : layer.bias) b = dist(rng);
    layer.activation = act;
    fan_in = out;
    return layer;
  };
  for (std::size_t width : spec.hidden) {
    DenseLayer layer = make_layer(width, spec.hidden_activation);
    if (attach) layer.norm.emplace(spec.norm, width);
    layers_.push_back(std::move(layer));
  }
  layers_.push_back(make_layer(spec.output_dim, spec.output_activation));
}

Mlp::Mlp(std::optional<NormLayer> input_norm, std::vector<DenseLayer> layers)
    : input_norm_(std::move(input_norm)), layers_(std::move(layers)), id_(next_net_id()) {
  if (layers_.empty()) throw ConfigError("Mlp: at least one layer required");
  std::size_t width = layers_.front().weight.rows();
  if (input_norm_ && input_norm_->state().width() != width) {
    throw ConfigError("Mlp: input norm width does not match the first layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.weight.rows() != width || layer.bias.size() != layer.weight.cols()) {
      throw ConfigError("Mlp: layer " + std::to_string(l) + " does not chain");
    }
    if (layer.norm && layer.norm->state().width() != layer.weight.cols()) {
      throw ConfigError("Mlp: norm width mismatch at layer " + std::to_string(l));
    }
    width = layer.weight.cols();
  }
}

Mlp::Mlp(const Mlp& other)
    : input_norm_(other.input_norm_), layers_(other.layers_), id_(next_net_id()) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    input_norm_ = other.input_norm_;
    layers_ = other.layers_;
    ++version_;
  }
  return *this;
}

std::size_t Mlp::input_dim() const { return layers_.front().weight.rows(); }
std::size_t Mlp::output_dim() const { return layers_.back().weight.cols(); }

std::vector<DenseLayer>& Mlp::mutable_layers() {
  ++version_;
  return layers_;
}

std::optional<NormLayer>& Mlp::mutable_input_norm() {
  ++version_;
  return input_norm_;
}

std::vector<std::span<const double>> Mlp::parameters() const {
  std::vector<std::span<const double>> out;
  push_norm_params(input_norm_, out);
  for (const DenseLayer& layer : layers_) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
    push_norm_params(layer.norm, out);
  }
  return out;
}

std::vector<std::span<double>> Mlp::mutable_parameters() {
  ++version_;
  std::vector<std::span<double>> out;
  push_norm_params(input_norm_, out);
  for (DenseLayer& layer : layers_) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
    push_norm_params(layer.norm, out);
  }
  return out;
}

std::vector<std::size_t> Mlp::parameter_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& p : parameters()) sizes.push_back(p.size());
  return sizes;
}

std::vector<const NormLayer*> Mlp::norm_layers() const {
  std::vector<const NormLayer*> out;
  if (input_norm_) out.push_back(&*input_norm_);
  for (const DenseLayer& layer : layers_) {
    if (layer.norm) out.push_back(&*layer.norm);
  }
  return out;
}

std::vector<NormLayer*> Mlp::mutable_norm_layers() {
  std::vector<NormLayer*> out;
  if (input_norm_) out.push_back(&*input_norm_);
  for (DenseLayer& layer : layers_) {
    if (layer.norm) out.push_back(&*layer.norm);
  }
  return out;
}

Mat mlp_forward(Mlp& net, const Mat& x, const NormContext& ctx, MlpCache* cache) {
  if (x.cols() != net.input_dim()) {
    throw ConfigError("mlp_forward: input width " + std::to_string(x.cols()) +
                      " does not match network input " + std::to_string(net.input_dim()));
  }
  if (cache != nullptr) {
    *cache = MlpCache{};
    cache->net_id = net.id();
    cache->net_version = net.version();
    cache->mode = ctx.mode;
  }
  // Norm states are not parameters, so touching them leaves the version alone.
  auto& input_norm = net.input_norm_;
  auto& layers = net.layers_;

  Mat h = x;
  if (input_norm) {
    NormCache* nc = nullptr;
    if (cache != nullptr) nc = &cache->input_norm.emplace();
    h = input_norm->forward(h, ctx, nc);
    require_finite(h, -1, "input normalization");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    DenseLayer& layer = layers[l];
    Mat z = mat_mul(h, layer.weight);
    add_row_vector(z, layer.bias);
    Mat a = z;
    apply_activation(layer.activation, a);
    require_finite(a, static_cast<int>(l), "activation");
    Mat y;
    std::optional<NormCache> norm_cache;
    if (layer.norm) {
      NormCache* nc = cache != nullptr ? &norm_cache.emplace() : nullptr;
      y = layer.norm->forward(a, ctx, nc);
      require_finite(y, static_cast<int>(l), "normalized activation");
    }
    if (cache != nullptr) {
      LayerCache lc;
      lc.input = std::move(h);
      lc.pre_activation = std::move(z);
      if (layer.activation == Activation::kTanh) lc.activation = a;
      lc.norm = std::move(norm_cache);
      cache->layers.push_back(std::move(lc));
    }
    h = layer.norm ? std::move(y) : std::move(a);
  }
  return h;
}

MlpGrads mlp_backward(const Mlp& net, const MlpCache& cache, const Mat& grad_out,
                      bool param_grads) {
  if (cache.net_id != net.id()) {
    throw ContractViolation("mlp_backward: cache belongs to a different network");
  }
  if (cache.net_version != net.version()) {
    throw ContractViolation("mlp_backward: parameters changed since the forward pass");
  }
  if (cache.mode == NormMode::kEval) {
    throw ContractViolation("mlp_backward: eval-mode forward has no gradient path");
  }
  const auto& layers = net.layers();
  if (cache.layers.size() != layers.size()) {
    throw ContractViolation("mlp_backward: cache does not match network depth");
  }
  if (grad_out.cols() != net.output_dim() ||
      grad_out.rows() != cache.layers.back().pre_activation.rows()) {
    throw ContractViolation("mlp_backward: output gradient shape does not match the forward");
  }

  // Gradients are collected per layer and ordered like parameters() at the end.
  std::vector<std::vector<Vec>> per_layer(layers.size());
  Mat grad = grad_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const LayerCache& lc = cache.layers[l];
    std::vector<Vec> norm_grads;
    if (layer.norm) {
      NormGrads ng = norm_backward(*lc.norm, grad);
      grad = std::move(ng.input);
      if (param_grads) push_norm_grads(layer.norm, ng, norm_grads);
    }
    activation_backward(layer.activation, lc.pre_activation, lc.activation, grad);
    if (param_grads) {
      Mat dw = mat_mul_at_b(lc.input, grad);
      Vec db = col_sums(grad);
      auto dw_data = dw.data();
      per_layer[l].emplace_back(dw_data.begin(), dw_data.end());
      per_layer[l].push_back(std::move(db));
      for (Vec& g : norm_grads) per_layer[l].push_back(std::move(g));
    }
    grad = mat_mul_a_bt(grad, layer.weight);
  }

  MlpGrads out;
  if (net.input_norm()) {
    NormGrads ng = norm_backward(*cache.input_norm, grad);
    grad = std::move(ng.input);
    if (param_grads) push_norm_grads(net.input_norm(), ng, out.params);
  }
  if (param_grads) {
    for (auto& layer_grads : per_layer) {
      for (Vec& g : layer_grads) out.params.push_back(std::move(g));
    }
  }
  out.input = std::move(grad);
  return out;
}

}  // namespace crossnorm
