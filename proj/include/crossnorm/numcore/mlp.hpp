#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "crossnorm/norm/norm.hpp"
#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

enum class Activation { kIdentity, kRelu, kTanh };

struct DenseLayer {
  Mat weight;  // in x out
  Vec bias;    // out
  Activation activation = Activation::kIdentity;
  // Applied after the activation.
  std::optional<NormLayer> norm;
};

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;
  // Attached after every hidden activation; kNone attaches nothing.
  NormSpec norm;
  // Also normalize the raw input. Never honored for LayerNorm.
  bool input_norm = false;
};

struct MlpCache;

// Fully connected network with optional normalization after each hidden
// activation and on the input.
class Mlp {
 public:
  // Weights and biases ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(const MlpSpec& spec, std::mt19937_64& rng);
  Mlp(std::optional<NormLayer> input_norm, std::vector<DenseLayer> layers);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  std::size_t input_dim() const;
  std::size_t output_dim() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  const std::optional<NormLayer>& input_norm() const { return input_norm_; }
  std::vector<DenseLayer>& mutable_layers();
  std::optional<NormLayer>& mutable_input_norm();

  // Parameter tensors in a fixed order: input-norm scale/shift, then per
  // layer weight, bias, norm scale/shift. Affine-free norms contribute none.
  std::vector<std::span<const double>> parameters() const;
  // Same order. Invalidates forward caches taken before the call.
  std::vector<std::span<double>> mutable_parameters();
  std::vector<std::size_t> parameter_sizes() const;

  // Every normalization state, in forward order.
  std::vector<const NormLayer*> norm_layers() const;
  std::vector<NormLayer*> mutable_norm_layers();

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

 private:
  friend Mat mlp_forward(Mlp& net, const Mat& x, const NormContext& ctx, MlpCache* cache);

  std::optional<NormLayer> input_norm_;
  std::vector<DenseLayer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

struct LayerCache {
  Mat input;
  Mat pre_activation;
  Mat activation;
  std::optional<NormCache> norm;
};

struct MlpCache {
  std::uint64_t net_id = 0;
  std::uint64_t net_version = 0;
  NormMode mode = NormMode::kTrain;
  std::optional<NormCache> input_norm;
  std::vector<LayerCache> layers;
};

struct MlpGrads {
  // Same order as Mlp::parameters().
  std::vector<Vec> params;
  // d loss / d network input.
  Mat input;
};

// Throws NumericError (carrying the layer index) on non-finite activations.
Mat mlp_forward(Mlp& net, const Mat& x, const NormContext& ctx, MlpCache* cache = nullptr);

// Throws ContractViolation when `cache` came from another network, a stale
// parameter version, or an eval-mode forward. With param_grads=false only the
// input gradient is computed.
MlpGrads mlp_backward(const Mlp& net, const MlpCache& cache, const Mat& grad_out,
                      bool param_grads = true);

}  // namespace crossnorm
