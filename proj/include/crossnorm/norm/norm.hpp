#pragma once

// Feature normalization for critic networks: BatchNorm, LayerNorm, and the
// cross-normalization family (CrossNorm / CrossRenorm).
//
// A normalization layer sees a batch whose rows may come from two streams:
// rows [0, off_rows) are off-policy features f(s, a) from the replay buffer,
// rows [off_rows, rows) are on-policy features f(s', pi(s')). Cross kinds
// normalize both streams with one set of moments; per-stream BatchNorm gives
// each stream its own.

#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

enum class NormKind { kNone, kBatch, kLayer, kCross, kCrossRenorm };

const char* to_string(NormKind kind);
// Throws ConfigError on an unknown name.
NormKind norm_kind_from_string(const std::string& name);

struct NormSpec {
  NormKind kind = NormKind::kNone;
  // Weight of the off-policy stream mean in the mixture mean.
  double alpha = 0.5;
  // Successor-feature weight used by the linear lab; deep layers use 1 - alpha.
  double beta = 0.5;
  // Subtract the mean only; skip the division by the standard deviation.
  bool mean_only = false;
  // Running-moment update weight rho: running <- (1 - rho) running + rho batch.
  double momentum = 1.0;
  // CrossRenorm normalizes with running moments once state.step reaches this.
  std::size_t renorm_switch_step = 5000;
  double epsilon = 1e-5;
  // Learnable per-feature scale and shift.
  bool affine = true;
  // BatchNorm only: Bessel-corrected batch variance instead of 1/N.
  bool unbiased_variance = false;
  // Cross kinds only: variance built from the two stream means alone
  // (1/(2N-1) [(m_on - c)^2 + (m_off - c)^2]) instead of from all 2N samples.
  bool literal_variance = false;

  // Throws ConfigError when a field is out of range.
  void validate() const;

  friend bool operator==(const NormSpec&, const NormSpec&) = default;
};

struct NormState {
  Vec running_mean;
  Vec running_var;
  // Number of running-moment updates so far.
  std::size_t step = 0;
  Vec scale;
  Vec shift;

  // Running mean 0, variance 1, identity affine.
  static NormState init(std::size_t width);
  std::size_t width() const { return scale.size(); }
};

struct Moments {
  Vec mean;
  Vec var;
};

// Per-column mean and population variance (divide by N). Requires rows >= 1.
Moments batch_moments(const Mat& x);

// Mixture moments of the two streams. mean = alpha colmean(off) +
// (1 - alpha) colmean(on); variance is Bessel-corrected over the 2N
// concatenated rows about the balanced (alpha = 1/2) mean, or with `literal`
// built from the two stream means only. Streams must have equal row counts.
Moments cross_moments(const Mat& f_off, const Mat& f_on, double alpha,
                      bool literal = false);

// y = (x - mean) / sqrt(var + eps), or y = x - mean when spec.mean_only,
// followed by the affine transform from `state` when spec.affine.
Mat normalize_apply(const Mat& x, const Moments& moments, const NormSpec& spec,
                    const NormState& state);

// running <- (1 - rho) running + rho batch for both moments; step += 1.
void running_update(NormState& state, const Moments& batch, double rho);

// Row-wise standardization across features followed by the affine transform.
Mat layer_norm(const Mat& x, const NormSpec& spec, const NormState& state);

enum class NormMode {
  // Batch moments (or running moments after the CrossRenorm switch);
  // running statistics are updated.
  kTrain,
  // Same moments as kTrain, but no state changes. Used for actor steps and
  // bootstrap-target forwards.
  kTrainFrozen,
  // Running moments held constant, no state changes. Used after a large
  // moment-only forward pass.
  kTrainRunning,
  // Running moments, no state changes, no backward pass allowed.
  kEval,
};

inline constexpr std::size_t kSingleStream = std::numeric_limits<std::size_t>::max();

struct NormContext {
  NormMode mode = NormMode::kTrain;
  // Rows [0, off_rows) are the off-policy stream; kSingleStream means the
  // whole batch is one stream.
  std::size_t off_rows = kSingleStream;
};

// How the moments applied to rows [begin, end) were produced.
struct MomentBlock {
  std::size_t begin = 0;
  std::size_t end = 0;
  // Rows [begin, split) belong to the off-policy stream.
  std::size_t split = 0;
  // True when the moments do not depend on this batch (running moments).
  bool constant = false;
  double weight_off = 0.0;  // d mean / d x for off-stream rows
  double weight_on = 0.0;   // d mean / d x for on-stream rows
  double var_divisor = 0.0;
  bool literal = false;
  Vec center;  // uniform block mean the variance is taken around
  Vec mean_off;
  Vec mean_on;
  std::shared_ptr<const Moments> moments;
};

struct NormCache {
  NormKind kind = NormKind::kNone;
  NormMode mode = NormMode::kTrain;
  bool mean_only = false;
  bool affine = true;
  double epsilon = 0.0;
  Vec scale;
  Mat input;
  Mat normalized;  // pre-affine output
  std::vector<MomentBlock> blocks;  // batch-statistics kinds
  Vec row_inv_std;                  // layer kind
};

struct NormGrads {
  Mat input;
  Vec scale;
  Vec shift;
};

// Full normalization forward for any kind and stream layout. Fills `cache`
// for a later norm_backward when non-null.
Mat norm_forward(const Mat& x, const NormSpec& spec, NormState& state,
                 const NormContext& ctx, NormCache* cache);

// Exact gradients, including the dependence of batch moments on the inputs.
// Throws ContractViolation for an eval-mode cache or a shape mismatch.
NormGrads norm_backward(const NormCache& cache, const Mat& grad_out);

// True when every row of the cached batch was normalized with one Moments
// object (the cross-normalization invariant).
bool uses_shared_moments(const NormCache& cache);

struct DualOutput {
  Mat off;
  Mat on;
  NormCache cache;
};

// Normalizes both streams with the same moments (cross kinds) in one pass.
DualOutput cross_forward_dual(const Mat& f_off, const Mat& f_on, const NormSpec& spec,
                              NormState& state, NormMode mode);

// A normalization attachment owning its spec and state.
class NormLayer {
 public:
  NormLayer(NormSpec spec, std::size_t width);

  Mat forward(const Mat& x, const NormContext& ctx, NormCache* cache) {
    return norm_forward(x, spec_, state_, ctx, cache);
  }

  const NormSpec& spec() const { return spec_; }
  const NormState& state() const { return state_; }
  NormState& mutable_state() { return state_; }

 private:
  NormSpec spec_;
  NormState state_;
};

}  // namespace crossnorm
