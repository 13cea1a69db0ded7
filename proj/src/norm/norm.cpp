#include "crossnorm/norm/norm.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

bool is_cross(NormKind kind) {
  return kind == NormKind::kCross || kind == NormKind::kCrossRenorm;
}

double bessel_divisor(std::size_t rows) {
  return rows > 1 ? 1.0 / static_cast<double>(rows - 1) : 1.0;
}

// Weighted per-column sum over rows [begin, end): rows before `split` use
// weight_off, the rest weight_on.
Vec weighted_col_sum(const Mat& x, std::size_t begin, std::size_t end, std::size_t split,
                     double weight_off, double weight_on) {
  Vec out(x.cols(), 0.0);
  for (std::size_t i = begin; i < end; ++i) {
    const double w = i < split ? weight_off : weight_on;
    const auto r = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += w * r[j];
  }
  return out;
}

// Moments of rows [begin, end) that depend on the batch. The mean uses the
// stream weights, the variance is taken about the uniform block mean.
MomentBlock batch_block(const Mat& x, std::size_t begin, std::size_t end, std::size_t split,
                        double weight_off, double weight_on, double var_divisor,
                        bool literal) {
  const std::size_t rows = end - begin;
  if (rows == 0) throw ContractViolation("normalization: empty batch");
  MomentBlock block;
  block.begin = begin;
  block.end = end;
  block.split = split;
  block.weight_off = weight_off;
  block.weight_on = weight_on;
  block.var_divisor = var_divisor;
  block.literal = literal;

  const double uniform = 1.0 / static_cast<double>(rows);
  auto moments = std::make_shared<Moments>();
  moments->mean = weighted_col_sum(x, begin, end, split, weight_off, weight_on);
  block.center = weight_off == uniform && weight_on == uniform
                     ? moments->mean
                     : weighted_col_sum(x, begin, end, split, uniform, uniform);

  const std::size_t width = x.cols();
  moments->var.assign(width, 0.0);
  if (literal) {
    const std::size_t n_off = split - begin;
    const std::size_t n_on = end - split;
    if (n_off == 0 || n_on == 0) {
      throw ContractViolation("literal cross variance needs two non-empty streams");
    }
    block.mean_off = weighted_col_sum(x, begin, split, split, 1.0 / static_cast<double>(n_off), 0.0);
    block.mean_on = weighted_col_sum(x, split, end, split, 0.0, 1.0 / static_cast<double>(n_on));
    for (std::size_t j = 0; j < width; ++j) {
      const double d_on = block.mean_on[j] - block.center[j];
      const double d_off = block.mean_off[j] - block.center[j];
      moments->var[j] = (d_on * d_on + d_off * d_off) * var_divisor;
    }
  } else {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = x.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        const double d = r[j] - block.center[j];
        moments->var[j] += d * d;
      }
    }
    for (double& v : moments->var) v *= var_divisor;
  }
  block.moments = std::move(moments);
  return block;
}

MomentBlock constant_block(std::size_t begin, std::size_t end, const NormState& state) {
  MomentBlock block;
  block.begin = begin;
  block.end = end;
  block.split = end;
  block.constant = true;
  block.moments = std::make_shared<Moments>(Moments{state.running_mean, state.running_var});
  return block;
}

// Writes the normalized (pre-affine) rows of `block` into `normalized`.
void normalize_rows(const Mat& x, const MomentBlock& block, bool mean_only, double epsilon,
                    Mat& normalized) {
  const Moments& m = *block.moments;
  const std::size_t width = x.cols();
  Vec inv_std(width, 1.0);
  if (!mean_only) {
    for (std::size_t j = 0; j < width; ++j) {
      if (m.var[j] < 0.0) throw ContractViolation("normalization: negative variance");
      inv_std[j] = 1.0 / std::sqrt(m.var[j] + epsilon);
    }
  }
  for (std::size_t i = block.begin; i < block.end; ++i) {
    const auto in = x.row(i);
    auto out = normalized.row(i);
    for (std::size_t j = 0; j < width; ++j) out[j] = (in[j] - m.mean[j]) * inv_std[j];
  }
}

Mat apply_affine(const Mat& normalized, bool affine, const NormState& state) {
  if (!affine) return normalized;
  Mat y = normalized;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) r[j] = state.scale[j] * r[j] + state.shift[j];
  }
  return y;
}

void check_width(const Mat& x, const NormState& state) {
  if (x.cols() != state.width()) {
    throw ConfigError("normalization: feature width " + std::to_string(x.cols()) +
                      " does not match layer width " + std::to_string(state.width()));
  }
}

// Row-wise layer normalization; fills row_inv_std.
Mat layer_normalized(const Mat& x, bool mean_only, double epsilon, Vec& row_inv_std) {
  const std::size_t width = x.cols();
  Mat out(x.rows(), width);
  row_inv_std.assign(x.rows(), 1.0);
  const double inv_width = 1.0 / static_cast<double>(width);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean *= inv_width;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var *= inv_width;
    const double inv_std = mean_only ? 1.0 : 1.0 / std::sqrt(var + epsilon);
    row_inv_std[i] = inv_std;
    auto o = out.row(i);
    for (std::size_t j = 0; j < width; ++j) o[j] = (in[j] - mean) * inv_std;
  }
  return out;
}

}  // namespace

const char* to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kNone: return "none";
    case NormKind::kBatch: return "batch";
    case NormKind::kLayer: return "layer";
    case NormKind::kCross: return "cross";
    case NormKind::kCrossRenorm: return "cross_renorm";
  }
  return "none";
}

NormKind norm_kind_from_string(const std::string& name) {
  if (name == "none") return NormKind::kNone;
  if (name == "batch") return NormKind::kBatch;
  if (name == "layer") return NormKind::kLayer;
  if (name == "cross") return NormKind::kCross;
  if (name == "cross_renorm") return NormKind::kCrossRenorm;
  throw ConfigError("unknown normalization kind '" + name + "'");
}

void NormSpec::validate() const {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ConfigError("norm momentum must lie in [0, 1]");
  }
  if (!(epsilon > 0.0)) throw ConfigError("norm epsilon must be positive");
  if (is_cross(kind) && !(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("cross normalization needs alpha in [0, 1]");
  }
}

NormState NormState::init(std::size_t width) {
  NormState state;
  state.running_mean.assign(width, 0.0);
  state.running_var.assign(width, 1.0);
  state.scale.assign(width, 1.0);
  state.shift.assign(width, 0.0);
  return state;
}

NormLayer::NormLayer(NormSpec spec, std::size_t width)
    : spec_(spec), state_(NormState::init(width)) {
  spec_.validate();
}

Moments batch_moments(const Mat& x) {
  if (x.rows() == 0) throw ContractViolation("batch_moments: empty batch");
  const double w = 1.0 / static_cast<double>(x.rows());
  MomentBlock block = batch_block(x, 0, x.rows(), x.rows(), w, w, w, false);
  return *block.moments;
}

Moments cross_moments(const Mat& f_off, const Mat& f_on, double alpha, bool literal) {
  if (f_off.cols() != f_on.cols()) {
    throw ConfigError("cross_moments: feature widths differ (" + std::to_string(f_off.cols()) +
                      " vs " + std::to_string(f_on.cols()) + ")");
  }
  if (f_off.rows() != f_on.rows() || f_off.rows() == 0) {
    throw ContractViolation("cross_moments: streams need equal, non-zero row counts");
  }
  const Mat x = vstack(f_off, f_on);
  const std::size_t n = f_off.rows();
  MomentBlock block = batch_block(x, 0, x.rows(), n, alpha / static_cast<double>(n),
                                  (1.0 - alpha) / static_cast<double>(n),
                                  bessel_divisor(x.rows()), literal);
  return *block.moments;
}

Mat normalize_apply(const Mat& x, const Moments& moments, const NormSpec& spec,
                    const NormState& state) {
  if (moments.mean.size() != x.cols() || moments.var.size() != x.cols()) {
    throw ConfigError("normalize_apply: moment width does not match features");
  }
  if (spec.affine) check_width(x, state);
  MomentBlock block;
  block.begin = 0;
  block.end = x.rows();
  block.moments = std::make_shared<Moments>(moments);
  Mat normalized(x.rows(), x.cols());
  normalize_rows(x, block, spec.mean_only, spec.epsilon, normalized);
  return apply_affine(normalized, spec.affine, state);
}

void running_update(NormState& state, const Moments& batch, double rho) {
  if (batch.mean.size() != state.running_mean.size() ||
      batch.var.size() != state.running_var.size()) {
    throw ConfigError("running_update: moment width does not match state");
  }
  for (std::size_t j = 0; j < batch.mean.size(); ++j) {
    state.running_mean[j] = (1.0 - rho) * state.running_mean[j] + rho * batch.mean[j];
    state.running_var[j] = (1.0 - rho) * state.running_var[j] + rho * batch.var[j];
  }
  ++state.step;
}

Mat layer_norm(const Mat& x, const NormSpec& spec, const NormState& state) {
  if (spec.affine) check_width(x, state);
  Vec inv_std;
  return apply_affine(layer_normalized(x, spec.mean_only, spec.epsilon, inv_std), spec.affine,
                      state);
}

Mat norm_forward(const Mat& x, const NormSpec& spec, NormState& state, const NormContext& ctx,
                 NormCache* cache) {
  NormCache local;
  NormCache& c = cache != nullptr ? *cache : local;
  c = NormCache{};
  c.kind = spec.kind;
  c.mode = ctx.mode;
  c.mean_only = spec.mean_only;
  c.affine = spec.affine;
  c.epsilon = spec.epsilon;

  if (spec.kind == NormKind::kNone) return x;
  check_width(x, state);
  c.scale = state.scale;
  if (cache != nullptr) c.input = x;

  if (spec.kind == NormKind::kLayer) {
    c.normalized = layer_normalized(x, spec.mean_only, spec.epsilon, c.row_inv_std);
    return apply_affine(c.normalized, spec.affine, state);
  }

  const std::size_t rows = x.rows();
  if (rows == 0) throw ContractViolation("normalization: empty batch");
  const std::size_t off_rows =
      ctx.off_rows == 0 || ctx.off_rows >= rows ? rows : ctx.off_rows;
  const bool dual = off_rows > 0 && off_rows < rows;

  const bool running_mode = ctx.mode == NormMode::kEval || ctx.mode == NormMode::kTrainRunning;
  if (running_mode) {
    if (state.step == 0) {
      throw ContractViolation(std::string("normalization: ") +
                              (ctx.mode == NormMode::kEval ? "eval" : "running-moment") +
                              " mode before any running statistics exist");
    }
    c.blocks.push_back(constant_block(0, rows, state));
  } else if (spec.kind == NormKind::kBatch) {
    // Each stream gets its own batch moments.
    const double unbiased = spec.unbiased_variance;
    auto stream = [&](std::size_t b, std::size_t e) {
      const double w = 1.0 / static_cast<double>(e - b);
      return batch_block(x, b, e, e, w, w, unbiased ? bessel_divisor(e - b) : w, false);
    };
    c.blocks.push_back(stream(0, off_rows));
    if (dual) c.blocks.push_back(stream(off_rows, rows));
  } else {
    MomentBlock block;
    if (dual) {
      const std::size_t n_on = rows - off_rows;
      if (n_on != off_rows) {
        throw ContractViolation("cross normalization needs equal off/on batch sizes (" +
                                std::to_string(off_rows) + " vs " + std::to_string(n_on) + ")");
      }
      block = batch_block(x, 0, rows, off_rows, spec.alpha / static_cast<double>(off_rows),
                          (1.0 - spec.alpha) / static_cast<double>(n_on), bessel_divisor(rows),
                          spec.literal_variance);
    } else {
      // A single stream is its own mixture.
      const double w = 1.0 / static_cast<double>(rows);
      block = batch_block(x, 0, rows, rows, w, w, bessel_divisor(rows), false);
    }
    const bool switched = spec.kind == NormKind::kCrossRenorm &&
                          state.step >= spec.renorm_switch_step;
    if (switched) {
      // Normalize with the running moments from before this batch; the batch
      // moments only feed the running estimate.
      MomentBlock running = constant_block(0, rows, state);
      if (ctx.mode == NormMode::kTrain) running_update(state, *block.moments, spec.momentum);
      c.blocks.push_back(std::move(running));
    } else {
      c.blocks.push_back(std::move(block));
    }
  }

  if (ctx.mode == NormMode::kTrain && !c.blocks.front().constant) {
    running_update(state, *c.blocks.front().moments, spec.momentum);
  }

  c.normalized = Mat(rows, x.cols());
  for (const MomentBlock& block : c.blocks) {
    normalize_rows(x, block, spec.mean_only, spec.epsilon, c.normalized);
  }
  return apply_affine(c.normalized, spec.affine, state);
}

NormGrads norm_backward(const NormCache& cache, const Mat& grad_out) {
  if (cache.mode == NormMode::kEval) {
    throw ContractViolation("norm_backward: eval-mode cache has no gradient path");
  }
  NormGrads grads;
  if (cache.kind == NormKind::kNone) {
    grads.input = grad_out;
    return grads;
  }
  const Mat& xhat = cache.normalized;
  if (grad_out.rows() != xhat.rows() || grad_out.cols() != xhat.cols()) {
    throw ContractViolation("norm_backward: gradient shape does not match cache");
  }
  const std::size_t rows = xhat.rows();
  const std::size_t width = xhat.cols();

  grads.scale.assign(width, 0.0);
  grads.shift.assign(width, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto dy = grad_out.row(i);
    const auto xh = xhat.row(i);
    for (std::size_t j = 0; j < width; ++j) {
      grads.scale[j] += dy[j] * xh[j];
      grads.shift[j] += dy[j];
    }
  }
  if (!cache.affine) {
    grads.scale.clear();
    grads.shift.clear();
  }

  // g = d loss / d xhat.
  Mat g = grad_out;
  if (cache.affine) {
    for (std::size_t i = 0; i < rows; ++i) {
      auto r = g.row(i);
      for (std::size_t j = 0; j < width; ++j) r[j] *= cache.scale[j];
    }
  }

  grads.input = Mat(rows, width);
  if (cache.kind == NormKind::kLayer) {
    const double inv_width = 1.0 / static_cast<double>(width);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto gi = g.row(i);
      const auto xh = xhat.row(i);
      double g_mean = 0.0;
      double gx_mean = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        g_mean += gi[j];
        gx_mean += gi[j] * xh[j];
      }
      g_mean *= inv_width;
      gx_mean *= inv_width;
      auto dx = grads.input.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        dx[j] = cache.mean_only ? gi[j] - g_mean
                                : cache.row_inv_std[i] * (gi[j] - g_mean - xh[j] * gx_mean);
      }
    }
    return grads;
  }

  for (const MomentBlock& block : cache.blocks) {
    const Moments& m = *block.moments;
    Vec inv_std(width, 1.0);
    if (!cache.mean_only) {
      for (std::size_t j = 0; j < width; ++j) inv_std[j] = 1.0 / std::sqrt(m.var[j] + cache.epsilon);
    }
    if (block.constant) {
      for (std::size_t i = block.begin; i < block.end; ++i) {
        const auto gi = g.row(i);
        auto dx = grads.input.row(i);
        for (std::size_t j = 0; j < width; ++j) dx[j] = gi[j] * inv_std[j];
      }
      continue;
    }

    // Sums over the block of g and g * xhat.
    Vec sum_g(width, 0.0);
    Vec sum_gx(width, 0.0);
    for (std::size_t i = block.begin; i < block.end; ++i) {
      const auto gi = g.row(i);
      const auto xh = xhat.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        sum_g[j] += gi[j];
        sum_gx[j] += gi[j] * xh[j];
      }
    }
    // d loss / d mean and d loss / d var.
    Vec d_mean(width), d_var(width, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
      d_mean[j] = -sum_g[j] * inv_std[j];
      if (!cache.mean_only) d_var[j] = -0.5 * sum_gx[j] * inv_std[j] * inv_std[j];
    }

    const std::size_t n = block.end - block.begin;
    const double uniform = 1.0 / static_cast<double>(n);
    const double q = block.var_divisor;
    Vec dev_sum(width, 0.0);  // sum over the block of (x - center)
    if (!cache.mean_only && !block.literal) {
      for (std::size_t i = block.begin; i < block.end; ++i) {
        const auto xi = cache.input.row(i);
        for (std::size_t j = 0; j < width; ++j) dev_sum[j] += xi[j] - block.center[j];
      }
    }

    for (std::size_t i = block.begin; i < block.end; ++i) {
      const bool off = i < block.split;
      const double w = off ? block.weight_off : block.weight_on;
      const auto gi = g.row(i);
      auto dx = grads.input.row(i);
      for (std::size_t j = 0; j < width; ++j) {
        double v = gi[j] * inv_std[j] + w * d_mean[j];
        if (!cache.mean_only) {
          double dvar_dx;
          if (block.literal) {
            const std::size_t n_off = block.split - block.begin;
            const std::size_t n_on = block.end - block.split;
            const double ind_on = off ? 0.0 : 1.0 / static_cast<double>(n_on);
            const double ind_off = off ? 1.0 / static_cast<double>(n_off) : 0.0;
            dvar_dx = 2.0 * q *
                      ((block.mean_on[j] - block.center[j]) * (ind_on - uniform) +
                       (block.mean_off[j] - block.center[j]) * (ind_off - uniform));
          } else {
            dvar_dx = 2.0 * q * (cache.input(i, j) - block.center[j] - uniform * dev_sum[j]);
          }
          v += d_var[j] * dvar_dx;
        }
        dx[j] = v;
      }
    }
  }
  return grads;
}

bool uses_shared_moments(const NormCache& cache) {
  if (cache.blocks.empty()) return false;
  const Moments* first = cache.blocks.front().moments.get();
  for (const MomentBlock& block : cache.blocks) {
    if (block.moments.get() != first) return false;
  }
  return cache.blocks.front().begin == 0 &&
         cache.blocks.back().end == cache.normalized.rows();
}

DualOutput cross_forward_dual(const Mat& f_off, const Mat& f_on, const NormSpec& spec,
                              NormState& state, NormMode mode) {
  if (f_off.cols() != f_on.cols()) {
    throw ConfigError("cross_forward_dual: feature widths differ");
  }
  DualOutput out;
  const Mat y = norm_forward(vstack(f_off, f_on), spec, state,
                             NormContext{mode, f_off.rows()}, &out.cache);
  out.off = row_slice(y, 0, f_off.rows());
  out.on = row_slice(y, f_off.rows(), y.rows());
  return out;
}

}  // namespace crossnorm
