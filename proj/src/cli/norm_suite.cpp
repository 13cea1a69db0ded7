#include "crossnorm/cli/norm_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "crossnorm/norm/norm.hpp"
#include "crossnorm/numcore/gradcheck.hpp"
#include "crossnorm/numcore/mlp.hpp"

namespace crossnorm {

namespace {

constexpr std::size_t kRows = 4;
constexpr std::size_t kWidth = 3;

Mat normal_mat(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0,
               double offset = 0.0) {
  std::normal_distribution<double> normal(offset, scale);
  Mat m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

NormState random_state(std::mt19937_64& rng, std::size_t width) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::normal_distribution<double> n(0.0, 1.0);
  NormState s = NormState::init(width);
  for (std::size_t j = 0; j < width; ++j) {
    s.scale[j] = u(rng);
    s.shift[j] = n(rng);
    s.running_mean[j] = n(rng);
    s.running_var[j] = u(rng);
  }
  return s;
}

void record(SuiteResult& r, double error) {
  ++r.cases;
  r.worst = std::max(r.worst, error);
  if (!(error <= r.tolerance)) ++r.failures;
}

struct NormCase {
  std::string name;
  NormKind kind;
  bool mean_only = false;
  bool dual = false;
  bool after_switch = false;
};

struct DenseCase {
  std::string name;
  Activation activation;
};

}  // namespace

SuiteResult cross_batch_equivalence(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> rows(1, 32);
  std::uniform_int_distribution<std::size_t> width(1, 8);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  std::uniform_real_distribution<double> offset(-5.0, 5.0);
  SuiteResult r{"cross alpha=0.5 vs batch norm of the concatenation", 0, 0, 0.0, 0.0};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = rows(rng);
    const std::size_t k = width(rng);
    const Mat off = normal_mat(rng, n, k, scale(rng), offset(rng));
    const Mat on = normal_mat(rng, n, k, scale(rng), offset(rng));
    const NormState base = random_state(rng, k);

    NormSpec cross;
    cross.kind = NormKind::kCross;
    cross.alpha = 0.5;
    NormState cs = base;
    const DualOutput dual = cross_forward_dual(off, on, cross, cs, NormMode::kTrain);

    NormSpec batch;
    batch.kind = NormKind::kBatch;
    batch.unbiased_variance = true;
    NormState bs = base;
    const Mat y = norm_forward(vstack(off, on), batch, bs, NormContext{}, nullptr);
    record(r, max_abs_diff(vstack(dual.off, dual.on), y));
  }
  return r;
}

std::vector<SuiteResult> gradient_suite(std::size_t cases, std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> alpha(0.05, 0.95);
  std::vector<SuiteResult> out;

  const DenseCase dense[] = {{"affine", Activation::kIdentity},
                             {"relu", Activation::kRelu},
                             {"tanh", Activation::kTanh}};
  for (const DenseCase& d : dense) {
    SuiteResult r{d.name, 0, 0, 0.0, tolerance};
    for (std::size_t c = 0; c < cases; ++c) {
      DenseLayer layer;
      layer.weight = normal_mat(rng, kWidth, kWidth);
      const Mat b = normal_mat(rng, 1, kWidth);
      layer.bias.assign(b.data().begin(), b.data().end());
      layer.activation = d.activation;
      const Mlp net(std::nullopt, {layer});
      const Mat x = normal_mat(rng, kRows, kWidth);
      const Mat w = normal_mat(rng, kRows, kWidth);
      record(r, mlp_gradient_error(net, x, NormContext{}, w).worst());
    }
    out.push_back(r);
  }

  const NormCase norms[] = {
      {"batch", NormKind::kBatch},
      {"layer", NormKind::kLayer},
      {"cross", NormKind::kCross, false, true},
      {"cross renorm before switch", NormKind::kCrossRenorm, false, true, false},
      {"cross renorm after switch", NormKind::kCrossRenorm, false, true, true},
      {"cross mean-only", NormKind::kCross, true, true},
      {"batch mean-only", NormKind::kBatch, true, false},
  };
  for (const NormCase& nc : norms) {
    SuiteResult r{nc.name, 0, 0, 0.0, tolerance};
    for (std::size_t c = 0; c < cases; ++c) {
      NormSpec spec;
      spec.kind = nc.kind;
      spec.mean_only = nc.mean_only;
      if (nc.kind == NormKind::kCross || nc.kind == NormKind::kCrossRenorm) spec.alpha = alpha(rng);
      if (nc.kind == NormKind::kCrossRenorm) {
        spec.momentum = 0.01;
        spec.renorm_switch_step = 5;
      }
      NormState state = random_state(rng, kWidth);
      if (nc.after_switch) state.step = spec.renorm_switch_step;
      const NormContext ctx{NormMode::kTrain, nc.dual ? kRows / 2 : kSingleStream};
      const Mat x = normal_mat(rng, kRows, kWidth);
      const Mat w = normal_mat(rng, kRows, kWidth);
      record(r, norm_gradient_error(spec, state, x, ctx, w).worst());
    }
    out.push_back(r);
  }
  return out;
}

SuiteResult mean_only_shift_invariance(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> rows(2, 16);
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  SuiteResult r{"mean-only shift invariance", 0, 0, 0.0, 1e-12};
  for (std::size_t c = 0; c < cases; ++c) {
    const bool cross = c % 2 == 0;
    NormSpec spec;
    spec.kind = cross ? NormKind::kCross : NormKind::kBatch;
    spec.mean_only = true;
    spec.alpha = alpha(rng);
    const std::size_t n = rows(rng);
    const Mat x = normal_mat(rng, 2 * n, kWidth);
    Mat shifted = x;
    for (std::size_t j = 0; j < kWidth; ++j) {
      const double s = shift(rng);
      for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, j) += s;
    }
    const NormContext ctx{NormMode::kTrain, cross ? n : kSingleStream};
    NormState a = random_state(rng, kWidth);
    NormState b = a;
    record(r, max_abs_diff(norm_forward(x, spec, a, ctx, nullptr),
                           norm_forward(shifted, spec, b, ctx, nullptr)));
  }
  return r;
}

}  // namespace crossnorm
