#pragma once

// Randomized normalization checks behind the norm-test experiment.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace crossnorm {

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;
  double tolerance = 0.0;

  bool passed() const { return cases > 0 && failures == 0; }
};

// Cross normalization at alpha = 0.5 against Bessel-corrected batch
// normalization of the concatenated streams, on random dual batches. The
// tolerance is 0: both sum in the same order.
SuiteResult cross_batch_equivalence(std::size_t cases, std::uint64_t seed);

// Central-difference checks (h = 1e-6) on random 4x3 batches for every layer
// type, `cases` draws each.
std::vector<SuiteResult> gradient_suite(std::size_t cases, std::uint64_t seed,
                                        double tolerance = 1e-5);

// Mean-only normalization output is unchanged when every feature is shifted
// by a constant.
SuiteResult mean_only_shift_invariance(std::size_t cases, std::uint64_t seed);

}  // namespace crossnorm
