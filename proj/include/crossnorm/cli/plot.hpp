#pragma once

// Self-contained SVG rendering of learning curves and phase diagrams.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crossnorm/linlab/linlab.hpp"
#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

inline constexpr std::size_t kSmoothingWindow = 5;

// Centered moving average; windows are truncated at the ends and skip
// non-finite values (NaN when a window holds none).
Vec smooth(std::span<const double> values, std::size_t window = kSmoothingWindow);

struct Curve {
  std::string label;
  Vec x;
  Vec mean;
  Vec half_std;
};

// Smoothed mean with a shaded +-half_std band per curve.
std::string render_curves(const std::vector<Curve>& curves, const std::string& title,
                          const std::string& y_label);

// RGB of the three-stop ramp over [kLogFloor, log10(cap)] with white at 0.
struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
};
Rgb heat_color(double log10_value, double cap = kDivergenceCap);

// One cell per (alpha, beta); a red cross marks alpha = beta = 0 when it lies
// inside the grid.
std::string render_heatmap(const SweepGrid& grid, const std::string& title,
                           double cap = kDivergenceCap);

}  // namespace crossnorm
