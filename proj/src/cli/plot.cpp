#include "crossnorm/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 90.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  // Degenerate ranges are widened so a constant series sits mid-plot.
  void pad() {
    if (empty()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12 * std::max(1.0, std::abs(lo))) {
      lo -= 1.0;
      hi += 1.0;
    }
  }
  double map(double v, double out_lo, double out_hi) const {
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo);
  }
};

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace

Vec smooth(std::span<const double> values, std::size_t window) {
  if (window == 0) throw ConfigError("smooth: window must be positive");
  const std::size_t half = window / 2;
  Vec out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t begin = i >= half ? i - half : 0;
    const std::size_t end = std::min(values.size(), i + half + 1);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t j = begin; j < end; ++j) {
      if (std::isfinite(values[j])) {
        total += values[j];
        ++count;
      }
    }
    out[i] = count > 0 ? total / static_cast<double>(count)
                       : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::string render_curves(const std::vector<Curve>& curves, const std::string& title,
                          const std::string& y_label) {
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::vector<Vec> means;
  std::vector<Vec> bands;
  Range xr;
  Range yr;
  for (const Curve& c : curves) {
    means.push_back(smooth(c.mean));
    bands.push_back(smooth(c.half_std));
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      xr.add(c.x[i]);
      const double b = std::isfinite(bands.back()[i]) ? bands.back()[i] : 0.0;
      yr.add(means.back()[i] - b);
      yr.add(means.back()[i] + b);
    }
  }
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return xr.map(x, kLeft, kLeft + plot_w); };
  auto py = [&](double y) { return yr.map(y, kTop + plot_h, kTop); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";

  // Axes and ticks.
  svg << "<g stroke=\"#444\">\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\"/>\n";
  svg << "</g>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    svg << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(kTop + plot_h + 15)
        << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
    svg << "<text x=\"" << num(kLeft - 5) << "\" y=\"" << num(py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kTop + plot_h + 32
      << "\" text-anchor=\"middle\">step</text>\n";
  svg << "<text transform=\"translate(16," << kTop + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % std::size(kPalette)];
    const Curve& curve = curves[c];
    std::string upper;
    std::string lower;
    std::string line;
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
      const double m = means[c][i];
      if (!std::isfinite(m) || !std::isfinite(curve.x[i])) continue;
      const double b = std::isfinite(bands[c][i]) ? bands[c][i] : 0.0;
      const std::string x = num(px(curve.x[i]));
      line += x + "," + num(py(m)) + " ";
      upper += x + "," + num(py(m + b)) + " ";
      lower = x + "," + num(py(m - b)) + " " + lower;
    }
    svg << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" points=\""
        << upper << lower << "\"/>\n";
    svg << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << line << "\"/>\n";
  }

  // Legend below the plot.
  double lx = kLeft;
  const double ly = kTop + plot_h + 52;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % std::size(kPalette)];
    svg << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 8) << "\" width=\"12\" height=\"8\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"" << num(lx + 16) << "\" y=\"" << num(ly) << "\">"
        << escape(curves[c].label) << "</text>\n";
    lx += 24 + 7.0 * static_cast<double>(curves[c].label.size());
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << ly + 18
      << "\" fill=\"#555\">centered moving average, window " << kSmoothingWindow
      << " intervals; band: mean +- half standard deviation across seeds</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

Rgb heat_color(double v, double cap) {
  const Rgb low{59, 76, 192};
  const Rgb mid{247, 247, 247};
  const Rgb high{180, 4, 38};
  const double top = std::log10(cap);
  if (std::isnan(v)) v = top;
  v = std::clamp(v, kLogFloor, top);
  auto mix = [](Rgb a, Rgb b, double t) {
    return Rgb{static_cast<int>(std::lround(a.r + (b.r - a.r) * t)),
               static_cast<int>(std::lround(a.g + (b.g - a.g) * t)),
               static_cast<int>(std::lround(a.b + (b.b - a.b) * t))};
  };
  if (v <= 0.0) return mix(low, mid, (v - kLogFloor) / (0.0 - kLogFloor));
  return mix(mid, high, v / top);
}

std::string render_heatmap(const SweepGrid& grid, const std::string& title, double cap) {
  const std::size_t rows = grid.alphas.size();
  const std::size_t cols = grid.betas.size();
  if (rows == 0 || cols == 0) throw ContractViolation("render_heatmap: empty grid");
  const double cell = std::clamp(420.0 / static_cast<double>(std::max(rows, cols)), 4.0, 60.0);
  const double left = 60.0;
  const double top = 40.0;
  const double grid_w = cell * static_cast<double>(cols);
  const double grid_h = cell * static_cast<double>(rows);
  const double width = left + grid_w + 110.0;
  const double height = top + grid_h + 50.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";

  // Alpha grows upward, beta to the right.
  auto cell_x = [&](std::size_t j) { return left + cell * static_cast<double>(j); };
  auto cell_y = [&](std::size_t i) { return top + cell * static_cast<double>(rows - 1 - i); };
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = grid.log10_vbar(i, j);
      svg << "<rect class=\"cell\" x=\"" << num(cell_x(j)) << "\" y=\"" << num(cell_y(i))
          << "\" width=\"" << num(cell) << "\" height=\"" << num(cell) << "\" fill=\""
          << hex(heat_color(v, cap)) << "\"><title>alpha=" << tick_label(grid.alphas[i])
          << " beta=" << tick_label(grid.betas[j]) << " log10|V|=" << tick_label(v)
          << (grid.cell_diverged(i, j) ? " diverged" : "") << "</title></rect>\n";
    }
  }

  // Axis labels at the ends and middle of each axis.
  for (std::size_t j : {std::size_t{0}, cols / 2, cols - 1}) {
    svg << "<text x=\"" << num(cell_x(j) + cell / 2) << "\" y=\"" << num(top + grid_h + 14)
        << "\" text-anchor=\"middle\">" << tick_label(grid.betas[j]) << "</text>\n";
  }
  for (std::size_t i : {std::size_t{0}, rows / 2, rows - 1}) {
    svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(cell_y(i) + cell / 2 + 4)
        << "\" text-anchor=\"end\">" << tick_label(grid.alphas[i]) << "</text>\n";
  }
  svg << "<text x=\"" << num(left + grid_w / 2) << "\" y=\"" << num(top + grid_h + 32)
      << "\" text-anchor=\"middle\">beta</text>\n";
  svg << "<text transform=\"translate(18," << num(top + grid_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">alpha</text>\n";

  // Red cross at the un-normalized point, interpolated between cell centres.
  auto locate = [](const Vec& axis, double v, double& pos) {
    if (axis.size() == 1) {
      if (axis[0] != v) return false;
      pos = 0.0;
      return true;
    }
    const double lo = std::min(axis.front(), axis.back());
    const double hi = std::max(axis.front(), axis.back());
    if (v < lo || v > hi) return false;
    pos = (v - axis.front()) / (axis.back() - axis.front()) * static_cast<double>(axis.size() - 1);
    return true;
  };
  double pi = 0.0;
  double pj = 0.0;
  if (locate(grid.alphas, 0.0, pi) && locate(grid.betas, 0.0, pj)) {
    const double cx = left + cell * (pj + 0.5);
    const double cy = top + cell * (static_cast<double>(rows - 1) - pi + 0.5);
    const double r = std::max(3.0, cell * 0.4);
    svg << "<g class=\"origin\" stroke=\"red\" stroke-width=\"2\">"
        << "<line x1=\"" << num(cx - r) << "\" y1=\"" << num(cy - r) << "\" x2=\"" << num(cx + r)
        << "\" y2=\"" << num(cy + r) << "\"/><line x1=\"" << num(cx - r) << "\" y1=\""
        << num(cy + r) << "\" x2=\"" << num(cx + r) << "\" y2=\"" << num(cy - r)
        << "\"/></g>\n";
  }

  // Color bar.
  const double bar_x = left + grid_w + 30.0;
  const double top_value = std::log10(cap);
  const int steps = 40;
  for (int s = 0; s < steps; ++s) {
    const double v = top_value - (top_value - kLogFloor) * (s + 0.5) / steps;
    svg << "<rect x=\"" << num(bar_x) << "\" y=\"" << num(top + grid_h * s / steps)
        << "\" width=\"14\" height=\"" << num(grid_h / steps + 0.5) << "\" fill=\""
        << hex(heat_color(v, cap)) << "\"/>\n";
  }
  for (double v : {top_value, 0.0, kLogFloor}) {
    const double y = top + grid_h * (top_value - v) / (top_value - kLogFloor);
    svg << "<text x=\"" << num(bar_x + 18) << "\" y=\"" << num(y + 4) << "\">" << tick_label(v)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(bar_x) << "\" y=\"" << num(top - 6) << "\">log10 |V|</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace crossnorm
