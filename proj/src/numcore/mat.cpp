#include "crossnorm/numcore/mat.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

std::string shape(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> map(const Mat& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

Eigen::Map<RowMajor> map(Mat& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw ConfigError("Mat: data length " + std::to_string(data_.size()) +
                      " does not match " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ConfigError("Mat::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Mat(r, c, std::move(data));
}

Mat Mat::row_vector(std::span<const double> values) {
  return Mat(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("mat_mul: shape mismatch " + shape(a) + " * " + shape(b));
  }
  Mat out(a.rows(), b.cols());
  if (a.cols() > 0) map(out).noalias() = map(a) * map(b);
  return out;
}

Mat mat_mul_at_b(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw ConfigError("mat_mul_at_b: shape mismatch " + shape(a) + "^T * " + shape(b));
  }
  Mat out(a.cols(), b.cols());
  if (a.rows() > 0) map(out).noalias() = map(a).transpose() * map(b);
  return out;
}

Mat mat_mul_a_bt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("mat_mul_a_bt: shape mismatch " + shape(a) + " * " + shape(b) + "^T");
  }
  Mat out(a.rows(), b.rows());
  if (a.cols() > 0) map(out).noalias() = map(a) * map(b).transpose();
  return out;
}

Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Mat vstack(const Mat& top, const Mat& bottom) {
  if (top.cols() != bottom.cols()) {
    throw ConfigError("vstack: column mismatch " + shape(top) + " / " + shape(bottom));
  }
  std::vector<double> data(top.data().begin(), top.data().end());
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Mat(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

Mat hstack(const Mat& left, const Mat& right) {
  if (left.rows() != right.rows()) {
    throw ConfigError("hstack: row mismatch " + shape(left) + " | " + shape(right));
  }
  Mat out(left.rows(), left.cols() + right.cols());
  for (std::size_t i = 0; i < left.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(left.row(i).begin(), left.row(i).end(), dst.begin());
    std::copy(right.row(i).begin(), right.row(i).end(), dst.begin() + left.cols());
  }
  return out;
}

Mat row_slice(const Mat& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw ConfigError("row_slice: range [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ") out of " + shape(a));
  }
  const auto first = a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols());
  const auto last = a.data().begin() + static_cast<std::ptrdiff_t>(end * a.cols());
  return Mat(end - begin, a.cols(), std::vector<double>(first, last));
}

Vec col_sums(const Mat& a) {
  Vec out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j];
  }
  return out;
}

Vec col_means(const Mat& a) {
  Vec out = col_sums(a);
  if (a.rows() > 0) {
    for (double& v : out) v /= static_cast<double>(a.rows());
  }
  return out;
}

void add_row_vector(Mat& a, std::span<const double> v) {
  if (v.size() != a.cols()) throw ConfigError("add_row_vector: width mismatch");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += v[j];
  }
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError("max_abs_diff: shape mismatch " + shape(a) + " vs " + shape(b));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace crossnorm
