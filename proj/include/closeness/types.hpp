#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace closeness {

/// Row-major point set: one point per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Squared Euclidean distance between rows i and j of a point set.
inline double squared_distance(const Matrix& points, std::size_t i, std::size_t j) {
  double s = 0.0;
  const auto cols = points.cols();
  const double* a = points.data() + static_cast<Eigen::Index>(i) * cols;
  const double* b = points.data() + static_cast<Eigen::Index>(j) * cols;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

}  // namespace closeness
