#pragma once

#include "lasa/update.hpp"

#include <algorithm>
#include <vector>

namespace lasa {

/// Positive direction purity: 0.5 * (1 + sum sgn(x_j) / sum |sgn(x_j)|).
/// Zeros carry sgn 0 and drop out of both sums; an all-zero vector is 0.5.
template <typename Derived>
double pdp(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) throw Error("pdp of an empty vector");
  Eigen::Index positive = 0;
  Eigen::Index negative = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) > 0) {
      ++positive;
    } else if (x(j) < 0) {
      ++negative;
    }
  }
  const auto nonzero = positive + negative;
  if (nonzero == 0) return 0.5;
  return 0.5 * (1.0 + static_cast<double>(positive - negative) / static_cast<double>(nonzero));
}

/// Median; even lengths average the two middle order statistics.
template <typename Derived>
double median(const Eigen::DenseBase<Derived>& values) {
  const auto n = static_cast<std::size_t>(values.size());
  if (n == 0) throw Error("median of an empty set");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(values(static_cast<Eigen::Index>(i)));
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Population standard deviation (divide by n), two-pass.
template <typename Derived>
double population_stddev(const Eigen::DenseBase<Derived>& values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() == 0) throw Error("stddev of an empty set");
  const double mean = values.derived().template cast<double>().sum() / n;
  return std::sqrt((values.derived().template cast<double>().array() - mean).square().sum() / n);
}

/// Median-based z-scores (x_i - Med(X)) / sigma. sigma == 0 gives all zeros.
template <typename Derived>
Vector mz_scores(const Eigen::MatrixBase<Derived>& values) {
  const auto n = values.size();
  if (n == 0) throw Error("mz_scores of an empty set");
  const double sigma = population_stddev(values);
  if (!(sigma > 0.0)) return Vector::Zero(n);
  const double med = median(values);
  return (values.derived().template cast<double>().array() - med).matrix() / sigma;
}

/// Per-coordinate median across clients.
LayeredUpdate coordinate_median(const UpdateBatch& batch);

/// Per (client, layer) magnitude and direction metrics.
struct LayerMetricTable {
  Matrix magnitude;  ///< n x L, L2 norm of each layer slice
  Matrix direction;  ///< n x L, pdp of each layer slice, in [0, 1]
};

LayerMetricTable metric_table(const UpdateBatch& batch);

}  // namespace lasa
