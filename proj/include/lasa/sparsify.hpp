#pragma once

#include "lasa/update.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace lasa {

/// Fraction of coefficients zeroed, 1 - k/d, in [0, 1).
class SparsificationLevel {
 public:
  explicit SparsificationLevel(double level = 0.0);

  double value() const { return level_; }
  /// round((1 - level) * d), half up, clamped to [1, d].
  std::size_t keep_count(std::size_t dimension) const;

 private:
  double level_;
};

/// c_k = |Top_k(x)|^2 / |x|^2 and b_k = |Top_k(x) - x|^2 / |x|^2.
struct EnergySplit {
  double c_k = 0.0;
  double b_k = 0.0;
};

/// Indices of the k largest-magnitude entries, ascending. Equal magnitudes
/// at the boundary keep the lower index.
template <typename Derived>
std::vector<Eigen::Index> top_k_indices(const Eigen::MatrixBase<Derived>& x, std::size_t k) {
  const auto d = static_cast<std::size_t>(x.size());
  if (k > d) throw Error("top_k: k=" + std::to_string(k) + " exceeds dimension " + std::to_string(d));
  std::vector<Eigen::Index> idx(d);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (k < d) {
    auto before = [&x](Eigen::Index a, Eigen::Index b) {
      const auto ma = std::abs(x(a));
      const auto mb = std::abs(x(b));
      return ma > mb || (ma == mb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

/// Keeps the k largest-magnitude entries in place and zeroes the rest.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> top_k(const Eigen::MatrixBase<Derived>& x,
                                                                 std::size_t k) {
  using Out = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;
  Out out = Out::Zero(x.size());
  for (auto j : top_k_indices(x, k)) out(j) = x(j);
  return out;
}

/// Global top-k over the whole flat update; layout is preserved.
LayeredUpdate sparsify_update(const LayeredUpdate& u, const SparsificationLevel& level);
LayeredUpdate sparsify_update(const LayeredUpdate& u, std::size_t k);

EnergySplit energy_split(const Eigen::Ref<const Vector>& x, std::size_t k);

}  // namespace lasa
