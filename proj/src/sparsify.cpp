#include "lasa/sparsify.hpp"

#include <cmath>

namespace lasa {

SparsificationLevel::SparsificationLevel(double level) : level_(level) {
  if (!(level >= 0.0 && level < 1.0)) {
    throw Error("sparsification level must lie in [0, 1), got " + std::to_string(level));
  }
}

std::size_t SparsificationLevel::keep_count(std::size_t dimension) const {
  if (dimension == 0) return 0;
  const double raw = std::floor((1.0 - level_) * static_cast<double>(dimension) + 0.5);
  const auto k = static_cast<std::size_t>(std::max(raw, 1.0));
  return std::min(k, dimension);
}

LayeredUpdate sparsify_update(const LayeredUpdate& u, std::size_t k) {
  if (k == u.dimension()) return u;
  return LayeredUpdate(top_k(u.values(), k), u.layout());
}

LayeredUpdate sparsify_update(const LayeredUpdate& u, const SparsificationLevel& level) {
  return sparsify_update(u, level.keep_count(u.dimension()));
}

EnergySplit energy_split(const Eigen::Ref<const Vector>& x, std::size_t k) {
  const double total = x.squaredNorm();
  if (!(total > 0.0)) throw Error("energy_split: zero vector has no energy ratio");
  const Vector kept = top_k(x, k);
  return {kept.squaredNorm() / total, (kept - x).squaredNorm() / total};
}

}  // namespace lasa
