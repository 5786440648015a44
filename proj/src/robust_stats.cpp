#include "lasa/robust_stats.hpp"

namespace lasa {

LayeredUpdate coordinate_median(const UpdateBatch& batch) {
  const auto d = static_cast<Eigen::Index>(batch.dimension());
  const auto n = static_cast<Eigen::Index>(batch.size());
  Vector out(d);
  Vector column(n);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) column(i) = batch[static_cast<std::size_t>(i)].values()(j);
    out(j) = median(column);
  }
  return LayeredUpdate(std::move(out), batch.layout());
}

LayerMetricTable metric_table(const UpdateBatch& batch) {
  const auto n = batch.size();
  const auto layers = batch.layout().num_layers();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(layers);
  LayerMetricTable table{Matrix(rows, cols), Matrix(rows, cols)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < layers; ++l) {
      const auto slice = batch[i].layer(l);
      table.magnitude(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = l2_norm(slice);
      table.direction(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = pdp(slice);
    }
  }
  return table;
}

}  // namespace lasa
