#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lasa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ClientId = std::uint32_t;

/// Raised on contract violations anywhere in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One named, contiguous segment of a flat parameter vector.
struct LayerSpec {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered list of layer segments that tile [0, dimension()).
class Layout {
 public:
  Layout() = default;
  explicit Layout(std::vector<LayerSpec> layers);

  /// Builds offsets from (name, length) pairs in order.
  static Layout from_lengths(const std::vector<std::pair<std::string, std::size_t>>& layers);
  static Layout single(std::size_t length, std::string name = "all");

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t dimension() const { return dimension_; }
  const LayerSpec& layer(std::size_t l) const;
  const std::vector<LayerSpec>& layers() const { return layers_; }

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::size_t dimension_ = 0;
};

/// A model update: flat coefficients plus the layer partition they follow.
/// Values are always finite.
class LayeredUpdate {
 public:
  LayeredUpdate() = default;
  LayeredUpdate(Vector values, Layout layout);

  static LayeredUpdate zeros(const Layout& layout);

  const Vector& values() const { return values_; }
  const Layout& layout() const { return layout_; }
  std::size_t dimension() const { return static_cast<std::size_t>(values_.size()); }
  std::size_t num_layers() const { return layout_.num_layers(); }

  /// Read-only view of layer `l`.
  Eigen::Ref<const Vector> layer(std::size_t l) const;

 private:
  Vector values_;
  Layout layout_;
};

/// n >= 1 updates sharing one layout, each tagged with a client id.
class UpdateBatch {
 public:
  UpdateBatch(std::vector<LayeredUpdate> updates, std::vector<ClientId> client_ids);
  /// Ids default to 0..n-1.
  explicit UpdateBatch(std::vector<LayeredUpdate> updates);

  std::size_t size() const { return updates_.size(); }
  const Layout& layout() const { return updates_.front().layout(); }
  std::size_t dimension() const { return layout().dimension(); }
  const LayeredUpdate& operator[](std::size_t i) const { return updates_[i]; }
  const std::vector<LayeredUpdate>& updates() const { return updates_; }
  const std::vector<ClientId>& client_ids() const { return ids_; }

  /// Clients as columns of a d x n matrix.
  Matrix as_matrix() const;

 private:
  void validate() const;

  std::vector<LayeredUpdate> updates_;
  std::vector<ClientId> ids_;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.derived().array().isFinite().all();
}

/// Euclidean norm.
template <typename Derived>
typename Derived::Scalar l2_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.norm();
}

Eigen::Ref<const Vector> slice_layer(const LayeredUpdate& u, std::size_t l);

/// Elementwise sum_i w_i * batch[i], keeping the shared layout.
LayeredUpdate linear_combine(const UpdateBatch& batch, std::span<const double> weights);

/// Unweighted mean of the batch.
LayeredUpdate mean_update(const UpdateBatch& batch);

/// Binary record: u32 layer count, per layer (u16 name length, name bytes,
/// u32 length), then d f64 values. All little-endian.
void write_update(std::ostream& out, const LayeredUpdate& u);
LayeredUpdate read_update(std::istream& in);

}  // namespace lasa
