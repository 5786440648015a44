#include "lasa/update.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace lasa {

Layout::Layout(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  std::size_t expected = 0;
  for (const auto& spec : layers_) {
    if (spec.length == 0) throw Error("layer '" + spec.name + "' has zero length");
    if (spec.offset != expected) throw Error("layer '" + spec.name + "' does not tile the vector");
    expected += spec.length;
  }
  dimension_ = expected;
}

Layout Layout::from_lengths(const std::vector<std::pair<std::string, std::size_t>>& layers) {
  std::vector<LayerSpec> specs;
  std::size_t offset = 0;
  for (const auto& [name, length] : layers) {
    specs.push_back({name, offset, length});
    offset += length;
  }
  return Layout(std::move(specs));
}

Layout Layout::single(std::size_t length, std::string name) {
  return Layout({{std::move(name), 0, length}});
}

const LayerSpec& Layout::layer(std::size_t l) const {
  if (l >= layers_.size()) {
    throw Error("layer index " + std::to_string(l) + " out of range (L=" +
                std::to_string(layers_.size()) + ")");
  }
  return layers_[l];
}

LayeredUpdate::LayeredUpdate(Vector values, Layout layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  if (static_cast<std::size_t>(values_.size()) != layout_.dimension()) {
    throw Error("update has " + std::to_string(values_.size()) + " values but layout covers " +
                std::to_string(layout_.dimension()));
  }
  if (!all_finite(values_)) throw Error("update contains non-finite values");
}

LayeredUpdate LayeredUpdate::zeros(const Layout& layout) {
  return LayeredUpdate(Vector::Zero(static_cast<Eigen::Index>(layout.dimension())), layout);
}

Eigen::Ref<const Vector> LayeredUpdate::layer(std::size_t l) const {
  const auto& spec = layout_.layer(l);
  return values_.segment(static_cast<Eigen::Index>(spec.offset),
                         static_cast<Eigen::Index>(spec.length));
}

namespace {
std::vector<ClientId> iota_ids(std::size_t n) {
  std::vector<ClientId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<ClientId>(i);
  return ids;
}
}  // namespace

UpdateBatch::UpdateBatch(std::vector<LayeredUpdate> updates, std::vector<ClientId> client_ids)
    : updates_(std::move(updates)), ids_(std::move(client_ids)) {
  validate();
}

void UpdateBatch::validate() const {
  if (updates_.empty()) throw Error("update batch must not be empty");
  if (ids_.size() != updates_.size()) throw Error("client id count does not match update count");
  for (const auto& u : updates_) {
    if (!(u.layout() == updates_.front().layout())) throw Error("layout mismatch inside batch");
  }
}

UpdateBatch::UpdateBatch(std::vector<LayeredUpdate> updates)
    : updates_(std::move(updates)), ids_(iota_ids(updates_.size())) {
  validate();
}

Matrix UpdateBatch::as_matrix() const {
  Matrix m(static_cast<Eigen::Index>(dimension()), static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) m.col(static_cast<Eigen::Index>(i)) = updates_[i].values();
  return m;
}

Eigen::Ref<const Vector> slice_layer(const LayeredUpdate& u, std::size_t l) { return u.layer(l); }

LayeredUpdate linear_combine(const UpdateBatch& batch, std::span<const double> weights) {
  if (weights.size() != batch.size()) throw Error("weight count does not match batch size");
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(batch.dimension()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!std::isfinite(weights[i])) throw Error("non-finite combination weight");
    acc += weights[i] * batch[i].values();
  }
  return LayeredUpdate(std::move(acc), batch.layout());
}

LayeredUpdate mean_update(const UpdateBatch& batch) {
  std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return linear_combine(batch, w);
}

// ---------------------------------------------------------------------------
// Binary record

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error("truncated update record");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

void write_update(std::ostream& out, const LayeredUpdate& u) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.num_layers()));
  for (const auto& spec : u.layout().layers()) {
    if (spec.name.size() > 0xFFFF) throw Error("layer name too long for record");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(spec.name.size()));
    out.write(spec.name.data(), static_cast<std::streamsize>(spec.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.length));
  }
  for (Eigen::Index j = 0; j < u.values().size(); ++j) put_le<double>(out, u.values()[j]);
}

LayeredUpdate read_update(std::istream& in) {
  const auto layers = get_le<std::uint32_t>(in);
  std::vector<std::pair<std::string, std::size_t>> specs;
  specs.reserve(layers);
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto name_len = get_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    if (name_len > 0 && !in.read(name.data(), name_len)) throw Error("truncated update record");
    specs.emplace_back(std::move(name), get_le<std::uint32_t>(in));
  }
  Layout layout = Layout::from_lengths(specs);
  Vector values(static_cast<Eigen::Index>(layout.dimension()));
  for (Eigen::Index j = 0; j < values.size(); ++j) values[j] = get_le<double>(in);
  return LayeredUpdate(std::move(values), std::move(layout));
}

}  // namespace lasa
