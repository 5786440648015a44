#include "lasa/data.hpp"

#include <Eigen/QR>

#include "lasa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace lasa {

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) throw Error("dataset row/label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error("dataset label out of range");
  }
  if (!all_finite(features)) throw Error("dataset has non-finite features");
}

Matrix Dataset::gather_features(std::span<const std::size_t> indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), features.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

Dataset synth_gaussian_mixture(int num_classes, std::size_t dim, std::size_t samples_per_class, double spread,
                               std::uint64_t seed, double separation, double offset) {
  if (num_classes < 2) throw Error("mixture needs at least two classes");
  if (dim < static_cast<std::size_t>(num_classes)) throw Error("mixture needs dim >= num_classes");
  if (spread < 0.0) throw Error("spread must be nonnegative");
  auto rng = make_rng(seed, {stream::kDataset});
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.num_classes = num_classes;
  const auto total = static_cast<std::size_t>(num_classes) * samples_per_class;
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
  ds.labels.reserve(total);
  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(dim); ++j) {
        const double noise = normal(rng);
        ds.features(row, j) = offset + spread * noise + (j == c ? separation : 0.0);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Matrix random_rotation(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("rotation needs a positive dimension");
  auto rng = make_rng(seed, {stream::kDataset});
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // sign fix on R's diagonal makes the distribution Haar
  const Vector r_diag = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r_diag(j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

void rotate_features(Dataset& ds, const Matrix& q) {
  if (q.rows() != ds.features.cols() || q.cols() != ds.features.cols())
    throw Error("rotation size does not match the feature dimension");
  ds.features = ds.features * q;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t at, const std::filesystem::path& path) {
  if (bytes.size() < at + 4) throw Error("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = slurp(images);
  if (be32(img, 0, images) != kImageMagic) throw Error("bad IDX image magic in " + images.string());
  const std::size_t count = be32(img, 4, images);
  const std::size_t rows = be32(img, 8, images);
  const std::size_t cols = be32(img, 12, images);
  const std::size_t dim = rows * cols;
  if (img.size() != 16 + count * dim) throw Error("IDX image payload size mismatch in " + images.string());

  const auto lab = slurp(labels);
  if (be32(lab, 0, labels) != kLabelMagic) throw Error("bad IDX label magic in " + labels.string());
  const std::size_t label_count = be32(lab, 4, labels);
  if (lab.size() != 8 + label_count) throw Error("IDX label payload size mismatch in " + labels.string());
  if (label_count != count) throw Error("IDX image and label counts differ");

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    }
  }
  ds.labels.assign(lab.begin() + 8, lab.end());
  ds.num_classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.num_classes = std::max(ds.num_classes, 10);
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (rows * cols != ds.dim()) throw Error("save_idx: rows*cols does not match feature dimension");
  std::ofstream img(images, std::ios::binary);
  if (!img) throw Error("cannot write " + images.string());
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = std::clamp(std::round(ds.features(i, j) * 255.0), 0.0, 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  std::ofstream lab(labels, std::ios::binary);
  if (!lab) throw Error("cannot write " + labels.string());
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

// ---------------------------------------------------------------------------
// Partitioning

namespace {

std::vector<ClientShard> empty_shards(std::size_t n) {
  if (n == 0) throw Error("need at least one client");
  std::vector<ClientShard> shards(n);
  for (std::size_t i = 0; i < n; ++i) shards[i].client_id = static_cast<ClientId>(i);
  return shards;
}

/// Integer allocation of `total` proportional to `weights`, largest remainder
/// first, ties to the lower index.
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<double> remainder(weights.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = weights[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  // Guard against rounding pushing floor sums past the total.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % order.size(), ++assigned) ++counts[order[r]];
  return counts;
}

}  // namespace

std::vector<ClientShard> partition_iid(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  auto shards = empty_shards(n);
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(seed, {stream::kPartition});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t base = ds.size() / n;
  const std::size_t extra = ds.size() % n;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t take = base + (i < extra ? 1 : 0);
    shards[i].indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                             perm.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    std::sort(shards[i].indices.begin(), shards[i].indices.end());
    cursor += take;
  }
  return shards;
}

std::vector<ClientShard> partition_dirichlet(const Dataset& ds, std::size_t n, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw Error("dirichlet alpha must be positive");
  if (ds.size() < n) throw Error("fewer samples than clients");
  auto shards = empty_shards(n);
  auto rng = make_rng(seed, {stream::kPartition});
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<double> weights(n);
    for (auto& w : weights) w = gamma(rng);
    if (!(std::accumulate(weights.begin(), weights.end(), 0.0) > 0.0)) {
      // Every draw underflowed: the whole class goes to one client.
      std::fill(weights.begin(), weights.end(), 0.0);
      weights[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
    }
    const auto counts = largest_remainder(weights, members.size());
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < n; ++c) {
      auto& idx = shards[c].indices;
      idx.insert(idx.end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                 members.begin() + static_cast<std::ptrdiff_t>(cursor + counts[c]));
      cursor += counts[c];
    }
  }

  for (auto& shard : shards) {
    if (!shard.indices.empty()) continue;
    auto largest = std::max_element(shards.begin(), shards.end(), [](const ClientShard& a, const ClientShard& b) {
      return a.indices.size() < b.indices.size();
    });
    shard.indices.push_back(largest->indices.back());
    largest->indices.pop_back();
  }
  for (auto& shard : shards) std::sort(shard.indices.begin(), shard.indices.end());
  return shards;
}

std::vector<ClientShard> mark_malicious(std::vector<ClientShard> shards, double attack_ratio, std::uint64_t seed) {
  if (!(attack_ratio >= 0.0 && attack_ratio < 1.0)) throw Error("attack ratio must lie in [0, 1)");
  const auto n = shards.size();
  const auto count = static_cast<std::size_t>(std::floor(attack_ratio * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, {stream::kMalicious});
  std::shuffle(order.begin(), order.end(), rng);
  for (auto& s : shards) s.honest = true;
  for (std::size_t i = 0; i < count; ++i) shards[order[i]].honest = false;
  return shards;
}

}  // namespace lasa
