#pragma once

#include "lasa/update.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lasa {

/// Row-per-sample features with class labels in [0, num_classes).
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  void validate() const;

  /// Rows at `indices`, in order.
  Matrix gather_features(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Class c is N(offset * 1 + separation * e_c, spread^2 I) in `dim`
/// dimensions, so all class means are pairwise separation * sqrt(2) apart.
/// Needs dim >= classes.
Dataset synth_gaussian_mixture(int num_classes, std::size_t dim, std::size_t samples_per_class, double spread,
                               std::uint64_t seed, double separation = 3.0, double offset = 0.0);

/// Haar-distributed orthogonal dim x dim matrix.
Matrix random_rotation(std::size_t dim, std::uint64_t seed);

/// Replaces every feature row x by q^T x.
void rotate_features(Dataset& ds, const Matrix& q);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes `ds` back to IDX with pixels quantised as round(255 x).
void save_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
              const std::filesystem::path& labels);

/// One client's slice of the training set.
struct ClientShard {
  ClientId client_id = 0;
  std::vector<std::size_t> indices;
  bool honest = true;
};

std::vector<ClientShard> partition_iid(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Each class is spread over the n clients by a Dir(alpha) draw with
/// largest-remainder rounding. Empty shards take one sample from the
/// largest shard.
std::vector<ClientShard> partition_dirichlet(const Dataset& ds, std::size_t n, double alpha, std::uint64_t seed);

/// Flags floor(ratio * n) uniformly chosen shards as dishonest.
std::vector<ClientShard> mark_malicious(std::vector<ClientShard> shards, double attack_ratio, std::uint64_t seed);

}  // namespace lasa
