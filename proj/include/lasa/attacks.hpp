#pragma once

#include "lasa/aggregators.hpp"
#include "lasa/update.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace lasa {

enum class AttackKind { kRandom, kNoise, kSignFlip, kMinMax, kMinSum, kTailoredTrMean, kLie, kByzMean };

AttackKind parse_attack_kind(std::string_view key);
std::string_view attack_key(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::kLie;
  double sigma = 0.5;  ///< random, noise
  double z = 0.5;      ///< lie
  AttackKind byzmean_base = AttackKind::kLie;
  bool stealthy = false;  ///< min-sum bounded by the minimum benign total distance
  /// lie statistics also include the malicious clients' honest updates
  bool lie_over_all = false;
  /// trimmed-mean b the tailored attack targets; f when unset
  std::optional<std::size_t> tailored_trim;
};

/// What the attacker sees in one round. `own_honest`, when present, holds
/// the update each malicious client would have sent had it been honest
/// (same order as `malicious_ids`).
struct AttackContext {
  const UpdateBatch& benign;
  std::vector<ClientId> malicious_ids;
  std::optional<UpdateBatch> own_honest;
  std::uint64_t seed = 0;
};

/// Crafts one update per malicious id. Deterministic in (ctx.seed, spec).
std::vector<LayeredUpdate> generate_attack(const AttackContext& ctx, const AttackSpec& spec);

std::vector<LayeredUpdate> attack_random(const AttackContext& ctx, double sigma);
std::vector<LayeredUpdate> attack_noise(const AttackContext& ctx, double sigma);
std::vector<LayeredUpdate> attack_signflip(const AttackContext& ctx);
std::vector<LayeredUpdate> attack_minmax(const AttackContext& ctx);
std::vector<LayeredUpdate> attack_minsum(const AttackContext& ctx, bool stealthy = false);
std::vector<LayeredUpdate> attack_tailored_trmean(const AttackContext& ctx, TrimParam trim);
std::vector<LayeredUpdate> attack_lie(const AttackContext& ctx, double z, bool over_all = false);
std::vector<LayeredUpdate> attack_byzmean(const AttackContext& ctx, const AttackSpec& base);

/// Result of the min-max / min-sum search, exposed for verification.
struct PerturbationSearch {
  Vector update;
  double gamma = 0.0;
  double bound = 0.0;  ///< constraint bound derived from the benign set
  double value = 0.0;  ///< constraint value at the returned update
};

/// mu + gamma * p with p the normalised negative coordinate-wise std of the
/// benign updates; gamma is the largest value in [0, 200] meeting the bound.
PerturbationSearch minmax_search(const UpdateBatch& benign);
PerturbationSearch minsum_search(const UpdateBatch& benign, bool stealthy = false);

/// Scale grid searched by the tailored trimmed-mean attack.
std::vector<double> tailored_scale_grid();
/// Malicious coordinate values for scale s (one update, shared by all attackers).
Vector tailored_trmean_update(const UpdateBatch& benign, double scale);
/// |mean(all) - trmean(all)| when f copies of `malicious` join the benign set.
double tailored_objective(const UpdateBatch& benign, const Vector& malicious, std::size_t f, TrimParam trim);

}  // namespace lasa
