#pragma once

#include "lasa/aggregators.hpp"
#include "lasa/attacks.hpp"
#include "lasa/engine.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace lasa {

/// Filtering quality of one aggregation. The unit is the (client, layer)
/// pair: a pair is flagged when the client is missing from that layer's
/// selection. The client-level variant flags a client excluded from at least
/// half the layers. A rate with an empty denominator is reported as 0.
struct FilterStats {
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t malicious_pairs = 0;
  std::size_t flagged_malicious_pairs = 0;
  std::size_t benign_pairs = 0;
  std::size_t flagged_benign_pairs = 0;

  double client_tpr = 0.0;
  double client_fpr = 0.0;

  std::vector<std::vector<ClientId>> excluded;  ///< per layer, ascending

  /// Pools the counts of `other` into this one and recomputes the rates.
  void accumulate(const FilterStats& other);
};

/// `participants` are the ids that were aggregated; `honest` maps each of
/// them to its ground truth.
FilterStats filter_stats(const AggregationOutcome& outcome, std::span<const ClientId> participants,
                         const std::map<ClientId, bool>& honest);

/// filter_stats for one simulated round.
FilterStats filter_stats(const RoundRecord& record);

/// Pooled pair counts over a run of records.
FilterStats pooled_filter_stats(std::span<const RoundRecord> records);

// ---------------------------------------------------------------------------
// Robustness coefficient

/// A fixed tiny federated problem the robustness estimate draws from.
struct KappaScenario {
  std::size_t n = 10;
  std::size_t f = 2;
  int classes = 3;
  std::size_t dim = 4;
  std::size_t samples_per_client = 24;
  double spread = 1.0;
  double dirichlet_alpha = 1.0;  ///< class skew across clients
  LocalTrainConfig local{.tau = 2, .eta = 0.05, .momentum = 0.0, .lr_decay = 1.0, .batch_size = 6, .clip = {}};
  std::optional<AttackSpec> attack;  ///< required when f > 0
  std::size_t variance_samples = 16;  ///< minibatches per client for the gradient variance estimate
};

struct KappaTrial {
  double distance_sq = 0.0;  ///< ||F(x) - mean of benign||^2
  double bound = 0.0;
  double c_k = 0.0;
  double b_k = 0.0;
  double nu = 0.0;
  double zeta = 0.0;
  double c_sq = 0.0;
  double c_lambda_sq = 0.0;
  bool step_size_ok = false;  ///< eta <= 1 / (2 tau)
  bool selection_ok = false;  ///< |S^l| >= n/2 - f on every layer
  bool preconditions() const { return step_size_ok && selection_ok; }
  bool within_bound() const { return distance_sq <= bound; }
};

struct KappaReport {
  double empirical_kappa = 0.0;  ///< mean distance_sq over trials
  double bound = 0.0;            ///< closed form at the trial-averaged inputs
  double c_k = 0.0, b_k = 0.0, nu = 0.0, zeta = 0.0, c_sq = 0.0, c_lambda_sq = 0.0;
  std::size_t precondition_failures = 0;
  std::size_t violations = 0;  ///< trials with preconditions met and distance above bound
  std::vector<KappaTrial> trials;
};

/// 2 c_k (1 + f/(n-2f)) (2 nu + zeta + 2 C_lm^2 + 2 C^2) + b_k C^2
double kappa_bound(double c_k, double b_k, std::size_t n, std::size_t f, double nu, double zeta, double c_lambda_sq,
                   double c_sq);

/// Monte Carlo estimate of the robustness coefficient of `aggregator` on the
/// scenario, with the closed-form bound evaluated per trial from measured
/// quantities. Trials run on up to `jobs` threads with per-trial streams.
KappaReport estimate_kappa(const AggregatorSpec& aggregator, const KappaScenario& scenario, std::size_t trials,
                           std::uint64_t seed, std::size_t jobs = 1);

/// Mean over rounds of ||grad L_B(theta^t)||^2. Throws if any record lacks it.
double resilience_audit(std::span<const RoundRecord> records);

}  // namespace lasa
