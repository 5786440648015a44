#pragma once

#include "lasa/sparsify.hpp"
#include "lasa/update.hpp"

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lasa {

/// Per-layer scores LASA filtered on. Rows follow batch order.
struct LayerDiagnostics {
  Vector magnitude;        ///< L2 norm of each sparsified slice
  Vector direction;        ///< PDP of each sparsified slice
  Vector magnitude_score;  ///< MZ-score of `magnitude`
  Vector direction_score;  ///< MZ-score of `direction`
};

struct AggregationOutcome {
  LayeredUpdate aggregate;
  /// Per layer, ids of the clients whose slice entered the aggregate, in batch order.
  std::vector<std::vector<ClientId>> selected;
  /// Filled by lasa only.
  std::vector<LayerDiagnostics> diagnostics;
};

struct LasaParams {
  SparsificationLevel sparsification{0.3};
  double lambda_m = 2.0;  ///< magnitude radius
  double lambda_d = 1.0;  ///< direction radius

  void validate() const;
};

/// Pre-aggregation top-k sparsification followed by layer-wise filtering on
/// the MZ-scores of slice norm and PDP; survivors' sparsified slices are
/// averaged layer by layer. If no client survives in a layer, the client
/// with the smallest max(|magnitude score|, |direction score|) is used.
AggregationOutcome lasa(const UpdateBatch& batch, const LasaParams& params);

AggregationOutcome fedavg(const UpdateBatch& batch);

struct TrimParam {
  std::size_t trim_count = 0;  ///< values dropped per side, 2b < n
};

/// Coordinate-wise: drop the b largest and b smallest, average the rest.
AggregationOutcome trimmed_mean(const UpdateBatch& batch, TrimParam trim);

struct WeiszfeldResult {
  Vector point;
  std::vector<double> objective;  ///< sum of distances at each iterate, starting at the mean
  std::size_t iterations = 0;
};

/// Weiszfeld iterations from the coordinate mean. Stops when an iterate moves
/// less than `tol` or after `max_iter` steps. Landing exactly on a data point
/// nudges the iterate by 1e-12 * (mean - point).
WeiszfeldResult weiszfeld(const UpdateBatch& batch, double tol = 1e-8, std::size_t max_iter = 200);

AggregationOutcome geometric_median(const UpdateBatch& batch, double tol = 1e-8,
                                    std::size_t max_iter = 200);

/// Krum score of each batch member: sum of squared distances to its
/// n - f - 2 nearest other members.
std::vector<double> krum_scores(const UpdateBatch& batch, std::size_t f);

/// Mean of the m lowest Krum scores. Requires n >= 2f + 3 and 1 <= m <= n - f.
AggregationOutcome multi_krum(const UpdateBatch& batch, std::size_t f, std::size_t m);

/// Iterated Krum picks n - 2f candidates, then each coordinate averages the
/// n - 4f candidate values closest to their median. Requires n >= 4f + 3.
AggregationOutcome bulyan(const UpdateBatch& batch, std::size_t f);

/// Server-side error-feedback accumulator. Empty until the first round.
struct SparseFedState {
  std::optional<LayeredUpdate> residual;
};

struct SparseFedResult {
  AggregationOutcome outcome;
  SparseFedState state;
};

/// Clip each update to L2 <= clip, average, add the carried residual, emit
/// the top-k of the sum and carry what was dropped.
SparseFedResult sparsefed_lite(const UpdateBatch& batch, std::size_t k, double clip,
                               SparseFedState state);

// ---------------------------------------------------------------------------
// Dispatch by configuration key

enum class AggregatorKind { kLasa, kFedAvg, kTrMean, kGeoMed, kMultiKrum, kBulyan, kSparseFed };

AggregatorKind parse_aggregator_kind(std::string_view key);
std::string_view aggregator_key(AggregatorKind kind);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::kLasa;
  LasaParams lasa;
  std::size_t trim = 0;             ///< trmean
  std::size_t byzantine_f = 0;      ///< multikrum, bulyan
  std::optional<std::size_t> krum_m;  ///< multikrum; n - f when unset
  double geomed_tol = 1e-8;
  std::size_t geomed_max_iter = 200;
  SparsificationLevel sparsefed_level{0.3};
  double sparsefed_clip = std::numeric_limits<double>::infinity();
};

/// Applies one aggregation rule round after round. Holds the error-feedback
/// state for sparsefed; every other rule is stateless.
class Aggregator {
 public:
  explicit Aggregator(AggregatorSpec spec);

  AggregationOutcome operator()(const UpdateBatch& batch);

  const AggregatorSpec& spec() const { return spec_; }
  /// Top-k keep count this rule applies to a d-dimensional update (d if none).
  std::size_t keep_count(std::size_t dimension) const;

 private:
  AggregatorSpec spec_;
  SparseFedState sparsefed_;
};

}  // namespace lasa
