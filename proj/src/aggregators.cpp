#include "lasa/aggregators.hpp"

#include "lasa/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lasa {

namespace {

std::vector<std::vector<ClientId>> everyone(const UpdateBatch& batch) {
  return std::vector<std::vector<ClientId>>(batch.layout().num_layers(), batch.client_ids());
}

std::vector<std::vector<ClientId>> same_for_all_layers(const UpdateBatch& batch,
                                                       const std::vector<std::size_t>& members) {
  std::vector<std::size_t> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  std::vector<ClientId> ids;
  ids.reserve(sorted.size());
  for (auto i : sorted) ids.push_back(batch.client_ids()[i]);
  return std::vector<std::vector<ClientId>>(batch.layout().num_layers(), ids);
}

Vector mean_of(const UpdateBatch& batch, const std::vector<std::size_t>& members) {
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(batch.dimension()));
  for (auto i : members) acc += batch[i].values();
  return acc / static_cast<double>(members.size());
}

}  // namespace

void LasaParams::validate() const {
  if (!(lambda_m > 0.0)) throw Error("lambda_m must be positive");
  if (!(lambda_d > 0.0)) throw Error("lambda_d must be positive");
}

constexpr double kScoreTieRel = 1e-12;

AggregationOutcome lasa(const UpdateBatch& batch, const LasaParams& params) {
  params.validate();
  const auto n = batch.size();
  const auto& layout = batch.layout();
  const std::size_t k = params.sparsification.keep_count(batch.dimension());

  std::vector<LayeredUpdate> sparse;
  sparse.reserve(n);
  for (const auto& u : batch.updates()) sparse.push_back(sparsify_update(u, k));

  Vector aggregate = Vector::Zero(static_cast<Eigen::Index>(layout.dimension()));
  AggregationOutcome outcome{LayeredUpdate::zeros(layout), {}, {}};
  outcome.selected.reserve(layout.num_layers());
  outcome.diagnostics.reserve(layout.num_layers());

  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    LayerDiagnostics diag;
    diag.magnitude.resize(static_cast<Eigen::Index>(n));
    diag.direction.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto slice = sparse[i].layer(l);
      diag.magnitude(static_cast<Eigen::Index>(i)) = l2_norm(slice);
      diag.direction(static_cast<Eigen::Index>(i)) = pdp(slice);
    }
    diag.magnitude_score = mz_scores(diag.magnitude);
    diag.direction_score = mz_scores(diag.direction);

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      if (std::abs(diag.magnitude_score(row)) <= params.lambda_m &&
          std::abs(diag.direction_score(row)) <= params.lambda_d) {
        members.push_back(i);
      }
    }
    if (members.empty()) {
      std::size_t best = 0;
      double best_score = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double s = std::max(std::abs(diag.magnitude_score(row)), std::abs(diag.direction_score(row)));
        // scores within rounding of each other count as tied; the lower index keeps it
        if (s < best_score * (1.0 - kScoreTieRel)) {
          best_score = s;
          best = i;
        }
      }
      members.push_back(best);
    }

    const auto& spec = layout.layer(l);
    const auto offset = static_cast<Eigen::Index>(spec.offset);
    const auto length = static_cast<Eigen::Index>(spec.length);
    Vector layer_sum = Vector::Zero(length);
    std::vector<ClientId> ids;
    ids.reserve(members.size());
    for (auto i : members) {
      layer_sum += sparse[i].layer(l);
      ids.push_back(batch.client_ids()[i]);
    }
    aggregate.segment(offset, length) = layer_sum / static_cast<double>(members.size());
    outcome.selected.push_back(std::move(ids));
    outcome.diagnostics.push_back(std::move(diag));
  }
  outcome.aggregate = LayeredUpdate(std::move(aggregate), layout);
  return outcome;
}

AggregationOutcome fedavg(const UpdateBatch& batch) {
  return {mean_update(batch), everyone(batch), {}};
}

AggregationOutcome trimmed_mean(const UpdateBatch& batch, TrimParam trim) {
  const auto n = batch.size();
  const auto b = trim.trim_count;
  if (2 * b >= n) {
    throw Error("trimmed_mean: trim count " + std::to_string(b) + " too large for n=" + std::to_string(n));
  }
  if (b == 0) return fedavg(batch);
  const auto d = static_cast<Eigen::Index>(batch.dimension());
  Vector out(d);
  std::vector<double> column(n);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = batch[i].values()(j);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (std::size_t i = b; i < n - b; ++i) sum += column[i];
    out(j) = sum / static_cast<double>(n - 2 * b);
  }
  return {LayeredUpdate(std::move(out), batch.layout()), everyone(batch), {}};
}

// ---------------------------------------------------------------------------
// Geometric median

namespace {

double sum_of_distances(const Matrix& points, const Vector& y) {
  return (points.colwise() - y).colwise().norm().sum();
}

}  // namespace

WeiszfeldResult weiszfeld(const UpdateBatch& batch, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw Error("weiszfeld: tolerance must be positive");
  const Matrix points = batch.as_matrix();
  const Vector mean = points.rowwise().mean();
  const auto n = points.cols();

  WeiszfeldResult result;
  Vector y = mean;
  double objective = sum_of_distances(points, y);
  result.objective.push_back(objective);

  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector distances = (points.colwise() - y).colwise().norm().transpose();
    Eigen::Index at_point = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (distances(i) == 0.0) {
        at_point = i;
        break;
      }
    }
    if (at_point >= 0) {
      Vector nudge = 1e-12 * (mean - points.col(at_point));
      if (nudge.isZero(0.0)) {
        // Iterate sits on a point that coincides with the mean. It is optimal
        // when the unit pull of the other points does not exceed its multiplicity.
        Vector pull = Vector::Zero(points.rows());
        Eigen::Index multiplicity = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (distances(i) == 0.0) {
            ++multiplicity;
          } else {
            pull += (points.col(i) - y) / distances(i);
          }
        }
        if (pull.norm() <= static_cast<double>(multiplicity)) break;
        nudge = 1e-12 * std::max(1.0, y.norm()) * pull.normalized();
      }
      y += nudge;
      distances = (points.colwise() - y).colwise().norm().transpose();
      if ((distances.array() == 0.0).any()) break;
    }
    const Vector weights = distances.cwiseInverse();
    Vector next = (points * weights) / weights.sum();
    const double next_objective = sum_of_distances(points, next);
    ++result.iterations;
    if (next_objective > objective) break;  // numerical floor reached
    const double moved = (next - y).norm();
    y = std::move(next);
    objective = next_objective;
    result.objective.push_back(objective);
    if (moved < tol) break;
  }
  result.point = std::move(y);
  return result;
}

AggregationOutcome geometric_median(const UpdateBatch& batch, double tol, std::size_t max_iter) {
  auto result = weiszfeld(batch, tol, max_iter);
  return {LayeredUpdate(std::move(result.point), batch.layout()), everyone(batch), {}};
}

// ---------------------------------------------------------------------------
// Krum family

namespace {

Matrix pairwise_squared_distances(const UpdateBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix dist = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (batch[static_cast<std::size_t>(i)].values() -
                         batch[static_cast<std::size_t>(j)].values()).squaredNorm();
      dist(i, j) = d2;
      dist(j, i) = d2;
    }
  }
  return dist;
}

/// Krum scores restricted to `members`, using `neighbours` nearest others.
std::vector<double> scores_within(const Matrix& dist, const std::vector<std::size_t>& members,
                                  std::size_t neighbours) {
  std::vector<double> scores;
  scores.reserve(members.size());
  std::vector<double> row;
  for (auto i : members) {
    row.clear();
    for (auto j : members) {
      if (j != i) row.push_back(dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    const auto q = std::min(neighbours, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(q), row.end());
    scores.push_back(std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(q), 0.0));
  }
  return scores;
}

/// Positions into `members` ordered by (score, client id).
std::vector<std::size_t> rank_by_score(const UpdateBatch& batch, const std::vector<std::size_t>& members,
                                       const std::vector<double>& scores) {
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return batch.client_ids()[members[a]] < batch.client_ids()[members[b]];
  });
  return order;
}

std::vector<std::size_t> all_members(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return m;
}

}  // namespace

std::vector<double> krum_scores(const UpdateBatch& batch, std::size_t f) {
  const auto n = batch.size();
  if (n < 2 * f + 3) {
    throw Error("krum requires n >= 2f + 3 (n=" + std::to_string(n) + ", f=" + std::to_string(f) + ")");
  }
  return scores_within(pairwise_squared_distances(batch), all_members(n), n - f - 2);
}

AggregationOutcome multi_krum(const UpdateBatch& batch, std::size_t f, std::size_t m) {
  const auto n = batch.size();
  const auto scores = krum_scores(batch, f);
  if (m < 1 || m > n - f) {
    throw Error("multi_krum: m=" + std::to_string(m) + " outside [1, n - f]");
  }
  const auto members = all_members(n);
  const auto order = rank_by_score(batch, members, scores);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  return {LayeredUpdate(mean_of(batch, chosen), batch.layout()), same_for_all_layers(batch, chosen), {}};
}

AggregationOutcome bulyan(const UpdateBatch& batch, std::size_t f) {
  const auto n = batch.size();
  if (n < 4 * f + 3) {
    throw Error("bulyan requires n >= 4f + 3 (n=" + std::to_string(n) + ", f=" + std::to_string(f) + ")");
  }
  const Matrix dist = pairwise_squared_distances(batch);
  const std::size_t candidates = n - 2 * f;
  const std::size_t kept = n - 4 * f;

  std::vector<std::size_t> remaining = all_members(n);
  std::vector<std::size_t> chosen;
  chosen.reserve(candidates);
  while (chosen.size() < candidates) {
    const auto r = remaining.size();
    const std::size_t neighbours = r >= f + 2 ? r - f - 2 : 0;
    const auto scores = scores_within(dist, remaining, neighbours);
    const auto best = rank_by_score(batch, remaining, scores).front();
    chosen.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }

  const auto d = static_cast<Eigen::Index>(batch.dimension());
  Vector out(d);
  Vector column(static_cast<Eigen::Index>(candidates));
  std::vector<std::size_t> order(candidates);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (std::size_t c = 0; c < candidates; ++c) {
      column(static_cast<Eigen::Index>(c)) = batch[chosen[c]].values()(j);
    }
    const double med = median(column);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(column(static_cast<Eigen::Index>(a)) - med) <
             std::abs(column(static_cast<Eigen::Index>(b)) - med);
    });
    double sum = 0.0;
    for (std::size_t c = 0; c < kept; ++c) sum += column(static_cast<Eigen::Index>(order[c]));
    out(j) = sum / static_cast<double>(kept);
  }
  return {LayeredUpdate(std::move(out), batch.layout()), same_for_all_layers(batch, chosen), {}};
}

// ---------------------------------------------------------------------------
// SparseFed (server-side top-k with clipping and error feedback)

SparseFedResult sparsefed_lite(const UpdateBatch& batch, std::size_t k, double clip,
                               SparseFedState state) {
  if (!(clip > 0.0)) throw Error("sparsefed: clip must be positive");
  const auto d = static_cast<Eigen::Index>(batch.dimension());
  if (k > batch.dimension()) throw Error("sparsefed: k exceeds dimension");
  Vector sum = Vector::Zero(d);
  for (const auto& u : batch.updates()) {
    const double norm = u.values().norm();
    const double scale = norm > clip ? clip / norm : 1.0;
    sum += scale * u.values();
  }
  Vector total = sum / static_cast<double>(batch.size());
  if (state.residual) {
    if (!(state.residual->layout() == batch.layout())) throw Error("sparsefed: residual layout mismatch");
    total += state.residual->values();
  }
  Vector emitted = top_k(total, k);
  Vector residual = total - emitted;
  SparseFedResult result{{LayeredUpdate(std::move(emitted), batch.layout()), everyone(batch), {}}, {}};
  result.state.residual = LayeredUpdate(std::move(residual), batch.layout());
  return result;
}

// ---------------------------------------------------------------------------
// Dispatch

AggregatorKind parse_aggregator_kind(std::string_view key) {
  if (key == "lasa") return AggregatorKind::kLasa;
  if (key == "fedavg") return AggregatorKind::kFedAvg;
  if (key == "trmean") return AggregatorKind::kTrMean;
  if (key == "geomed") return AggregatorKind::kGeoMed;
  if (key == "multikrum") return AggregatorKind::kMultiKrum;
  if (key == "bulyan") return AggregatorKind::kBulyan;
  if (key == "sparsefed") return AggregatorKind::kSparseFed;
  throw Error("unknown aggregator '" + std::string(key) + "'");
}

std::string_view aggregator_key(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kLasa: return "lasa";
    case AggregatorKind::kFedAvg: return "fedavg";
    case AggregatorKind::kTrMean: return "trmean";
    case AggregatorKind::kGeoMed: return "geomed";
    case AggregatorKind::kMultiKrum: return "multikrum";
    case AggregatorKind::kBulyan: return "bulyan";
    case AggregatorKind::kSparseFed: return "sparsefed";
  }
  return "?";
}

Aggregator::Aggregator(AggregatorSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind == AggregatorKind::kLasa) spec_.lasa.validate();
}

std::size_t Aggregator::keep_count(std::size_t dimension) const {
  switch (spec_.kind) {
    case AggregatorKind::kLasa: return spec_.lasa.sparsification.keep_count(dimension);
    case AggregatorKind::kSparseFed: return spec_.sparsefed_level.keep_count(dimension);
    default: return dimension;
  }
}

AggregationOutcome Aggregator::operator()(const UpdateBatch& batch) {
  switch (spec_.kind) {
    case AggregatorKind::kLasa: return lasa(batch, spec_.lasa);
    case AggregatorKind::kFedAvg: return fedavg(batch);
    case AggregatorKind::kTrMean: return trimmed_mean(batch, {spec_.trim});
    case AggregatorKind::kGeoMed: return geometric_median(batch, spec_.geomed_tol, spec_.geomed_max_iter);
    case AggregatorKind::kMultiKrum:
      return multi_krum(batch, spec_.byzantine_f, spec_.krum_m.value_or(batch.size() - spec_.byzantine_f));
    case AggregatorKind::kBulyan: return bulyan(batch, spec_.byzantine_f);
    case AggregatorKind::kSparseFed: {
      auto result = sparsefed_lite(batch, keep_count(batch.dimension()), spec_.sparsefed_clip,
                                   std::move(sparsefed_));
      sparsefed_ = std::move(result.state);
      return std::move(result.outcome);
    }
  }
  throw Error("unhandled aggregator kind");
}

}  // namespace lasa
