#include "lasa/metrics.hpp"

#include "lasa/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lasa {

namespace {

double rate(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void FilterStats::accumulate(const FilterStats& other) {
  malicious_pairs += other.malicious_pairs;
  flagged_malicious_pairs += other.flagged_malicious_pairs;
  benign_pairs += other.benign_pairs;
  flagged_benign_pairs += other.flagged_benign_pairs;
  tpr = rate(flagged_malicious_pairs, malicious_pairs);
  fpr = rate(flagged_benign_pairs, benign_pairs);
}

FilterStats filter_stats(const AggregationOutcome& outcome, std::span<const ClientId> participants,
                         const std::map<ClientId, bool>& honest) {
  for (auto id : participants) {
    if (!honest.count(id)) throw Error("client " + std::to_string(id) + " has no ground-truth label");
  }
  const std::set<ClientId> present(participants.begin(), participants.end());
  FilterStats stats;
  std::map<ClientId, std::size_t> excluded_layers;
  for (const auto& layer : outcome.selected) {
    std::set<ClientId> kept;
    for (auto id : layer) {
      if (!present.count(id)) throw Error("selected client " + std::to_string(id) + " was not a participant");
      kept.insert(id);
    }
    auto& excluded = stats.excluded.emplace_back();
    for (auto id : present) {
      const bool flagged = !kept.count(id);
      const bool benign = honest.at(id);
      if (flagged) {
        excluded.push_back(id);
        ++excluded_layers[id];
      }
      (benign ? stats.benign_pairs : stats.malicious_pairs) += 1;
      if (flagged) (benign ? stats.flagged_benign_pairs : stats.flagged_malicious_pairs) += 1;
    }
  }
  stats.tpr = rate(stats.flagged_malicious_pairs, stats.malicious_pairs);
  stats.fpr = rate(stats.flagged_benign_pairs, stats.benign_pairs);

  const std::size_t layers = outcome.selected.size();
  std::size_t mal = 0, mal_flagged = 0, ben = 0, ben_flagged = 0;
  for (auto id : present) {
    const bool flagged = layers > 0 && 2 * excluded_layers[id] >= layers;
    if (honest.at(id)) {
      ++ben;
      ben_flagged += flagged;
    } else {
      ++mal;
      mal_flagged += flagged;
    }
  }
  stats.client_tpr = rate(mal_flagged, mal);
  stats.client_fpr = rate(ben_flagged, ben);
  return stats;
}

FilterStats filter_stats(const RoundRecord& record) {
  std::map<ClientId, bool> honest;
  for (auto id : record.sampled_ids) honest[id] = true;
  for (auto id : record.malicious_ids) honest[id] = false;
  return filter_stats(record.outcome, record.sampled_ids, honest);
}

FilterStats pooled_filter_stats(std::span<const RoundRecord> records) {
  FilterStats pooled;
  for (const auto& r : records) pooled.accumulate(filter_stats(r));
  return pooled;
}

// ---------------------------------------------------------------------------

double kappa_bound(double c_k, double b_k, std::size_t n, std::size_t f, double nu, double zeta, double c_lambda_sq,
                   double c_sq) {
  if (2 * f >= n) throw Error("kappa bound needs f < n/2");
  const double inflation = 1.0 + static_cast<double>(f) / static_cast<double>(n - 2 * f);
  return 2.0 * c_k * inflation * (2.0 * nu + zeta + 2.0 * c_lambda_sq + 2.0 * c_sq) + b_k * c_sq;
}

namespace {

struct KappaProblem {
  Dataset data;
  std::vector<ClientShard> shards;
  ModelShape shape;
};

KappaProblem make_problem(const KappaScenario& sc, std::uint64_t seed) {
  KappaProblem p;
  const std::size_t total = sc.n * sc.samples_per_client;
  const std::size_t per_class = (total + static_cast<std::size_t>(sc.classes) - 1) / static_cast<std::size_t>(sc.classes);
  p.data = synth_gaussian_mixture(sc.classes, sc.dim, per_class, sc.spread, derive_seed(seed, {stream::kKappa}));
  p.shards = partition_dirichlet(p.data, sc.n, sc.dirichlet_alpha, derive_seed(seed, {stream::kKappa}));
  for (std::size_t i = sc.n - sc.f; i < sc.n; ++i) p.shards[i].honest = false;
  p.shape = ModelShape{Architecture::kLogReg, sc.dim, 0, static_cast<std::size_t>(sc.classes)};
  return p;
}

KappaTrial run_trial(const AggregatorSpec& spec, const KappaScenario& sc, const KappaProblem& p, std::size_t trial,
                     std::uint64_t seed) {
  auto init = make_rng(seed, {stream::kKappa, trial, stream::kInit});
  const ModelState model = ModelState::random(p.shape, init);
  const std::size_t benign_count = sc.n - sc.f;

  std::vector<LayeredUpdate> honest;
  for (std::size_t i = 0; i < sc.n; ++i) {
    auto rng = make_rng(seed, {stream::kKappa, trial, stream::kLocalTrain, i});
    honest.push_back(local_update(model, p.data, p.shards[i], sc.local, rng).update);
  }
  std::vector<ClientId> ids(sc.n);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  const std::vector<ClientId> benign_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(benign_count));
  const std::vector<ClientId> malicious_ids(ids.begin() + static_cast<std::ptrdiff_t>(benign_count), ids.end());
  const UpdateBatch benign(std::vector<LayeredUpdate>(honest.begin(), honest.begin() + static_cast<std::ptrdiff_t>(benign_count)),
                           benign_ids);

  std::vector<LayeredUpdate> submitted(honest.begin(), honest.begin() + static_cast<std::ptrdiff_t>(benign_count));
  if (sc.f > 0) {
    if (!sc.attack) throw Error("kappa scenario with f > 0 needs an attack");
    AttackContext ctx{benign, malicious_ids,
                      UpdateBatch(std::vector<LayeredUpdate>(honest.begin() + static_cast<std::ptrdiff_t>(benign_count), honest.end()),
                                  malicious_ids),
                      derive_seed(seed, {stream::kKappa, trial, stream::kAttack})};
    for (auto& u : generate_attack(ctx, *sc.attack)) submitted.push_back(std::move(u));
  }
  const UpdateBatch batch(submitted, ids);
  Aggregator aggregator(spec);
  const AggregationOutcome outcome = aggregator(batch);
  const Vector benign_mean = mean_update(benign).values();

  KappaTrial t;
  t.distance_sq = (outcome.aggregate.values() - benign_mean).squaredNorm();

  const std::size_t k = aggregator.keep_count(batch.dimension());
  std::size_t counted = 0;
  for (std::size_t i = 0; i < benign_count; ++i) {
    const auto& x = benign[i].values();
    t.c_sq = std::max(t.c_sq, x.squaredNorm());
    if (x.squaredNorm() == 0.0) continue;
    const EnergySplit e = energy_split(x, k);
    t.c_k += e.c_k;
    t.b_k += e.b_k;
    ++counted;
  }
  if (counted) {
    t.c_k /= static_cast<double>(counted);
    t.b_k /= static_cast<double>(counted);
  } else {
    t.c_k = 1.0;
  }

  std::vector<Vector> full;
  Vector full_mean = Vector::Zero(static_cast<Eigen::Index>(model.params.dimension()));
  for (std::size_t i = 0; i < benign_count; ++i) {
    full.push_back(shard_gradient(model, p.data, p.shards[i]).values());
    full_mean += full.back();
  }
  full_mean /= static_cast<double>(benign_count);
  auto vrng = make_rng(seed, {stream::kKappa, trial, stream::kSampling});
  for (std::size_t i = 0; i < benign_count; ++i) {
    t.zeta += (full[i] - full_mean).squaredNorm();
    const auto& shard = p.shards[i];
    std::uniform_int_distribution<std::size_t> pick(0, shard.indices.size() - 1);
    std::vector<std::size_t> mb(sc.local.batch_size);
    double var = 0.0;
    for (std::size_t s = 0; s < sc.variance_samples; ++s) {
      for (auto& b : mb) b = shard.indices[pick(vrng)];
      const Matrix x = p.data.gather_features(mb);
      const auto y = p.data.gather_labels(mb);
      var += (forward_backward(model, x, y).gradient.values() - full[i]).squaredNorm();
    }
    t.nu += var / static_cast<double>(std::max<std::size_t>(1, sc.variance_samples));
  }
  t.zeta /= static_cast<double>(benign_count);
  t.nu /= static_cast<double>(benign_count);

  std::set<ClientId> admitted;
  const double floor_size = static_cast<double>(sc.n) / 2.0 - static_cast<double>(sc.f);
  t.selection_ok = true;
  for (const auto& layer : outcome.selected) {
    if (static_cast<double>(layer.size()) < floor_size) t.selection_ok = false;
    admitted.insert(layer.begin(), layer.end());
  }
  for (std::size_t i = benign_count; i < sc.n; ++i) {
    if (admitted.count(static_cast<ClientId>(i))) t.c_lambda_sq = std::max(t.c_lambda_sq, batch[i].values().squaredNorm());
  }
  t.step_size_ok = sc.local.eta <= 1.0 / (2.0 * static_cast<double>(sc.local.tau));
  t.bound = kappa_bound(t.c_k, t.b_k, sc.n, sc.f, t.nu, t.zeta, t.c_lambda_sq, t.c_sq);
  return t;
}

}  // namespace

KappaReport estimate_kappa(const AggregatorSpec& aggregator, const KappaScenario& scenario, std::size_t trials,
                           std::uint64_t seed, std::size_t jobs) {
  if (trials < 1) throw Error("estimate_kappa needs at least one trial");
  if (2 * scenario.f >= scenario.n) throw Error("kappa scenario needs f < n/2");
  scenario.local.validate();
  const KappaProblem problem = make_problem(scenario, seed);

  KappaReport report;
  report.trials.resize(trials);
  parallel_for(trials, jobs, [&](std::size_t i) { report.trials[i] = run_trial(aggregator, scenario, problem, i, seed); });

  const double inv = 1.0 / static_cast<double>(trials);
  for (const auto& t : report.trials) {
    report.empirical_kappa += t.distance_sq * inv;
    report.c_k += t.c_k * inv;
    report.b_k += t.b_k * inv;
    report.nu += t.nu * inv;
    report.zeta += t.zeta * inv;
    report.c_sq += t.c_sq * inv;
    report.c_lambda_sq += t.c_lambda_sq * inv;
    if (!t.preconditions()) {
      ++report.precondition_failures;
    } else if (!t.within_bound()) {
      ++report.violations;
    }
  }
  report.bound = kappa_bound(report.c_k, report.b_k, scenario.n, scenario.f, report.nu, report.zeta,
                             report.c_lambda_sq, report.c_sq);
  return report;
}

double resilience_audit(std::span<const RoundRecord> records) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    if (!r.benign_grad_norm_sq) throw Error("round " + std::to_string(r.round) + " has no gradient log");
    sum += *r.benign_grad_norm_sq;
  }
  return sum / static_cast<double>(records.size());
}

}  // namespace lasa
