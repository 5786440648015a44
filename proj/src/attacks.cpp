#include "lasa/attacks.hpp"

#include "lasa/rng.hpp"

#include <algorithm>
#include <cmath>

namespace lasa {

AttackKind parse_attack_kind(std::string_view key) {
  if (key == "random") return AttackKind::kRandom;
  if (key == "noise") return AttackKind::kNoise;
  if (key == "signflip") return AttackKind::kSignFlip;
  if (key == "minmax") return AttackKind::kMinMax;
  if (key == "minsum") return AttackKind::kMinSum;
  if (key == "tailored_trmean") return AttackKind::kTailoredTrMean;
  if (key == "lie") return AttackKind::kLie;
  if (key == "byzmean") return AttackKind::kByzMean;
  throw Error("unknown attack '" + std::string(key) + "'");
}

std::string_view attack_key(AttackKind kind) {
  switch (kind) {
    case AttackKind::kRandom: return "random";
    case AttackKind::kNoise: return "noise";
    case AttackKind::kSignFlip: return "signflip";
    case AttackKind::kMinMax: return "minmax";
    case AttackKind::kMinSum: return "minsum";
    case AttackKind::kTailoredTrMean: return "tailored_trmean";
    case AttackKind::kLie: return "lie";
    case AttackKind::kByzMean: return "byzmean";
  }
  return "?";
}

namespace {

std::vector<LayeredUpdate> replicate(const Vector& v, const Layout& layout, std::size_t count) {
  return std::vector<LayeredUpdate>(count, LayeredUpdate(v, layout));
}

const UpdateBatch& require_own_honest(const AttackContext& ctx, std::string_view who) {
  if (!ctx.own_honest || ctx.own_honest->size() != ctx.malicious_ids.size()) {
    throw Error(std::string(who) + " attack needs each malicious client's honest update");
  }
  return *ctx.own_honest;
}

Vector gaussian(std::uint64_t seed, ClientId id, Eigen::Index d, double sigma) {
  auto rng = make_rng(seed, {stream::kAttack, id});
  std::normal_distribution<double> normal(0.0, sigma);
  Vector out(d);
  for (Eigen::Index j = 0; j < d; ++j) out(j) = normal(rng);
  return out;
}

Vector coordinate_stddev(const Matrix& columns) {
  const Vector mean = columns.rowwise().mean();
  return ((columns.colwise() - mean).array().square().rowwise().sum() /
          static_cast<double>(columns.cols()))
      .sqrt()
      .matrix();
}

}  // namespace

std::vector<LayeredUpdate> attack_random(const AttackContext& ctx, double sigma) {
  if (!(sigma > 0.0)) throw Error("random attack: sigma must be positive");
  const auto d = static_cast<Eigen::Index>(ctx.benign.dimension());
  std::vector<LayeredUpdate> out;
  for (auto id : ctx.malicious_ids) out.emplace_back(gaussian(ctx.seed, id, d, sigma), ctx.benign.layout());
  return out;
}

std::vector<LayeredUpdate> attack_noise(const AttackContext& ctx, double sigma) {
  if (!(sigma > 0.0)) throw Error("noise attack: sigma must be positive");
  const auto& honest = require_own_honest(ctx, "noise");
  const auto d = static_cast<Eigen::Index>(ctx.benign.dimension());
  std::vector<LayeredUpdate> out;
  for (std::size_t i = 0; i < ctx.malicious_ids.size(); ++i) {
    out.emplace_back(honest[i].values() + gaussian(ctx.seed, ctx.malicious_ids[i], d, sigma),
                     ctx.benign.layout());
  }
  return out;
}

std::vector<LayeredUpdate> attack_signflip(const AttackContext& ctx) {
  const auto& honest = require_own_honest(ctx, "sign-flip");
  std::vector<LayeredUpdate> out;
  for (const auto& u : honest.updates()) out.emplace_back(-u.values(), u.layout());
  return out;
}

// ---------------------------------------------------------------------------
// Min-Max / Min-Sum

namespace {

constexpr double kGammaMax = 200.0;
constexpr int kGammaIterations = 60;

template <typename Value>
PerturbationSearch perturbation_search(const UpdateBatch& benign, double bound, Value value_of) {
  const Matrix columns = benign.as_matrix();
  const Vector mu = columns.rowwise().mean();
  const Vector sd = coordinate_stddev(columns);

  PerturbationSearch result{mu, 0.0, bound, value_of(mu)};
  const double sd_norm = sd.norm();
  if (!(sd_norm > 0.0) || result.value > bound) return result;

  const Vector direction = -sd / sd_norm;
  auto feasible = [&](double gamma) { return value_of(mu + gamma * direction) <= bound; };
  double lo = 0.0;
  double hi = kGammaMax;
  if (feasible(hi)) {
    lo = hi;
  } else {
    for (int it = 0; it < kGammaIterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  result.gamma = lo;
  result.update = mu + lo * direction;
  result.value = value_of(result.update);
  return result;
}

Matrix pairwise_distances(const Matrix& columns) {
  const auto n = columns.cols();
  Matrix dist = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = (columns.col(i) - columns.col(j)).norm();
    }
  }
  return dist;
}

}  // namespace

PerturbationSearch minmax_search(const UpdateBatch& benign) {
  if (benign.size() < 2) throw Error("min-max attack needs at least two benign updates");
  const Matrix columns = benign.as_matrix();
  const double bound = pairwise_distances(columns).maxCoeff();
  return perturbation_search(benign, bound, [&](const Vector& beta) {
    return (columns.colwise() - beta).colwise().norm().maxCoeff();
  });
}

PerturbationSearch minsum_search(const UpdateBatch& benign, bool stealthy) {
  if (benign.size() < 2) throw Error("min-sum attack needs at least two benign updates");
  const Matrix columns = benign.as_matrix();
  const Vector totals = pairwise_distances(columns).rowwise().sum();
  const double bound = stealthy ? totals.minCoeff() : totals.maxCoeff();
  return perturbation_search(benign, bound, [&](const Vector& beta) {
    return (columns.colwise() - beta).colwise().norm().sum();
  });
}

std::vector<LayeredUpdate> attack_minmax(const AttackContext& ctx) {
  return replicate(minmax_search(ctx.benign).update, ctx.benign.layout(), ctx.malicious_ids.size());
}

std::vector<LayeredUpdate> attack_minsum(const AttackContext& ctx, bool stealthy) {
  return replicate(minsum_search(ctx.benign, stealthy).update, ctx.benign.layout(),
                   ctx.malicious_ids.size());
}

// ---------------------------------------------------------------------------
// Tailored trimmed mean

std::vector<double> tailored_scale_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 8; ++i) grid.push_back(1.0 + 0.5 * i);
  return grid;
}

Vector tailored_trmean_update(const UpdateBatch& benign, double scale) {
  const Matrix columns = benign.as_matrix();
  const Vector mean = columns.rowwise().mean();
  const Vector lo = columns.rowwise().minCoeff();
  const Vector hi = columns.rowwise().maxCoeff();
  Vector out(columns.rows());
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    // Push against the benign direction, past the benign extreme.
    if (mean(j) >= 0.0) {
      out(j) = lo(j) > 0.0 ? lo(j) / scale : lo(j) * scale;
    } else {
      out(j) = hi(j) < 0.0 ? hi(j) / scale : hi(j) * scale;
    }
  }
  return out;
}

double tailored_objective(const UpdateBatch& benign, const Vector& malicious, std::size_t f, TrimParam trim) {
  std::vector<LayeredUpdate> all = benign.updates();
  for (std::size_t i = 0; i < f; ++i) all.emplace_back(malicious, benign.layout());
  const UpdateBatch batch(std::move(all));
  const auto avg = mean_update(batch);
  const auto trimmed = trimmed_mean(batch, trim).aggregate;
  return (avg.values() - trimmed.values()).norm();
}

std::vector<LayeredUpdate> attack_tailored_trmean(const AttackContext& ctx, TrimParam trim) {
  const auto f = ctx.malicious_ids.size();
  const auto total = ctx.benign.size() + f;
  trim.trim_count = std::min(trim.trim_count, (total - 1) / 2);
  Vector best;
  double best_objective = -1.0;
  for (double s : tailored_scale_grid()) {
    Vector candidate = tailored_trmean_update(ctx.benign, s);
    const double objective = tailored_objective(ctx.benign, candidate, f, trim);
    if (objective > best_objective) {
      best_objective = objective;
      best = std::move(candidate);
    }
  }
  return replicate(best, ctx.benign.layout(), f);
}

// ---------------------------------------------------------------------------
// Lie / ByzMean

std::vector<LayeredUpdate> attack_lie(const AttackContext& ctx, double z, bool over_all) {
  Matrix columns = ctx.benign.as_matrix();
  if (over_all) {
    const auto& honest = require_own_honest(ctx, "lie (over all clients)");
    Matrix extended(columns.rows(), columns.cols() + static_cast<Eigen::Index>(honest.size()));
    extended << columns, honest.as_matrix();
    columns = std::move(extended);
  }
  const Vector mu = columns.rowwise().mean();
  const Vector beta = mu - z * coordinate_stddev(columns);
  return replicate(beta, ctx.benign.layout(), ctx.malicious_ids.size());
}

std::vector<LayeredUpdate> attack_byzmean(const AttackContext& ctx, const AttackSpec& spec) {
  const auto f = ctx.malicious_ids.size();
  if (f < 2) throw Error("byzmean attack needs at least two malicious clients");
  if (spec.byzmean_base == AttackKind::kByzMean) throw Error("byzmean cannot be its own base attack");
  const std::size_t m1 = f / 2;
  const std::size_t m2 = f - m1;

  AttackContext first{ctx.benign,
                      std::vector<ClientId>(ctx.malicious_ids.begin(),
                                            ctx.malicious_ids.begin() + static_cast<std::ptrdiff_t>(m1)),
                      std::nullopt, ctx.seed};
  if (ctx.own_honest) {
    std::vector<LayeredUpdate> head(ctx.own_honest->updates().begin(),
                                    ctx.own_honest->updates().begin() + static_cast<std::ptrdiff_t>(m1));
    first.own_honest.emplace(std::move(head), first.malicious_ids);
  }
  AttackSpec base = spec;
  base.kind = spec.byzmean_base;
  auto out = generate_attack(first, base);

  Vector group_mean = Vector::Zero(static_cast<Eigen::Index>(ctx.benign.dimension()));
  for (const auto& u : out) group_mean += u.values();
  group_mean /= static_cast<double>(m1);
  Vector benign_sum = Vector::Zero(group_mean.size());
  for (const auto& u : ctx.benign.updates()) benign_sum += u.values();

  const auto n = static_cast<double>(ctx.benign.size() + f);
  const Vector second = ((n - static_cast<double>(m1)) * group_mean - benign_sum) / static_cast<double>(m2);
  for (std::size_t i = 0; i < m2; ++i) out.emplace_back(second, ctx.benign.layout());
  return out;
}

std::vector<LayeredUpdate> generate_attack(const AttackContext& ctx, const AttackSpec& spec) {
  if (ctx.malicious_ids.empty()) return {};
  switch (spec.kind) {
    case AttackKind::kRandom: return attack_random(ctx, spec.sigma);
    case AttackKind::kNoise: return attack_noise(ctx, spec.sigma);
    case AttackKind::kSignFlip: return attack_signflip(ctx);
    case AttackKind::kMinMax: return attack_minmax(ctx);
    case AttackKind::kMinSum: return attack_minsum(ctx, spec.stealthy);
    case AttackKind::kTailoredTrMean:
      return attack_tailored_trmean(ctx, {spec.tailored_trim.value_or(ctx.malicious_ids.size())});
    case AttackKind::kLie: return attack_lie(ctx, spec.z, spec.lie_over_all);
    case AttackKind::kByzMean: return attack_byzmean(ctx, spec);
  }
  throw Error("unhandled attack kind");
}

}  // namespace lasa
