// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "lasa/aggregators.hpp"
#include "lasa/attacks.hpp"
#include "lasa/config.hpp"
#include "lasa/metrics.hpp"
#include "lasa/model.hpp"
#include "lasa/report.hpp"
#include "lasa/sparsify.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lasa;

namespace {

// Tolerances and budgets, pinned.
constexpr double kEnergyRelTol = 1e-10;
constexpr double kOracleTol = 1e-10;
constexpr double kFiniteDiffTol = 1e-5;
constexpr double kFiniteDiffStep = 1e-5;
constexpr double kFiniteDiffFloor = 1e-6;  // gradients below this are compared absolutely
constexpr double kByzMeanTol = 1e-10;
constexpr double kConstraintSlack = 1e-4;
constexpr double kFedAvgDrop = 0.30;
constexpr double kLasaBand = 0.03;
constexpr double kMinTpr = 0.9;
constexpr double kMaxFpr = 0.1;
constexpr double kSweepGap = 0.02;
constexpr double kGeomedTol = 1e-6;

struct Result {
  bool pass = false;
  std::string detail;
};

int failures = 0;

template <typename Fn>
void criterion(int id, const char* name, double budget_s, Fn&& body) {
  const auto start = std::chrono::steady_clock::now();
  Result r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (elapsed > budget_s) {
    r.pass = false;
    r.detail += "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
  }
  failures += !r.pass;
  std::printf("%s %2d %-28s %s (%.1f s)\n", r.pass ? "PASS" : "FAIL", id, name, r.detail.c_str(), elapsed);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1

Result energy_identity() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> dim(1, 64);
  std::lognormal_distribution<double> scale(0.0, 3.0);
  std::normal_distribution<double> normal;
  double worst = 0.0, worst_sum = 0.0;
  for (int v = 0; v < 1000; ++v) {
    Vector x(dim(rng));
    const double s = scale(rng);
    for (auto& e : x) e = s * normal(rng);
    const double total = x.squaredNorm();
    for (std::size_t k = 0; k <= static_cast<std::size_t>(x.size()); ++k) {
      const Vector kept = top_k(x, k);
      const double split = kept.squaredNorm() + (kept - x).squaredNorm();
      worst = std::max(worst, std::abs(split - total) / total);
      const EnergySplit e = energy_split(x, k);
      worst_sum = std::max(worst_sum, std::abs(e.c_k + e.b_k - 1.0));
    }
  }
  return {worst <= kEnergyRelTol && worst_sum <= kEnergyRelTol,
          "max rel err " + fmt("%.2e", worst) + ", max |c_k+b_k-1| " + fmt("%.2e", worst_sum)};
}

// ---------------------------------------------------------------------------
// 2: straight-line trace on plain std::vector, nothing shared with the library

struct TraceOut {
  std::vector<double> aggregate;
  std::vector<std::vector<std::size_t>> selected;
};

TraceOut lasa_trace(const std::vector<std::vector<double>>& clients, const std::vector<std::size_t>& layer_dims,
                    double level, double lambda_m, double lambda_d) {
  const std::size_t n = clients.size();
  const std::size_t d = clients[0].size();
  double raw = std::floor((1.0 - level) * static_cast<double>(d) + 0.5);
  std::size_t k = raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
  if (k > d) k = d;

  std::vector<std::vector<double>> sparse(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order(d);
    for (std::size_t j = 0; j < d; ++j) order[j] = j;
    for (std::size_t a = 1; a < d; ++a) {
      // insertion sort by |value| descending, lower index first on ties
      std::size_t b = a;
      while (b > 0) {
        const double lhs = std::fabs(clients[i][order[b]]);
        const double rhs = std::fabs(clients[i][order[b - 1]]);
        if (lhs > rhs || (lhs == rhs && order[b] < order[b - 1])) {
          std::swap(order[b], order[b - 1]);
          --b;
        } else {
          break;
        }
      }
    }
    for (std::size_t r = 0; r < k; ++r) sparse[i][order[r]] = clients[i][order[r]];
  }

  auto scores = [n](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    const double sigma = std::sqrt(sq / static_cast<double>(n));
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double med = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    std::vector<double> out(n, 0.0);
    if (sigma > 0.0)
      for (std::size_t i = 0; i < n; ++i) out[i] = (v[i] - med) / sigma;
    return out;
  };

  TraceOut out;
  out.aggregate.assign(d, 0.0);
  std::size_t offset = 0;
  for (std::size_t len : layer_dims) {
    std::vector<double> norm(n), dir(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      int pos = 0, neg = 0;
      for (std::size_t j = offset; j < offset + len; ++j) {
        sq += sparse[i][j] * sparse[i][j];
        if (sparse[i][j] > 0) ++pos;
        if (sparse[i][j] < 0) ++neg;
      }
      norm[i] = std::sqrt(sq);
      dir[i] = pos + neg == 0 ? 0.5 : static_cast<double>(pos) / (pos + neg);
    }
    const auto ms = scores(norm), ds = scores(dir);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
      if (std::fabs(ms[i]) <= lambda_m && std::fabs(ds[i]) <= lambda_d) keep.push_back(i);
    if (keep.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i) {
        const double cand = std::max(std::fabs(ms[i]), std::fabs(ds[i]));
        const double incumbent = std::max(std::fabs(ms[best]), std::fabs(ds[best]));
        if (cand < incumbent * (1.0 - 1e-12))
          best = i;
      }
      keep.push_back(best);
    }
    for (std::size_t j = offset; j < offset + len; ++j) {
      double s = 0.0;
      for (auto i : keep) s += sparse[i][j];
      out.aggregate[j] = s / static_cast<double>(keep.size());
    }
    out.selected.push_back(keep);
    offset += len;
  }
  return out;
}

Result oracle_equivalence() {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> clients_n(1, 8), layers_n(1, 3), dim_n(1, 6);
  std::uniform_real_distribution<double> radius(0.2, 3.0);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution rare(0.25);
  const double levels[] = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
  std::uniform_int_distribution<int> level_pick(0, 6);
  double worst = 0.0;
  int selection_mismatch = 0, fallbacks = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = clients_n(rng);
    std::vector<std::pair<std::string, std::size_t>> spec;
    std::vector<std::size_t> dims;
    for (int l = 0; l < layers_n(rng); ++l) {
      dims.push_back(static_cast<std::size_t>(dim_n(rng)));
      spec.emplace_back("l" + std::to_string(l), dims.back());
    }
    const Layout layout = Layout::from_lengths(spec);
    const std::size_t d = layout.dimension();
    std::vector<std::vector<double>> raw(static_cast<std::size_t>(n), std::vector<double>(d));
    std::vector<LayeredUpdate> updates;
    for (auto& c : raw) {
      const double s = rare(rng) ? 20.0 : 1.0;
      const double flip = rare(rng) ? -1.0 : 1.0;
      for (auto& x : c) x = flip * s * (0.5 + normal(rng));
      updates.emplace_back(Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(d)), layout);
    }
    const double level = levels[level_pick(rng)];
    const double lm = radius(rng), ld = radius(rng);

    const AggregationOutcome got = lasa::lasa(UpdateBatch(updates), LasaParams{SparsificationLevel(level), lm, ld});
    const TraceOut want = lasa_trace(raw, dims, level, lm, ld);
    for (std::size_t j = 0; j < d; ++j) {
      const double scale = std::max(1.0, std::fabs(want.aggregate[j]));
      worst = std::max(worst, std::fabs(got.aggregate.values()(static_cast<Eigen::Index>(j)) - want.aggregate[j]) / scale);
    }
    for (std::size_t l = 0; l < dims.size(); ++l) {
      std::vector<std::size_t> ids(got.selected[l].begin(), got.selected[l].end());
      selection_mismatch += ids != want.selected[l];
      fallbacks += want.selected[l].size() == 1 && n > 1;
    }
  }
  return {worst <= kOracleTol && selection_mismatch == 0,
          "max err " + fmt("%.2e", worst) + ", selection mismatches " + std::to_string(selection_mismatch) +
              ", single-member layers " + std::to_string(fallbacks)};
}

// ---------------------------------------------------------------------------
// 3

Result kappa_robustness(const ConfigDocument& doc) {
  std::string detail;
  bool pass = true;
  for (auto kind : {AttackKind::kLie, AttackKind::kSignFlip, AttackKind::kRandom}) {
    KappaScenario sc;
    sc.n = 10;
    sc.f = 2;
    sc.attack = AttackSpec{.kind = kind};
    const KappaReport r = estimate_kappa(doc.base.aggregator, sc, 200, 3003);
    std::size_t checked = 0, within = 0;
    for (const auto& t : r.trials) {
      if (!t.preconditions()) continue;
      ++checked;
      within += t.within_bound();
    }
    pass = pass && within == checked && checked > 0;
    detail += std::string(attack_key(kind)) + " " + std::to_string(within) + "/" + std::to_string(checked) +
              " (" + std::to_string(r.trials.size() - checked) + " outside preconditions, kappa " + fmt("%.3g", r.empirical_kappa) + " <= " + fmt("%.3g", r.bound) + "), ";
  }
  KappaScenario clean;
  clean.f = 0;
  AggregatorSpec mean_like;
  mean_like.lasa = {SparsificationLevel(0.0), 1e12, 1e12};
  const double zero = estimate_kappa(mean_like, clean, 200, 3004).empirical_kappa;
  pass = pass && zero <= 1e-12;
  detail += "f=0 huge radii kappa " + fmt("%.2e", zero);
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 4

Result finite_differences() {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<std::size_t> inputs(2, 8), hidden(2, 6), classes(2, 5), rows(1, 10);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (auto arch : {Architecture::kLogReg, Architecture::kMlp2}) {
    for (int state = 0; state < 50; ++state) {
      const ModelShape shape{arch, inputs(rng), arch == Architecture::kMlp2 ? hidden(rng) : 0, classes(rng)};
      ModelState m = ModelState::random(shape, rng);
      Vector p = m.params.values();
      for (auto& x : p) x += 0.3 * normal(rng);
      m.params = LayeredUpdate(p, shape.layout());
      Matrix x(static_cast<Eigen::Index>(rows(rng)), static_cast<Eigen::Index>(shape.inputs));
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      std::vector<int> y(static_cast<std::size_t>(x.rows()));
      std::uniform_int_distribution<int> label(0, static_cast<int>(shape.classes) - 1);
      for (auto& v : y) v = label(rng);

      const Vector grad = forward_backward(m, x, y).gradient.values();
      std::uniform_int_distribution<Eigen::Index> coord(0, grad.size() - 1);
      auto loss = [&](const Vector& q) {
        ModelState probe = m;
        probe.params = LayeredUpdate(q, shape.layout());
        return forward_backward(probe, x, y).loss;
      };
      for (int c = 0; c < 20; ++c) {
        const Eigen::Index j = coord(rng);
        Vector plus = p, minus = p;
        plus(j) += kFiniteDiffStep;
        minus(j) -= kFiniteDiffStep;
        const double fd = (loss(plus) - loss(minus)) / (2 * kFiniteDiffStep);
        const double denom = std::max({std::fabs(fd), std::fabs(grad(j)), kFiniteDiffFloor});
        worst = std::max(worst, std::fabs(fd - grad(j)) / denom);
      }
    }
  }
  return {worst <= kFiniteDiffTol, "max rel err " + fmt("%.2e", worst) + " over 2 x 50 states x 20 coordinates"};
}

// ---------------------------------------------------------------------------
// 5

UpdateBatch random_updates(std::mt19937_64& rng, std::size_t count, const Layout& layout, ClientId first) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(0.1, 5.0);
  std::vector<LayeredUpdate> out;
  std::vector<ClientId> ids;
  for (std::size_t i = 0; i < count; ++i) {
    Vector v(static_cast<Eigen::Index>(layout.dimension()));
    const double s = scale(rng);
    for (auto& x : v) x = s * normal(rng);
    out.emplace_back(v, layout);
    ids.push_back(first + i);
  }
  return UpdateBatch(std::move(out), std::move(ids));
}

double pair_max(const UpdateBatch& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m = std::max(m, (b[i].values() - b[j].values()).norm());
  return m;
}

Result attack_identities() {
  std::mt19937_64 rng(5005);
  const Layout layout = Layout::from_lengths({{"w", 20}, {"b", 4}});
  double worst_mean = 0.0;
  int configs = 0;
  for (std::size_t n : {8u, 12u, 20u}) {
    for (std::size_t f : {2u, 3u, 5u}) {
      for (auto base : {AttackKind::kLie, AttackKind::kSignFlip, AttackKind::kRandom, AttackKind::kMinMax}) {
        const UpdateBatch benign = random_updates(rng, n - f, layout, 0);
        std::vector<ClientId> mal(f);
        std::iota(mal.begin(), mal.end(), ClientId{100});
        const UpdateBatch own = random_updates(rng, f, layout, 100);
        AttackSpec spec{.kind = AttackKind::kByzMean};
        spec.byzmean_base = base;
        const auto crafted = generate_attack(AttackContext{benign, mal, own, rng()}, spec);
        Vector total = Vector::Zero(static_cast<Eigen::Index>(layout.dimension()));
        for (const auto& u : benign.updates()) total += u.values();
        for (const auto& u : crafted) total += u.values();
        const Vector mean_all = total / static_cast<double>(n);
        Vector group = Vector::Zero(total.size());
        for (std::size_t i = 0; i < f / 2; ++i) group += crafted[i].values();
        group /= static_cast<double>(f / 2);
        worst_mean = std::max(worst_mean, (mean_all - group).norm() / std::max(1.0, group.norm()));
        ++configs;
      }
    }
  }

  double worst_minmax = 0.0, worst_minsum = 0.0;
  std::uniform_int_distribution<std::size_t> count(2, 12);
  for (int inst = 0; inst < 100; ++inst) {
    const UpdateBatch benign = random_updates(rng, count(rng), layout, 0);
    const AttackContext ctx{benign, {50, 51}, std::nullopt, 0};
    const Vector mm = attack_minmax(ctx)[0].values();
    double far = 0.0;
    for (const auto& u : benign.updates()) far = std::max(far, (mm - u.values()).norm());
    const double bound = pair_max(benign);
    worst_minmax = std::max(worst_minmax, (far - bound) / std::max(bound, 1e-300));

    const Vector ms = attack_minsum(ctx)[0].values();
    double sum = 0.0, sum_bound = 0.0;
    for (const auto& u : benign.updates()) sum += (ms - u.values()).norm();
    for (const auto& a : benign.updates()) {
      double s = 0.0;
      for (const auto& b : benign.updates()) s += (a.values() - b.values()).norm();
      sum_bound = std::max(sum_bound, s);
    }
    worst_minsum = std::max(worst_minsum, (sum - sum_bound) / std::max(sum_bound, 1e-300));
  }
  const bool pass = worst_mean <= kByzMeanTol && worst_minmax <= kConstraintSlack && worst_minsum <= kConstraintSlack;
  return {pass, "byzmean max err " + fmt("%.2e", worst_mean) + " over " + std::to_string(configs) +
                    " configs; min-max excess " + fmt("%.2e", std::max(0.0, worst_minmax)) + ", min-sum excess " +
                    fmt("%.2e", std::max(0.0, worst_minsum)) + " (relative)"};
}

// ---------------------------------------------------------------------------
// 6 and 7

struct DeskRun {
  std::string name;
  ExperimentConfig cfg;
  std::vector<RoundRecord> records;
};

std::vector<DeskRun> desk_runs(const ExperimentConfig& base) {
  std::vector<DeskRun> runs;
  auto add = [&](std::string name, auto edit) {
    ExperimentConfig c = base;
    edit(c);
    runs.push_back({std::move(name), std::move(c), {}});
  };
  add("fedavg/none", [](ExperimentConfig& c) {
    c.aggregator.kind = AggregatorKind::kFedAvg;
    c.attack.reset();
  });
  add("fedavg/byzmean", [](ExperimentConfig& c) {
    c.aggregator.kind = AggregatorKind::kFedAvg;
    c.attack = AttackSpec{.kind = AttackKind::kByzMean};
  });
  add("lasa/none", [](ExperimentConfig& c) { c.attack.reset(); });
  for (auto kind : {AttackKind::kRandom, AttackKind::kNoise, AttackKind::kSignFlip, AttackKind::kLie,
                    AttackKind::kByzMean, AttackKind::kMinMax, AttackKind::kMinSum, AttackKind::kTailoredTrMean}) {
    add("lasa/" + std::string(attack_key(kind)), [kind](ExperimentConfig& c) { c.attack = AttackSpec{.kind = kind}; });
  }
  for (auto& r : runs) r.records = run_experiment(r.cfg);
  return runs;
}

const DeskRun& find(const std::vector<DeskRun>& runs, const std::string& name) {
  for (const auto& r : runs)
    if (r.name == name) return r;
  throw Error("missing desk run " + name);
}

Result desk_pattern(const std::vector<DeskRun>& runs) {
  const double fn = find(runs, "fedavg/none").records.back().test_accuracy;
  const double fb = find(runs, "fedavg/byzmean").records.back().test_accuracy;
  const double ln = find(runs, "lasa/none").records.back().test_accuracy;
  bool pass = fn - fb >= kFedAvgDrop;
  std::string detail = "fedavg " + fmt("%.3f", fn) + " -> byzmean " + fmt("%.3f", fb) + "; lasa none " + fmt("%.3f", ln);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : runs) {
    if (r.name.rfind("lasa/", 0) != 0 || r.name == "lasa/none") continue;
    const double gap = ln - r.records.back().test_accuracy;
    if (gap > worst || worst_name.empty()) {
      worst = gap;
      worst_name = r.name.substr(5);
    }
    pass = pass && gap <= kLasaBand;
  }
  detail += ", largest shortfall " + fmt("%.3f", worst) + " (" + worst_name + ")";
  return {pass, detail};
}

Result filtering_quality(const std::vector<DeskRun>& runs) {
  const auto& records = find(runs, "lasa/byzmean").records;
  const std::size_t tail = std::min<std::size_t>(50, records.size());
  double tpr = 0.0, fpr = 0.0;
  std::size_t tpr_rounds = 0, fpr_rounds = 0;
  for (std::size_t t = records.size() - tail; t < records.size(); ++t) {
    const FilterStats s = filter_stats(records[t]);
    if (s.malicious_pairs) {
      tpr += s.tpr;
      ++tpr_rounds;
    }
    if (s.benign_pairs) {
      fpr += s.fpr;
      ++fpr_rounds;
    }
  }
  tpr = tpr_rounds ? tpr / static_cast<double>(tpr_rounds) : 0.0;
  fpr = fpr_rounds ? fpr / static_cast<double>(fpr_rounds) : 0.0;
  return {tpr >= kMinTpr && fpr <= kMaxFpr, "mean TPR " + fmt("%.3f", tpr) + ", mean FPR " + fmt("%.3f", fpr) +
                                                " over the last " + std::to_string(tail) + " rounds"};
}

// ---------------------------------------------------------------------------
// 8

Result sparsification_sweep(const ConfigDocument& doc) {
  const std::vector<double> expected{0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
  if (doc.runs.size() != expected.size()) return {false, "sweep config must hold six levels"};
  std::vector<double> acc;
  std::string detail = "acc";
  for (std::size_t i = 0; i < doc.runs.size(); ++i) {
    const auto& cfg = doc.runs[i];
    if (std::abs(cfg.aggregator.lasa.sparsification.value() - expected[i]) > 1e-12 || !cfg.attack ||
        cfg.attack->kind != AttackKind::kByzMean)
      return {false, "sweep config is not the ByzMean level grid"};
    acc.push_back(run_experiment(cfg).back().test_accuracy);
    detail += " " + fmt("%.3f", acc.back());
  }
  const bool rising = std::is_sorted(acc.begin(), acc.end());
  const bool falling = std::is_sorted(acc.rbegin(), acc.rend());
  const double best = *std::max_element(acc.begin(), acc.end());
  const double gap = best - acc.back();
  detail += "; max - acc(0.99) = " + fmt("%.3f", gap) + (rising || falling ? ", monotone" : ", non-monotone");
  return {!rising && !falling && gap >= kSweepGap, detail};
}

// ---------------------------------------------------------------------------
// 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Result determinism(const fs::path& grid_config) {
  const fs::path work = fs::temp_directory_path() / "lasa_acceptance_determinism";
  fs::remove_all(work);
  fs::create_directories(work);
  std::ifstream in(grid_config);
  nlohmann::json doc = nlohmann::json::parse(in);
  doc["rounds"] = 15;
  {
    std::ofstream out(work / "grid.json");
    out << doc.dump(2);
  }
  const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 4}};
  for (const auto& [tag, jobs] : runs) {
    const std::string cmd = std::string("\"") + LASA_SIM_PATH + "\" run \"" + (work / "grid.json").string() +
                            "\" --out \"" + (work / tag).string() + "\" --jobs " + std::to_string(jobs) +
                            " > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "lasa_sim exited nonzero for " + tag};
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "a")) {
    if (entry.path().filename() != "rounds.csv") continue;
    const fs::path rel = fs::relative(entry.path(), work / "a");
    const std::string ref = slurp(entry.path());
    ++files;
    differing += ref.empty() || ref != slurp(work / "b" / rel) || ref != slurp(work / "c" / rel);
  }
  fs::remove_all(work);
  return {files > 0 && differing == 0, std::to_string(files) + " CSVs compared across 2 serial runs and --jobs 4, " +
                                           std::to_string(differing) + " differ"};
}

// ---------------------------------------------------------------------------
// 10

Result baseline_sanity() {
  std::mt19937_64 rng(1010);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> count(1, 15);
  const Layout layout = Layout::from_lengths({{"w", 7}, {"b", 2}});
  int trim_mismatch = 0;
  for (int i = 0; i < 100; ++i) {
    const UpdateBatch b = random_updates(rng, count(rng), layout, 0);
    trim_mismatch += trimmed_mean(b, TrimParam{0}).aggregate.values() != fedavg(b).aggregate.values();
  }

  double worst_geomed = 0.0;
  std::uniform_int_distribution<int> odd(0, 7);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = static_cast<std::size_t>(2 * odd(rng) + 1);
    std::vector<LayeredUpdate> pts;
    std::vector<double> values;
    for (std::size_t j = 0; j < n; ++j) {
      values.push_back(3.0 * normal(rng));
      pts.emplace_back(Vector::Constant(1, values.back()), Layout::single(1));
    }
    std::sort(values.begin(), values.end());
    const double med = values[n / 2];
    const double spread = std::max(1.0, values.back() - values.front());
    const double got = geometric_median(UpdateBatch(pts)).aggregate.values()(0);
    worst_geomed = std::max(worst_geomed, std::abs(got - med) / spread);
  }

  int outlier_picked = 0;
  for (int i = 0; i < 100; ++i) {
    UpdateBatch clustered = random_updates(rng, 5, layout, 0);
    std::vector<LayeredUpdate> all = clustered.updates();
    Vector far(static_cast<Eigen::Index>(layout.dimension()));
    for (auto& x : far) x = 1000.0 + normal(rng);
    const std::size_t slot = static_cast<std::size_t>(rng() % 6);
    all.insert(all.begin() + static_cast<std::ptrdiff_t>(slot), LayeredUpdate(far, layout));
    std::vector<ClientId> ids(6);
    std::iota(ids.begin(), ids.end(), ClientId{0});
    const auto out = multi_krum(UpdateBatch(all, ids), 1, 5);
    for (const auto& layer : out.selected)
      outlier_picked += std::find(layer.begin(), layer.end(), static_cast<ClientId>(slot)) != layer.end();
  }
  return {trim_mismatch == 0 && worst_geomed <= kGeomedTol && outlier_picked == 0,
          "trmean(b=0) != fedavg in " + std::to_string(trim_mismatch) + "/100, geomed vs median max " +
              fmt("%.2e", worst_geomed) + ", multi-krum picked the outlier " + std::to_string(outlier_picked) + "/100"};
}

}  // namespace

int main() {
  const fs::path configs = fs::path(LASA_SOURCE_DIR) / "tools" / "configs";
  const ConfigDocument desk = load_config_document((configs / "desk_lasa_byzmean.json").string());

  criterion(1, "energy identity", 5, energy_identity);
  criterion(2, "lasa oracle equivalence", 10, oracle_equivalence);
  criterion(3, "kappa robustness", 120, [&] { return kappa_robustness(desk); });
  criterion(4, "finite differences", 30, finite_differences);
  criterion(5, "attack identities", 30, attack_identities);

  std::vector<DeskRun> runs;
  const auto start = std::chrono::steady_clock::now();
  std::string desk_error;
  try {
    runs = desk_runs(desk.base);
  } catch (const std::exception& e) {
    desk_error = e.what();
  }
  const double desk_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  criterion(6, "desk-scale attack table", 600 - desk_seconds, [&]() -> Result {
    if (!desk_error.empty()) return {false, "exception: " + desk_error};
    Result r = desk_pattern(runs);
    r.detail += "; 11 runs in " + fmt("%.1f", desk_seconds) + " s";
    return r;
  });
  criterion(7, "filtering quality", 600, [&]() -> Result {
    if (!desk_error.empty()) return {false, "exception: " + desk_error};
    return filtering_quality(runs);
  });
  criterion(8, "sparsification sweep", 900, [&] {
    return sparsification_sweep(load_config_document((configs / "desk_sl_sweep.json").string()));
  });
  criterion(9, "determinism", 60, [&] { return determinism(configs / "desk_lasa_attack_grid.json"); });
  criterion(10, "baseline sanity", 10, baseline_sanity);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
