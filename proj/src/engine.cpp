#include "lasa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace lasa {

void LocalTrainConfig::validate() const {
  if (tau < 1) throw Error("local.tau must be >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error("local.eta must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("local.momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error("local.lr_decay must lie in (0, 1]");
  if (batch_size < 1) throw Error("local.batch_size must be >= 1");
  if (clip && !(*clip > 0.0)) throw Error("local.clip must be positive");
}

double LocalTrainConfig::learning_rate(std::size_t round) const {
  return eta * std::pow(lr_decay, static_cast<double>(round));
}

LocalResult local_update(const ModelState& model, const Dataset& data, const ClientShard& shard,
                         const LocalTrainConfig& cfg, Rng& rng) {
  if (shard.indices.empty()) throw Error("client " + std::to_string(shard.client_id) + " has an empty shard");
  const Eigen::Index dim = static_cast<Eigen::Index>(model.params.dimension());
  std::uniform_int_distribution<std::size_t> pick(0, shard.indices.size() - 1);
  std::vector<std::size_t> batch(cfg.batch_size);

  ModelState local = model;
  Vector delta = Vector::Zero(dim);
  Vector velocity = Vector::Zero(dim);
  LocalResult result{LayeredUpdate::zeros(model.params.layout()), 0.0, 0.0};

  for (std::size_t s = 0; s < cfg.tau; ++s) {
    for (auto& b : batch) b = shard.indices[pick(rng)];
    const Matrix x = data.gather_features(batch);
    const std::vector<int> y = data.gather_labels(batch);
    auto [loss, grad] = forward_backward(local, x, y);
    Vector g = grad.values();
    const double norm = g.norm();
    if (cfg.clip && norm > *cfg.clip) g *= *cfg.clip / norm;
    result.max_grad_norm = std::max(result.max_grad_norm, std::min(norm, cfg.clip.value_or(norm)));
    result.mean_loss += loss / static_cast<double>(cfg.tau);

    velocity = cfg.momentum * velocity + g;
    delta += cfg.eta * velocity;
    local.params = LayeredUpdate(model.params.values() - delta, model.params.layout());
  }
  result.update = LayeredUpdate(std::move(delta), model.params.layout());
  return result;
}

LayeredUpdate shard_gradient(const ModelState& model, const Dataset& data, const ClientShard& shard) {
  const Matrix x = data.gather_features(shard.indices);
  const std::vector<int> y = data.gather_labels(shard.indices);
  return forward_backward(model, x, y).gradient;
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (n < 1) throw Error("clients.n must be >= 1");
  if (h < 1 || h > n) throw Error("clients.h must satisfy 1 <= h <= n");
  if (!(attack_ratio >= 0.0 && attack_ratio < 0.5)) {
    throw Error("clients.attack_ratio must lie in [0, 0.5): f < n/2 is required");
  }
  if (partition.dirichlet && !(partition.alpha > 0.0)) throw Error("partition.alpha must be positive");
  if (dataset.kind == DatasetKind::kSynthetic) {
    if (dataset.classes < 2) throw Error("dataset.classes must be >= 2");
    if (dataset.dim < static_cast<std::size_t>(dataset.classes)) throw Error("dataset.dim must be >= dataset.classes");
    if (dataset.train_per_class == 0 || dataset.test_per_class == 0) throw Error("dataset sample counts must be >= 1");
    if (!(dataset.spread >= 0.0)) throw Error("dataset.spread must be nonnegative");
  } else if (dataset.train_images.empty() || dataset.train_labels.empty() || dataset.test_images.empty() ||
             dataset.test_labels.empty()) {
    throw Error("dataset: idx needs train_images, train_labels, test_images and test_labels");
  }
  if (arch == Architecture::kMlp2 && hidden == 0) throw Error("model.hidden must be >= 1");
  local.validate();
  aggregator.lasa.validate();
  if (attack && attack_ratio == 0.0) throw Error("attack given but clients.attack_ratio is 0");
}

Environment build_environment(const ExperimentConfig& cfg) {
  cfg.validate();
  Environment env;
  const auto& ds = cfg.dataset;
  if (ds.kind == DatasetKind::kSynthetic) {
    env.train = synth_gaussian_mixture(ds.classes, ds.dim, ds.train_per_class, ds.spread,
                                       derive_seed(cfg.seed, {stream::kDataset}), ds.separation, ds.offset);
    env.test = synth_gaussian_mixture(ds.classes, ds.dim, ds.test_per_class, ds.spread,
                                      derive_seed(cfg.seed, {stream::kTestSet}), ds.separation, ds.offset);
    if (ds.rotate) {
      const Matrix q = random_rotation(ds.dim, derive_seed(cfg.seed, {stream::kDataset, 1}));
      rotate_features(env.train, q);
      rotate_features(env.test, q);
    }
  } else {
    env.train = load_idx(ds.train_images, ds.train_labels);
    env.test = load_idx(ds.test_images, ds.test_labels);
    if (env.train.dim() != env.test.dim()) throw Error("train and test feature dimensions differ");
  }
  if (env.train.size() < cfg.n) throw Error("fewer training samples than clients");
  auto shards = cfg.partition.dirichlet ? partition_dirichlet(env.train, cfg.n, cfg.partition.alpha, cfg.seed)
                                        : partition_iid(env.train, cfg.n, cfg.seed);
  env.shards = mark_malicious(std::move(shards), cfg.attack_ratio, cfg.seed);
  env.shape = ModelShape{cfg.arch, env.train.dim(), cfg.arch == Architecture::kMlp2 ? cfg.hidden : 0,
                         static_cast<std::size_t>(std::max(env.train.num_classes, env.test.num_classes))};
  return env;
}

std::vector<ClientId> sample_clients(std::size_t n, std::size_t h, Rng& rng) {
  if (h > n) throw Error("cannot sample more clients than exist");
  std::vector<ClientId> ids(n);
  std::iota(ids.begin(), ids.end(), ClientId{0});
  for (std::size_t i = 0; i < h; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(h);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

AggregatorSpec resolved_spec(const ExperimentConfig& cfg) {
  cfg.validate();
  return cfg.aggregator;
}

ModelState initial_model(const ExperimentConfig& cfg, const ModelShape& shape) {
  auto rng = make_rng(cfg.seed, {stream::kInit});
  return ModelState::random(shape, rng);
}

double dataset_loss(const ModelState& model, const Dataset& ds) {
  return forward_backward(model, ds.features, ds.labels).loss;
}

}  // namespace

Simulation::Simulation(ExperimentConfig cfg, std::size_t jobs)
    : Simulation(cfg, build_environment(cfg), jobs) {}

Simulation::Simulation(ExperimentConfig cfg, Environment env, std::size_t jobs)
    : cfg_(std::move(cfg)),
      env_(std::move(env)),
      model_(initial_model(cfg_, env_.shape)),
      aggregator_(resolved_spec(cfg_)),
      jobs_(std::max<std::size_t>(1, jobs)) {}

RoundRecord Simulation::step() {
  const std::size_t t = round_;
  RoundRecord rec;
  rec.round = t;
  auto sampling = make_rng(cfg_.seed, {stream::kSampling, t});
  rec.sampled_ids = sample_clients(cfg_.n, cfg_.h, sampling);

  if (cfg_.log_gradients) {
    const Eigen::Index dim = static_cast<Eigen::Index>(model_.params.dimension());
    Vector sum = Vector::Zero(dim);
    std::size_t honest = 0;
    for (const auto& shard : env_.shards) {
      if (!shard.honest) continue;
      sum += shard_gradient(model_, env_.train, shard).values();
      ++honest;
    }
    rec.benign_grad_norm_sq = honest ? (sum / static_cast<double>(honest)).squaredNorm() : 0.0;
  }

  // Every sampled client trains honestly first; dishonest ones then swap in
  // the crafted update.
  LocalTrainConfig local = cfg_.local;
  local.eta = cfg_.local.learning_rate(t);
  std::vector<std::optional<LayeredUpdate>> honest_updates(rec.sampled_ids.size());
  parallel_for(rec.sampled_ids.size(), jobs_, [&](std::size_t i) {
    const ClientId id = rec.sampled_ids[i];
    auto rng = make_rng(cfg_.seed, {stream::kLocalTrain, t, id});
    honest_updates[i] = local_update(model_, env_.train, env_.shards[id], local, rng).update;
  });

  std::vector<LayeredUpdate> benign, own;
  std::vector<ClientId> benign_ids;
  for (std::size_t i = 0; i < rec.sampled_ids.size(); ++i) {
    const ClientId id = rec.sampled_ids[i];
    if (cfg_.attack && !env_.shards[id].honest) {
      rec.malicious_ids.push_back(id);
      own.push_back(*honest_updates[i]);
    } else {
      benign.push_back(*honest_updates[i]);
      benign_ids.push_back(id);
    }
  }

  std::vector<LayeredUpdate> submitted;
  if (!rec.malicious_ids.empty()) {
    if (benign.empty()) throw Error("round " + std::to_string(t) + " sampled no benign client");
    const UpdateBatch benign_batch(benign, benign_ids);
    AttackSpec spec = *cfg_.attack;
    if (spec.kind == AttackKind::kByzMean && rec.malicious_ids.size() < 2) spec.kind = spec.byzmean_base;
    AttackContext ctx{benign_batch, rec.malicious_ids, UpdateBatch(own, rec.malicious_ids),
                      derive_seed(cfg_.seed, {stream::kAttack, t})};
    auto crafted = generate_attack(ctx, spec);
    std::size_t b = 0, m = 0;
    for (auto id : rec.sampled_ids) {
      const bool malicious = m < rec.malicious_ids.size() && rec.malicious_ids[m] == id;
      submitted.push_back(malicious ? std::move(crafted[m++]) : std::move(benign[b++]));
    }
  } else {
    submitted = std::move(benign);
  }

  const UpdateBatch batch(std::move(submitted), rec.sampled_ids);
  rec.outcome = aggregator_(batch);
  model_.params = LayeredUpdate(model_.params.values() - rec.outcome.aggregate.values(), model_.params.layout());

  rec.test_accuracy = accuracy(model_, env_.test.features, env_.test.labels);
  rec.train_loss = dataset_loss(model_, env_.train);
  ++round_;
  return rec;
}

std::vector<RoundRecord> Simulation::run(const std::function<void(const RoundRecord&)>& on_round) {
  std::vector<RoundRecord> records;
  records.reserve(cfg_.rounds);
  while (round_ < cfg_.rounds) {
    records.push_back(step());
    if (on_round) on_round(records.back());
  }
  return records;
}

std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  Simulation sim(cfg, jobs);
  return sim.run();
}

}  // namespace lasa
