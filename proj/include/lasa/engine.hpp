#pragma once

#include "lasa/aggregators.hpp"
#include "lasa/attacks.hpp"
#include "lasa/data.hpp"
#include "lasa/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lasa {

struct LocalTrainConfig {
  std::size_t tau = 1;
  double eta = 0.1;
  double momentum = 0.0;  ///< in [0, 1)
  double lr_decay = 1.0;  ///< per global round, in (0, 1]
  std::size_t batch_size = 32;
  std::optional<double> clip;  ///< per-step gradient L2 clip

  void validate() const;
  /// eta * lr_decay^round
  double learning_rate(std::size_t round) const;
};

struct LocalResult {
  LayeredUpdate update;  ///< theta_start - theta_end
  double mean_loss = 0.0;
  double max_grad_norm = 0.0;  ///< largest (post-clip) step gradient norm
};

/// tau steps of heavy-ball SGD (v = m v + g, theta -= eta v) on minibatches
/// drawn with replacement from the shard. The momentum buffer starts at zero.
/// `cfg.eta` is used as is; no decay is applied here.
LocalResult local_update(const ModelState& model, const Dataset& data, const ClientShard& shard,
                         const LocalTrainConfig& cfg, Rng& rng);

/// Full-batch gradient of one shard's mean loss.
LayeredUpdate shard_gradient(const ModelState& model, const Dataset& data, const ClientShard& shard);

// ---------------------------------------------------------------------------
// Experiment description

enum class DatasetKind { kSynthetic, kIdx };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynthetic;
  int classes = 10;
  std::size_t dim = 16;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double spread = 0.5;
  double separation = 3.0;
  double offset = 0.0;
  bool rotate = false;  // apply a fixed random orthogonal map to synthetic features
  std::string train_images, train_labels, test_images, test_labels;
};

struct PartitionSpec {
  bool dirichlet = false;
  double alpha = 0.5;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PartitionSpec partition;
  Architecture arch = Architecture::kLogReg;
  std::size_t hidden = 32;
  std::size_t n = 40;
  std::size_t h = 20;
  double attack_ratio = 0.25;
  std::size_t rounds = 150;
  LocalTrainConfig local;
  AggregatorSpec aggregator;
  std::optional<AttackSpec> attack;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  /// Record the benign-objective gradient norm at every round (costly).
  bool log_gradients = false;
  std::string label;  ///< free-form tag copied to reports

  void validate() const;
};

/// Data, shards and model shape an experiment runs on.
struct Environment {
  Dataset train;
  Dataset test;
  std::vector<ClientShard> shards;
  ModelShape shape;
};

Environment build_environment(const ExperimentConfig& cfg);

struct RoundRecord {
  std::size_t round = 0;
  std::vector<ClientId> sampled_ids;    ///< sorted
  std::vector<ClientId> malicious_ids;  ///< sampled and dishonest
  AggregationOutcome outcome;
  double test_accuracy = 0.0;
  double train_loss = 0.0;  ///< global model on the training set, after the update
  /// ||grad L_B(theta^t)||^2 before the update, when gradient logging is on.
  std::optional<double> benign_grad_norm_sq;
};

/// Samples h of n clients uniformly without replacement, sorted by id.
std::vector<ClientId> sample_clients(std::size_t n, std::size_t h, Rng& rng);

/// The federated loop over one environment. Deterministic in the config and
/// seed regardless of `jobs`.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig cfg, std::size_t jobs = 1);
  Simulation(ExperimentConfig cfg, Environment env, std::size_t jobs = 1);

  /// One global round: sample, train, attack, aggregate, apply, evaluate.
  RoundRecord step();
  std::vector<RoundRecord> run(const std::function<void(const RoundRecord&)>& on_round = {});

  const ModelState& model() const { return model_; }
  const Environment& environment() const { return env_; }
  const ExperimentConfig& config() const { return cfg_; }
  std::size_t round() const { return round_; }

 private:
  ExperimentConfig cfg_;
  Environment env_;
  ModelState model_;
  Aggregator aggregator_;
  std::size_t jobs_;
  std::size_t round_ = 0;
};

std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace lasa
