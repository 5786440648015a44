#include "lasa/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace lasa {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error("config: '" + path + "' " + what);
}

/// Typed access to one JSON object that remembers which keys were read.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) fail(path_, "must be an object");
  }

  bool empty() const { return !node_ || node_->empty(); }

  Section sub(const std::string& key) { return Section(get(key), at(key)); }

  double real(const std::string& key, double fallback) { return get(key) ? number(key) : fallback; }
  std::size_t count(const std::string& key, std::size_t fallback) { return get(key) ? unsigned_int(key) : fallback; }
  bool flag(const std::string& key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(at(key), "expects a boolean");
    return v->get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(at(key), "expects a string");
    return v->get<std::string>();
  }
  std::optional<double> optional_real(const std::string& key) {
    if (!get(key)) return std::nullopt;
    return number(key);
  }
  std::optional<std::size_t> optional_count(const std::string& key) {
    if (!get(key)) return std::nullopt;
    return unsigned_int(key);
  }
  /// Marks a key as known without reading it.
  void skip(const std::string& key) { seen_.insert(key); }

  /// Errors on any key that was never read.
  void finish() const {
    if (!node_) return;
    for (const auto& item : node_->items()) {
      if (!seen_.count(item.key())) fail(at(item.key()), "is not a recognised key");
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json* get(const std::string& key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    const json& v = (*node_)[key];
    return v.is_null() ? nullptr : &v;
  }
  double number(const std::string& key) const {
    const json& v = (*node_)[key];
    if (!v.is_number()) fail(at(key), "expects a number");
    return v.get<double>();
  }
  std::size_t unsigned_int(const std::string& key) const {
    const json& v = (*node_)[key];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(at(key), "expects a nonnegative integer");
    }
    return v.get<std::size_t>();
  }

  const json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Runs `parse`, re-labelling module errors with the key path.
template <typename F>
auto keyed(const std::string& path, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    fail(path, std::string("is invalid: ") + e.what());
  }
}

void parse_dataset(Section s, ExperimentConfig& cfg) {
  auto& d = cfg.dataset;
  const std::string kind = s.text("kind", "synthetic");
  if (kind == "synthetic") {
    d.kind = DatasetKind::kSynthetic;
  } else if (kind == "idx") {
    d.kind = DatasetKind::kIdx;
  } else {
    fail(s.at("kind"), "must be 'synthetic' or 'idx'");
  }
  const std::size_t classes = s.count("classes", static_cast<std::size_t>(d.classes));
  d.classes = static_cast<int>(classes);
  d.dim = s.count("dim", d.dim);
  d.train_per_class = s.count("train_per_class", d.train_per_class);
  d.test_per_class = s.count("test_per_class", d.test_per_class);
  d.spread = s.real("spread", d.spread);
  d.separation = s.real("separation", d.separation);
  d.offset = s.real("offset", d.offset);
  d.rotate = s.flag("rotate", d.rotate);
  d.train_images = s.text("train_images", d.train_images);
  d.train_labels = s.text("train_labels", d.train_labels);
  d.test_images = s.text("test_images", d.test_images);
  d.test_labels = s.text("test_labels", d.test_labels);
  s.finish();
}

void parse_partition(Section s, ExperimentConfig& cfg) {
  const std::string kind = s.text("kind", "iid");
  if (kind != "iid" && kind != "dirichlet") fail(s.at("kind"), "must be 'iid' or 'dirichlet'");
  cfg.partition.dirichlet = kind == "dirichlet";
  cfg.partition.alpha = s.real("alpha", cfg.partition.alpha);
  s.finish();
}

void parse_model(Section s, ExperimentConfig& cfg) {
  const std::string arch = s.text("arch", std::string(architecture_key(cfg.arch)));
  cfg.arch = keyed(s.at("arch"), [&] { return parse_architecture(arch); });
  cfg.hidden = s.count("hidden", cfg.hidden);
  s.finish();
}

void parse_clients(Section s, ExperimentConfig& cfg) {
  cfg.n = s.count("n", cfg.n);
  cfg.h = s.count("h", cfg.h);
  cfg.attack_ratio = s.real("attack_ratio", cfg.attack_ratio);
  if (!(cfg.attack_ratio >= 0.0 && cfg.attack_ratio < 0.5)) {
    fail(s.at("attack_ratio"), "must lie in [0, 0.5): the attacker must control fewer than half the clients (f < n/2)");
  }
  if (cfg.h > cfg.n) fail(s.at("h"), "must not exceed clients.n");
  s.finish();
}

void parse_local(Section s, ExperimentConfig& cfg) {
  auto& l = cfg.local;
  l.tau = s.count("tau", l.tau);
  l.eta = s.real("eta", l.eta);
  l.momentum = s.real("momentum", l.momentum);
  l.lr_decay = s.real("lr_decay", l.lr_decay);
  l.batch_size = s.count("batch_size", l.batch_size);
  l.clip = s.optional_real("clip");
  s.finish();
}

/// Byzantine count the robust baselines assume: the expected number of
/// malicious clients in a round, capped by each rule's admissibility.
std::size_t default_byzantine_f(const ExperimentConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.attack_ratio * static_cast<double>(cfg.h) + 1e-9));
}

void parse_aggregator(Section s, ExperimentConfig& cfg) {
  auto& a = cfg.aggregator;
  const std::string kind = s.text("kind", "lasa");
  a.kind = keyed(s.at("kind"), [&] { return parse_aggregator_kind(kind); });
  const double level = s.real("sparsification", 0.3);
  a.lasa.sparsification = keyed(s.at("sparsification"), [&] { return SparsificationLevel(level); });
  a.lasa.lambda_m = s.real("lambda_m", 2.0);
  a.lasa.lambda_d = s.real("lambda_d", 1.0);
  keyed(s.at("lambda_m"), [&] {
    a.lasa.validate();
    return 0;
  });

  const std::size_t h = cfg.h;
  std::size_t f = default_byzantine_f(cfg);
  if (a.kind == AggregatorKind::kMultiKrum && h >= 3) f = std::min(f, (h - 3) / 2);
  if (a.kind == AggregatorKind::kBulyan && h >= 3) f = std::min(f, (h - 3) / 4);
  f = s.optional_count("f").value_or(f);
  a.byzantine_f = f;
  a.krum_m = s.optional_count("krum_m");
  a.trim = s.count("trim", std::min(default_byzantine_f(cfg), (h - 1) / 2));
  a.geomed_tol = s.real("geomed_tol", a.geomed_tol);
  a.geomed_max_iter = s.count("geomed_max_iter", a.geomed_max_iter);
  const double sf_level = s.real("sparsefed_level", a.sparsefed_level.value());
  a.sparsefed_level = keyed(s.at("sparsefed_level"), [&] { return SparsificationLevel(sf_level); });
  if (auto clip = s.optional_real("sparsefed_clip")) {
    if (!(*clip > 0.0)) fail(s.at("sparsefed_clip"), "must be positive");
    a.sparsefed_clip = *clip;
  }
  s.finish();
}

void parse_attack(Section s, ExperimentConfig& cfg) {
  if (s.empty()) {
    cfg.attack.reset();
    return;
  }
  AttackSpec a;
  const std::string kind = s.text("kind", "");
  if (kind.empty()) fail(s.at("kind"), "is required in a non-empty attack section");
  const bool disabled = kind == "none";
  if (!disabled) a.kind = keyed(s.at("kind"), [&] { return parse_attack_kind(kind); });
  a.sigma = s.real("sigma", a.sigma);
  a.z = s.real("z", a.z);
  const std::string base = s.text("base", std::string(attack_key(a.byzmean_base)));
  a.byzmean_base = keyed(s.at("base"), [&] { return parse_attack_kind(base); });
  a.stealthy = s.flag("stealthy", a.stealthy);
  a.lie_over_all = s.flag("over_all", a.lie_over_all);
  a.tailored_trim = s.optional_count("trim");
  s.finish();
  if (disabled)
    cfg.attack.reset();
  else
    cfg.attack = a;
}

void parse_kappa(Section s, KappaSetup& k, const ExperimentConfig& cfg) {
  auto& sc = k.scenario;
  k.trials = s.count("trials", k.trials);
  sc.n = s.count("n", sc.n);
  sc.f = s.count("f", sc.f);
  sc.classes = static_cast<int>(s.count("classes", static_cast<std::size_t>(sc.classes)));
  sc.dim = s.count("dim", sc.dim);
  sc.samples_per_client = s.count("samples_per_client", sc.samples_per_client);
  sc.spread = s.real("spread", sc.spread);
  sc.dirichlet_alpha = s.real("alpha", sc.dirichlet_alpha);
  sc.variance_samples = s.count("variance_samples", sc.variance_samples);
  s.finish();
  if (2 * sc.f >= sc.n) fail(s.at("f"), "must satisfy f < n/2");
  if (k.trials < 1) fail(s.at("trials"), "must be >= 1");
  sc.attack = cfg.attack;
}

ExperimentConfig parse_experiment(const json& doc, KappaSetup* kappa) {
  if (!doc.is_object()) throw Error("config: document must be a JSON object");
  ExperimentConfig cfg;
  Section top(&doc, "");
  cfg.seed = top.count("seed", cfg.seed);
  cfg.rounds = top.count("rounds", cfg.rounds);
  cfg.output_dir = top.text("output_dir", cfg.output_dir);
  cfg.label = top.text("label", cfg.label);
  top.skip("grid");

  parse_dataset(top.sub("dataset"), cfg);
  parse_partition(top.sub("partition"), cfg);
  parse_model(top.sub("model"), cfg);
  parse_clients(top.sub("clients"), cfg);
  parse_local(top.sub("local"), cfg);
  parse_aggregator(top.sub("aggregator"), cfg);
  parse_attack(top.sub("attack"), cfg);
  Section audit = top.sub("audit");
  cfg.log_gradients = audit.flag("gradients", cfg.log_gradients);
  audit.finish();
  KappaSetup local_kappa;
  parse_kappa(top.sub("kappa"), kappa ? *kappa : local_kappa, cfg);
  if (kappa) kappa->scenario.local = cfg.local;
  top.finish();

  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string grid_label(const std::vector<std::pair<std::string, json>>& point) {
  std::string label;
  for (const auto& [key, value] : point) {
    if (!label.empty()) label += ",";
    label += key.substr(key.find('.') + 1) + "=" + (value.is_string() ? value.get<std::string>() : value.dump());
  }
  return label;
}

}  // namespace

ConfigDocument parse_config_document(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: malformed JSON: ") + e.what());
  }
  ConfigDocument out;
  out.base = parse_experiment(doc, &out.kappa);

  if (!doc.contains("grid") || doc["grid"].is_null() || doc["grid"].empty()) {
    out.runs.push_back(out.base);
    return out;
  }
  const json& grid = doc["grid"];
  if (!grid.is_object()) fail("grid", "must be an object of 'section.key': [values]");
  std::vector<std::pair<std::string, json>> axes;
  for (const auto& item : grid.items()) {
    const std::string& key = item.key();
    const auto dot = key.find('.');
    if (dot == std::string::npos) fail("grid." + key, "must name a key as 'section.key'");
    if (!item.value().is_array() || item.value().empty()) fail("grid." + key, "expects a non-empty array");
    axes.emplace_back(key, item.value());
  }

  std::vector<std::size_t> index(axes.size(), 0);
  while (true) {
    json variant = doc;
    variant.erase("grid");
    std::vector<std::pair<std::string, json>> point;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& [key, values] = axes[a];
      const auto dot = key.find('.');
      const std::string section = key.substr(0, dot);
      const std::string field = key.substr(dot + 1);
      if (!variant.contains(section) || variant[section].is_null()) variant[section] = json::object();
      variant[section][field] = values[index[a]];
      point.emplace_back(key, values[index[a]]);
    }
    ExperimentConfig run = parse_experiment(variant, nullptr);
    const std::string label = grid_label(point);
    run.label = run.label.empty() ? label : run.label + "," + label;
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%03zu", out.runs.size());
    run.output_dir = out.base.output_dir + "/" + prefix;
    out.runs.push_back(std::move(run));

    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < axes[a].second.size()) break;
      index[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ConfigDocument doc = parse_config_document(text);
  if (doc.runs.size() != 1) throw Error("config: expected a single experiment, found a grid");
  return doc.runs.front();
}

ConfigDocument load_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_document(text.str());
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["rounds"] = cfg.rounds;
  j["output_dir"] = cfg.output_dir;
  j["label"] = cfg.label;
  const auto& d = cfg.dataset;
  if (d.kind == DatasetKind::kSynthetic) {
    j["dataset"] = {{"kind", "synthetic"},       {"classes", d.classes},
                    {"dim", d.dim},              {"train_per_class", d.train_per_class},
                    {"test_per_class", d.test_per_class}, {"spread", d.spread},
                    {"separation", d.separation}, {"offset", d.offset},
                    {"rotate", d.rotate}};
  } else {
    j["dataset"] = {{"kind", "idx"},
                    {"train_images", d.train_images},
                    {"train_labels", d.train_labels},
                    {"test_images", d.test_images},
                    {"test_labels", d.test_labels}};
  }
  j["partition"] = cfg.partition.dirichlet ? json{{"kind", "dirichlet"}, {"alpha", cfg.partition.alpha}}
                                           : json{{"kind", "iid"}};
  j["model"] = {{"arch", std::string(architecture_key(cfg.arch))}, {"hidden", cfg.hidden}};
  j["clients"] = {{"n", cfg.n}, {"h", cfg.h}, {"attack_ratio", cfg.attack_ratio}};
  const auto& l = cfg.local;
  j["local"] = {{"tau", l.tau},           {"eta", l.eta},
                {"momentum", l.momentum}, {"lr_decay", l.lr_decay},
                {"batch_size", l.batch_size}, {"clip", l.clip ? json(*l.clip) : json(nullptr)}};
  const auto& a = cfg.aggregator;
  j["aggregator"] = {{"kind", std::string(aggregator_key(a.kind))},
                     {"sparsification", a.lasa.sparsification.value()},
                     {"lambda_m", a.lasa.lambda_m},
                     {"lambda_d", a.lasa.lambda_d},
                     {"f", a.byzantine_f},
                     {"krum_m", a.krum_m ? json(*a.krum_m) : json(nullptr)},
                     {"trim", a.trim},
                     {"geomed_tol", a.geomed_tol},
                     {"geomed_max_iter", a.geomed_max_iter},
                     {"sparsefed_level", a.sparsefed_level.value()},
                     {"sparsefed_clip", std::isfinite(a.sparsefed_clip) ? json(a.sparsefed_clip) : json(nullptr)}};
  if (cfg.attack) {
    const auto& at = *cfg.attack;
    j["attack"] = {{"kind", std::string(attack_key(at.kind))},
                   {"sigma", at.sigma},
                   {"z", at.z},
                   {"base", std::string(attack_key(at.byzmean_base))},
                   {"stealthy", at.stealthy},
                   {"over_all", at.lie_over_all},
                   {"trim", at.tailored_trim ? json(*at.tailored_trim) : json(nullptr)}};
  } else {
    j["attack"] = json::object();
  }
  j["audit"] = {{"gradients", cfg.log_gradients}};
  return j;
}

std::string output_dir_override(const std::string& configured) {
  const char* env = std::getenv("LASA_OUTPUT_DIR");
  return env && *env ? std::string(env) : configured;
}

}  // namespace lasa
