#include "lasa/config.hpp"
#include "lasa/engine.hpp"
#include "lasa/metrics.hpp"
#include "lasa/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t jobs = 1;
  bool dump_updates = false;
};

/// Applies command-line overrides. --out wins over LASA_OUTPUT_DIR, which
/// wins over the file.
void apply(const Options& opt, lasa::ConfigDocument& doc) {
  const std::string base = opt.out ? *opt.out : lasa::output_dir_override(doc.base.output_dir);
  const bool grid = doc.runs.size() > 1;
  for (std::size_t i = 0; i < doc.runs.size(); ++i) {
    auto& run = doc.runs[i];
    if (opt.seed) run.seed = *opt.seed;
    if (grid) {
      char sub[16];
      std::snprintf(sub, sizeof sub, "%03zu", i);
      run.output_dir = (fs::path(base) / sub).string();
    } else {
      run.output_dir = base;
    }
  }
  if (opt.seed) doc.base.seed = *opt.seed;
  doc.base.output_dir = base;
}

struct RunResult {
  lasa::ExperimentConfig cfg;
  lasa::RunSummary summary;
};

RunResult execute(const lasa::ExperimentConfig& cfg, std::size_t jobs, bool dump_updates) {
  lasa::Simulation sim(cfg, jobs);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  if (dump_updates) fs::create_directories(dir / "updates");
  auto records = sim.run([&](const lasa::RoundRecord& r) {
    if (!dump_updates) return;
    char name[32];
    std::snprintf(name, sizeof name, "round_%05zu.bin", r.round);
    std::ofstream out(dir / "updates" / name, std::ios::binary);
    lasa::write_update(out, r.outcome.aggregate);
  });
  lasa::write_run_outputs(dir, cfg, records);
  return {cfg, lasa::summarize(records)};
}

std::vector<RunResult> execute_all(const std::vector<lasa::ExperimentConfig>& runs, std::size_t jobs,
                                   bool dump_updates) {
  std::vector<RunResult> results(runs.size());
  if (runs.size() > 1) {
    lasa::parallel_for(runs.size(), jobs, [&](std::size_t i) { results[i] = execute(runs[i], 1, dump_updates); });
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) results[i] = execute(runs[i], jobs, dump_updates);
  }
  return results;
}

std::string attack_name(const lasa::ExperimentConfig& cfg) {
  return cfg.attack ? std::string(lasa::attack_key(cfg.attack->kind)) : "none";
}

void print_summary(const RunResult& r) {
  std::printf("%-40s final=%.4f best=%.4f tpr=%.4f fpr=%.4f -> %s\n",
              r.cfg.label.empty() ? std::string(lasa::aggregator_key(r.cfg.aggregator.kind)).c_str()
                                  : r.cfg.label.c_str(),
              r.summary.final_accuracy, r.summary.best_accuracy, r.summary.filter.tpr, r.summary.filter.fpr,
              r.cfg.output_dir.c_str());
}

int cmd_run(const std::string& path, const Options& opt) {
  auto doc = lasa::load_config_document(path);
  apply(opt, doc);
  for (const auto& r : execute_all(doc.runs, opt.jobs, opt.dump_updates)) print_summary(r);
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const Options& opt) {
  std::vector<lasa::ExperimentConfig> runs;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    auto doc = lasa::load_config_document(paths[p]);
    Options local = opt;
    char sub[16];
    std::snprintf(sub, sizeof sub, "%03zu", p);
    local.out = (fs::path(opt.out.value_or("compare_out")) / sub).string();
    apply(local, doc);
    runs.insert(runs.end(), doc.runs.begin(), doc.runs.end());
  }
  const auto results = execute_all(runs, opt.jobs, opt.dump_updates);

  const fs::path dir(opt.out.value_or("compare_out"));
  fs::create_directories(dir);
  std::ofstream csv(dir / "compare.csv");
  csv << "aggregator,attack,label,final_accuracy,best_accuracy,tpr,fpr\n";
  std::printf("%-10s %-16s %-28s %9s %9s %7s %7s\n", "aggregator", "attack", "label", "final", "best", "tpr", "fpr");
  for (const auto& r : results) {
    const std::string agg(lasa::aggregator_key(r.cfg.aggregator.kind));
    const std::string atk = attack_name(r.cfg);
    char line[512];
    std::snprintf(line, sizeof line, "%s,%s,%s,%.10g,%.10g,%.10g,%.10g", agg.c_str(), atk.c_str(),
                  r.cfg.label.c_str(), r.summary.final_accuracy, r.summary.best_accuracy, r.summary.filter.tpr,
                  r.summary.filter.fpr);
    csv << line << '\n';
    std::printf("%-10s %-16s %-28s %9.4f %9.4f %7.4f %7.4f\n", agg.c_str(), atk.c_str(), r.cfg.label.c_str(),
                r.summary.final_accuracy, r.summary.best_accuracy, r.summary.filter.tpr, r.summary.filter.fpr);
  }
  return 0;
}

int cmd_kappa(const std::string& path, const Options& opt) {
  auto doc = lasa::load_config_document(path);
  apply(opt, doc);
  const auto& cfg = doc.base;
  const auto report = lasa::estimate_kappa(cfg.aggregator, doc.kappa.scenario, doc.kappa.trials, cfg.seed, opt.jobs);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  lasa::write_json(dir / "kappa.json", lasa::to_json(report));
  std::printf("empirical_kappa=%.6g bound=%.6g trials=%zu precondition_failures=%zu violations=%zu -> %s\n",
              report.empirical_kappa, report.bound, report.trials.size(), report.precondition_failures,
              report.violations, (dir / "kappa.json").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with layer-adaptive sparsified aggregation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  std::uint64_t seed = 0;
  std::string out;
  auto* seed_opt = app.add_option("--seed", seed, "Override the master seed");
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides LASA_OUTPUT_DIR and the config)");
  app.add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--dump-updates", opt.dump_updates, "Write each round's aggregate as a binary update");

  std::string config;
  std::vector<std::string> configs;
  auto* run = app.add_subcommand("run", "Run one experiment or a grid");
  run->add_option("config", config, "Config path")->required()->check(CLI::ExistingFile);
  auto* compare = app.add_subcommand("compare", "Run several configs and tabulate final accuracy");
  compare->add_option("configs", configs, "Config paths")->required()->check(CLI::ExistingFile);
  auto* kappa = app.add_subcommand("kappa", "Estimate the robustness coefficient against its bound");
  kappa->add_option("config", config, "Config path")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) opt.seed = seed;
  if (*out_opt) opt.out = out;

  try {
    if (*run) return cmd_run(config, opt);
    if (*compare) return cmd_compare(configs, opt);
    if (*kappa) return cmd_kappa(config, opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
