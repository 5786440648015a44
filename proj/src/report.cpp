#include "lasa/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace lasa {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string rounds_csv_row(const RoundRecord& r) {
  const FilterStats stats = filter_stats(r);
  std::string row = std::to_string(r.round) + "," + fmt(r.test_accuracy) + "," + fmt(r.train_loss) + "," +
                    fmt(stats.tpr) + "," + fmt(stats.fpr) + "," + fmt(r.outcome.aggregate.values().norm()) + ",";
  for (std::size_t l = 0; l < r.outcome.selected.size(); ++l) {
    if (l) row += ';';
    row += std::to_string(l) + ":" + std::to_string(r.outcome.selected[l].size());
  }
  return row;
}

void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records) {
  out << kRoundsCsvHeader << '\n';
  for (const auto& r : records) out << rounds_csv_row(r) << '\n';
}

RunSummary summarize(std::span<const RoundRecord> records, std::size_t tail) {
  RunSummary s;
  s.rounds = records.size();
  if (records.empty()) return s;
  s.final_accuracy = records.back().test_accuracy;
  for (const auto& r : records) s.best_accuracy = std::max(s.best_accuracy, r.test_accuracy);
  s.filter = pooled_filter_stats(records);
  s.tail_rounds = std::min(tail, records.size());
  s.tail_filter = pooled_filter_stats(records.subspan(records.size() - s.tail_rounds));
  return s;
}

json to_json(const RunSummary& s) {
  return {{"rounds", s.rounds},
          {"final_accuracy", s.final_accuracy},
          {"best_accuracy", s.best_accuracy},
          {"mean_tpr", s.filter.tpr},
          {"mean_fpr", s.filter.fpr},
          {"tail_rounds", s.tail_rounds},
          {"tail_tpr", s.tail_filter.tpr},
          {"tail_fpr", s.tail_filter.fpr}};
}

json to_json(const KappaReport& r, bool include_trials) {
  json j = {{"empirical_kappa", r.empirical_kappa},
            {"bound", r.bound},
            {"inputs",
             {{"c_k", r.c_k}, {"b_k", r.b_k}, {"nu", r.nu}, {"zeta", r.zeta}, {"c_sq", r.c_sq},
              {"c_lambda_sq", r.c_lambda_sq}}},
            {"trials", r.trials.size()},
            {"precondition_failures", r.precondition_failures},
            {"violations", r.violations}};
  if (include_trials) {
    json rows = json::array();
    for (const auto& t : r.trials) {
      rows.push_back({{"distance_sq", t.distance_sq},
                      {"bound", t.bound},
                      {"c_k", t.c_k},
                      {"b_k", t.b_k},
                      {"nu", t.nu},
                      {"zeta", t.zeta},
                      {"c_sq", t.c_sq},
                      {"c_lambda_sq", t.c_lambda_sq},
                      {"step_size_ok", t.step_size_ok},
                      {"selection_ok", t.selection_ok}});
    }
    j["per_trial"] = std::move(rows);
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                       std::span<const RoundRecord> records) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "rounds.csv");
    if (!csv) throw Error("cannot write " + (dir / "rounds.csv").string());
    write_rounds_csv(csv, records);
  }
  write_json(dir / "summary.json", to_json(summarize(records)));
  write_json(dir / "config.resolved.json", to_json(cfg));
}

}  // namespace lasa
