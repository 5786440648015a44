#pragma once

#include "lasa/config.hpp"
#include "lasa/engine.hpp"
#include "lasa/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

namespace lasa {

/// Header of the per-round CSV.
inline constexpr const char* kRoundsCsvHeader = "round,accuracy,loss,tpr,fpr,agg_norm,sel_counts";

/// One CSV row; sel_counts is "0:c0;1:c1;..." with c the selection size per layer.
std::string rounds_csv_row(const RoundRecord& record);

void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records);

struct RunSummary {
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  FilterStats filter;       ///< pooled over all rounds
  FilterStats tail_filter;  ///< pooled over the last `tail_rounds` rounds
  std::size_t rounds = 0;
  std::size_t tail_rounds = 0;
};

RunSummary summarize(std::span<const RoundRecord> records, std::size_t tail = 50);

nlohmann::json to_json(const RunSummary& summary);
nlohmann::json to_json(const KappaReport& report, bool include_trials = true);

/// Writes rounds.csv, summary.json and config.resolved.json into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                       std::span<const RoundRecord> records);

void write_json(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace lasa
