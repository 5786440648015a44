#pragma once

#include "lasa/engine.hpp"
#include "lasa/metrics.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lasa {

/// Settings of the `kappa` section.
struct KappaSetup {
  KappaScenario scenario;
  std::size_t trials = 200;
};

/// A parsed configuration document. `runs` holds the base experiment, or
/// one experiment per point of the `grid` section (cartesian product, in
/// key order then value order).
struct ConfigDocument {
  ExperimentConfig base;
  std::vector<ExperimentConfig> runs;
  KappaSetup kappa;
};

/// JSON document with top-level scalars (seed, rounds, output_dir, label) and
/// sections dataset, partition, model, clients, local, aggregator, attack,
/// audit, kappa, grid. Unknown keys and type mismatches are errors naming the
/// key path. An empty or missing attack section means no attack.
ConfigDocument parse_config_document(std::string_view text);

/// The single experiment of a grid-free document.
ExperimentConfig parse_config(std::string_view text);

ConfigDocument load_config_document(const std::string& path);

/// Fully resolved configuration, every default explicit.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Output directory after the LASA_OUTPUT_DIR environment override.
std::string output_dir_override(const std::string& configured);

}  // namespace lasa
