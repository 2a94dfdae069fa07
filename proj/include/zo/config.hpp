#pragma once

// Experiment configuration, read from JSON. Unknown keys are rejected so a
// typo never silently falls back to a default.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "zo/errors.hpp"
#include "zo/objectives.hpp"
#include "zo/optimizer_runner.hpp"

namespace zo {

/// Malformed or out-of-domain configuration. The CLI maps it to exit code 2.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class ObjectiveKind { kQuadratic, kChain };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kQuadratic;
  // quadratic
  std::size_t d = 9;
  Regime regime = Regime::kHeterogeneous;
  // chain
  std::size_t p = 4;
  std::size_t widths = 8;
  std::uint64_t seed = 0;
  // optional noise wrapper; sigma = 0 means none
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

enum class PartitionKind { kNone, kBlocks, kLayers, kRanges };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::kNone;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  /// From the "layers:p" spelling; must match the chain's block count.
  std::optional<std::size_t> expected_layers;
};

enum class SweepMetric { kFinal, kBest };

struct ExperimentConfig {
  ObjectiveSpec objective;
  /// Hyperparameters, q, epsilon and distribution. Seed and partition are
  /// filled per run.
  OptimizerConfig optimizer;
  PartitionSpec partition;
  std::size_t T = 1000;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t eval_every = 1;
  std::string output = "out";
  /// Quadratics start from a fixed point with F(x0) = init_loss.
  double init_loss = 1.0;
  std::uint64_t init_seed = 0;
  std::optional<double> threshold;
  bool stop_at_threshold = false;
  SweepMetric metric = SweepMetric::kFinal;
  /// When false elapsed_s is written as 0 so traces stay byte-identical.
  bool record_time = false;

  /// Throws ConfigError on any out-of-domain field.
  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Reads a JSON file, mapping I/O and syntax errors to ConfigError.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// The deterministic base objective the config describes.
std::shared_ptr<const Objective> build_objective(const ObjectiveSpec& spec);
/// Initial iterate for the objective.
Vector initial_point(const ExperimentConfig& config, const Objective& objective);
/// Resolves the partition spec against the objective; nullopt for "none".
std::optional<Partition> resolve_partition(const PartitionSpec& spec, const Objective& objective);

std::string to_string(SweepMetric metric);

}  // namespace zo
