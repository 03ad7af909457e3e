#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bayesnf/config.hpp"
#include "bayesnf/data.hpp"
#include "bayesnf/inference.hpp"
#include "bayesnf/metrics.hpp"
#include "bayesnf/variogram.hpp"

namespace bayesnf {

/// Everything needed to predict without the training data.
struct Checkpoint {
  RunConfig config;
  std::uint64_t model_hash = 0;
  FeatureSpec features;  // bounds and scaling fitted at train time
  CivilTime origin;
  std::optional<std::size_t> split_index;
  std::vector<std::vector<double>> train_locations;
  double time_min = 0.0;
  double time_max = 0.0;
  PosteriorEnsemble ensemble;
  std::uint64_t values_hash = 0;
};

/// Hash over the raw bytes of every member's parameters, in member order.
std::uint64_t values_hash(const PosteriorEnsemble& ensemble);

/// Writes manifest.json, member_XXX.json and train_log.csv into `dir`.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
/// Missing or inconsistent checkpoints raise StateError.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

Dataset load_dataset(const RunConfig& config, const std::string& path, const EncodeOptions& options = {});

struct TrainRequest {
  std::optional<std::size_t> split_index;  // train on this split's training portion
};

Checkpoint cmd_train(const RunConfig& config, const TrainRequest& request = {});

/// Query rows need coordinates and timestamps; the value column is optional.
/// `config`, when given, must hash-match the checkpoint.
std::string cmd_predict(const std::filesystem::path& checkpoint_dir, const std::string& query_path,
                        const std::vector<double>& quantiles, const RunConfig* config = nullptr);

struct EvaluateResult {
  std::vector<ScoreReport> per_split;
  ScoreReport mean;
  std::string to_csv() const;
};

/// Median forecast with a central 95% interval. Each checkpoint is scored on
/// the test portion of its split (or of `split_index` when given); a
/// checkpoint trained on all data is scored on every observed row of `data_path`.
EvaluateResult cmd_evaluate(const std::vector<std::filesystem::path>& checkpoints, const std::string& data_path,
                            std::optional<std::size_t> split_index = std::nullopt,
                            const RunConfig* config = nullptr);

/// Locations uniform in the configured bounds, consecutive times from 2000-01-01.
RawTable cmd_simulate(const RunConfig& config, std::size_t n_locations, std::size_t n_times, std::uint64_t seed);

enum class VariogramMode { kEmpirical, kInferred };
VariogramMode parse_variogram_mode(std::string_view name);

/// Empirical mode reads `data_path`; inferred mode needs a checkpoint.
VariogramSurface cmd_variogram(const RunConfig& config, VariogramMode mode, const std::string& data_path,
                               const std::optional<std::filesystem::path>& checkpoint_dir);

}  // namespace bayesnf
