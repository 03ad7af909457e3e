#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bayesnf/data.hpp"
#include "bayesnf/features.hpp"
#include "bayesnf/inference.hpp"
#include "bayesnf/model.hpp"
#include "bayesnf/variogram.hpp"

namespace bayesnf {

struct DataConfig {
  std::string path;
  TableSchema schema;
  Frequency frequency = Frequency::kDaily;
};

/// Seasonal entry as written in a config: either a period or a named effect
/// resolved against the data frequency.
struct SeasonalEntry {
  std::optional<double> period;
  std::optional<SeasonalEffect> effect;
  std::vector<int> harmonics;
};

struct FeatureConfig {
  bool linear = true;
  bool time_space_interactions = false;
  bool space_space_interactions = false;
  std::vector<SeasonalEntry> seasonal;
  std::vector<std::vector<int>> spatial_fourier;        // empty: no Fourier terms
  std::optional<std::vector<SpatialBound>> spatial_bounds;  // unset: fitted to training data
  bool standardize = true;                               // polynomial block only
};

struct PredictionConfig {
  std::vector<double> quantiles = {0.025, 0.5, 0.975};
  std::size_t n_draws = 64;  // VI only
  std::uint64_t seed = 0;
};

struct SplitConfig {
  std::size_t n_splits = 5;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct VariogramConfig {
  VariogramSpec spec;
  std::size_t n_locations = 70;  // inferred mode
  std::uint64_t seed = 0;
};

struct PathConfig {
  std::string checkpoint = "checkpoint";
  std::string output = "output";
};

struct RunConfig {
  DataConfig data;
  FeatureConfig features;
  std::vector<LayerConfig> layers;
  ObservationKind observation = ObservationKind::kNormal;
  TrainConfig train;
  std::size_t threads = 0;
  PredictionConfig prediction;
  SplitConfig splits;
  VariogramConfig variogram;
  PathConfig paths;

  RunConfig();

  /// Feature recipe without fitted bounds or scaling.
  FeatureSpec feature_recipe() const;
  NetworkConfig network() const;
  void validate() const;
};

/// Parses JSON text; unknown keys and malformed values raise InputError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every default materialized and seasonal effects
/// resolved to periods.
std::string dump_config(const RunConfig& config);

/// FNV-1a 64 over the canonical features recipe and network.
std::uint64_t model_hash(const RunConfig& config);
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Fits bounds (unless configured) and polynomial scaling on the indices.
FeatureSpec fit_feature_spec(const RunConfig& config, std::span<const SpaceTimeIndex> indices);

}  // namespace bayesnf
