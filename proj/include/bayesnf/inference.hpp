#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "bayesnf/data.hpp"
#include "bayesnf/features.hpp"
#include "bayesnf/model.hpp"
#include "bayesnf/optim.hpp"

namespace bayesnf {

enum class Method { kMap, kVi, kMle };

/// Coordinates in which MAP/MLE ascend. Non-centered optimizes w with
/// omega = softplus(xi) * w, which removes the sigma -> 0 singularity of the
/// centered joint density; members are always returned in centered form.
enum class Coordinates { kNonCentered, kCentered };

/// Only uniform B/N scaling is implemented; kBlundell is reserved and rejected.
enum class KlScaleMode { kUniform, kBlundell };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);
KlScaleMode parse_kl_scale_mode(std::string_view name);
std::string_view to_string(KlScaleMode mode);
Coordinates parse_coordinates(std::string_view name);
std::string_view to_string(Coordinates coords);

struct TrainConfig {
  Method method = Method::kMap;
  std::size_t ensemble_size = 8;
  std::optional<std::size_t> epochs;  // unset: sized so that epochs * steps_per_epoch ~ target_steps
  std::size_t target_steps = 5000;
  std::size_t batch_size = 512;
  LearningRateSchedule schedule;
  std::uint64_t seed = 0;
  std::size_t vi_samples_per_step = 1;
  KlScaleMode kl_scale_mode = KlScaleMode::kUniform;
  Coordinates coordinates = Coordinates::kNonCentered;  // MAP / MLE only

  void validate() const;
  std::size_t effective_batch_size(std::size_t n_records) const;
  std::size_t steps_per_epoch(std::size_t n_records) const;
  std::size_t resolved_epochs(std::size_t n_records) const;
};

/// Mean-field Gaussian surrogate: stddev = softplus(raw_scale).
struct VariationalParams {
  std::vector<double> mean;
  std::vector<double> raw_scale;
  ParamLayout layout;

  std::vector<double> stddev() const;
};

struct TracePoint {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double objective = 0.0;
};

struct PosteriorEnsemble {
  Method method = Method::kMap;
  NetworkConfig config;
  std::vector<ParamVector> members;               // MAP / MLE
  std::vector<VariationalParams> variational;     // VI
  std::vector<std::uint64_t> member_seeds;
  std::vector<std::vector<TracePoint>> traces;

  std::size_t size() const { return method == Method::kVi ? variational.size() : members.size(); }
};

struct FitOptions {
  /// Applied to each member's prior draw before training.
  std::function<void(ParamVector&)> customize_init;
  /// Per-entry flags; frozen entries keep their initial value (and, for VI,
  /// are treated as known constants outside the variational family).
  std::vector<char> frozen;
  /// MAP only: kExclude substitutes a flat prior.
  PriorMode prior = PriorMode::kInclude;
  /// Epochs between full-data objective evaluations; 0 picks ~100 points.
  std::size_t trace_every = 0;
  /// Worker threads for ensemble members; 0 uses the hardware concurrency.
  std::size_t threads = 0;
};

Design make_design(const Dataset& dataset, const FeatureSpec& spec);

PosteriorEnsemble fit_map(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                          const TrainConfig& train, const FitOptions& options = {});
PosteriorEnsemble fit_mle(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                          const TrainConfig& train, const FitOptions& options = {});
PosteriorEnsemble fit_vi(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                         const TrainConfig& train, const FitOptions& options = {});
/// Dispatches on train.method.
PosteriorEnsemble fit(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                      const TrainConfig& train, const FitOptions& options = {});

/// MAP/MLE: the members themselves (n_draws is ignored). VI: n_draws
/// vectors, each from a uniformly chosen member.
std::vector<ParamVector> sample_ensemble(const PosteriorEnsemble& ensemble, std::size_t n_draws, std::uint64_t seed);

/// KL(N(mean, stddev^2) || N(0, 1)).
double kl_to_standard_normal(double mean, double stddev);

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of the full-data ELBO. Fixed-prior blocks use the
/// closed-form KL; weight and bias blocks use the sampled prior density.
ElboEstimate estimate_elbo(const Network& network, const VariationalParams& vp, const Design& data,
                           std::size_t n_samples, std::uint64_t seed, const std::vector<char>& frozen = {});

}  // namespace bayesnf
