#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bayesnf/features.hpp"
#include "bayesnf/inference.hpp"
#include "bayesnf/model.hpp"
#include "bayesnf/observation.hpp"

namespace bayesnf {

/// Equally weighted mixture of observation distributions at one index.
struct PredictiveMixture {
  ObservationKind kind = ObservationKind::kNormal;
  std::vector<double> f;
  std::vector<ObservationParams> params;

  std::size_t size() const { return f.size(); }
};

/// Parameter vectors forming the predictive mixture: MAP/MLE members, or
/// n_draws samples from a variational ensemble.
std::vector<ParamVector> predictive_draws(const PosteriorEnsemble& ensemble, std::size_t n_draws, std::uint64_t seed);

PredictiveMixture predictive_at(const Network& network, std::span<const ParamVector> draws, const FeatureSpec& spec,
                                const SpaceTimeIndex& idx, std::span<const double> exogenous = {});

double mixture_cdf(const PredictiveMixture& mix, double y);
/// Poisson queried off the integers returns 0 and sets *off_support.
double mixture_pdf(const PredictiveMixture& mix, double y, bool* off_support = nullptr);
double mixture_mean(const PredictiveMixture& mix);

struct RootResult {
  double x = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Chandrupatla's bracketed root finder; fn(a) and fn(b) must differ in sign.
RootResult chandrupatla(const std::function<double(double)>& fn, double a, double b, double xtol_rel = 1e-10,
                        double ftol = 1e-12, std::size_t max_iter = 200);

/// Continuous heads: y with cdf(y) = alpha. Poisson: smallest integer k with cdf(k) >= alpha.
double mixture_quantile(const PredictiveMixture& mix, double alpha);

struct PredictionBatch {
  std::vector<double> mean;
  std::vector<std::vector<double>> quantiles;  // [row][alpha]
};

/// `exogenous` is either empty or holds one covariate vector per index.
PredictionBatch predict_batch(const Network& network, std::span<const ParamVector> draws, const FeatureSpec& spec,
                              std::span<const SpaceTimeIndex> indices, std::span<const std::vector<double>> exogenous,
                              std::span<const double> quantiles);

}  // namespace bayesnf
