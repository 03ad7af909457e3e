#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "bayesnf/data.hpp"
#include "bayesnf/features.hpp"
#include "bayesnf/inference.hpp"
#include "bayesnf/model.hpp"

namespace testing_support {

using namespace bayesnf;

// 5x5 grid on [0,1]^2, 120 monthly steps,
// y = sin(2 pi t / 12) + s1 + 0.5 s1 s2 + N(0, 0.3^2).
Dataset grid_benchmark(std::uint64_t seed, double noise_sd = 0.3);

// Linear, both interaction blocks, period 12 with harmonics {1, 2},
// bounds [0,1]^2, polynomial block standardized on `train`.
FeatureSpec benchmark_features(const Dataset& train);

// Holdout = the last 12 of 120 steps at every location.
TrainTestSplit benchmark_split(const Dataset& ds);

// Small random architecture drawn for gradient checks.
NetworkConfig random_config(std::mt19937_64& rng, std::size_t input_dim, ObservationKind kind);

// Random design of n records with m features; Poisson heads get count targets.
Design random_design(std::mt19937_64& rng, std::size_t m, std::size_t n, ObservationKind kind);

// Central differences of log_prior + scale * log_likelihood.
std::vector<double> fd_gradient(const Network& net, std::span<const double> theta, const Design& d, double scale,
                                double step = 1e-5);

// Largest |a - b| / max(|a|, |b|, floor) over all coordinates.
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

// Constant-feature Gaussian instance: one feature x = 1 at n records,
// y ~ N(mean, 1). Only beta1 is free; F = beta1 with prior N(0, 1) and known
// unit noise variance.
struct ConjugateInstance {
  Dataset data;
  FeatureSpec spec;
  NetworkConfig config;
  std::vector<char> frozen;
  std::function<void(ParamVector&)> init;
  double sample_mean = 0.0;
  double posterior_mean = 0.0;
  double posterior_sd = 0.0;
};
ConjugateInstance conjugate_instance(std::size_t n = 200, double mean = 3.0, std::uint64_t seed = 11);

// Empirical coverage of [lower, upper].
double coverage(std::span<const double> y, std::span<const double> lower, std::span<const double> upper);

}  // namespace testing_support
