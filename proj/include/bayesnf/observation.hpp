#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string_view>

namespace bayesnf {

enum class ObservationKind { kNormal, kStudentT, kPoisson };

struct ObservationModel {
  ObservationKind kind = ObservationKind::kNormal;

  /// Number of global observation parameters n_y.
  std::size_t n_params() const;
};

ObservationKind parse_observation_kind(std::string_view name);
std::string_view to_string(ObservationKind kind);

/// Positive observation parameters derived from the unconstrained raw block.
///   Normal:   variance = softplus(raw[0])
///   StudentT: scale = softplus(raw[0]), df = 2 + softplus(raw[1])
///   Poisson:  none
struct ObservationParams {
  ObservationKind kind = ObservationKind::kNormal;
  double variance = 1.0;
  double scale = 1.0;
  double df = 0.0;
};

ObservationParams observation_params(ObservationKind kind, std::span<const double> raw);

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

double log_likelihood(const ObservationModel& model, const ObservationParams& params, double f, double y);

/// Log likelihood with derivatives with respect to F and the raw observation parameters.
struct LikelihoodTerm {
  double value = 0.0;
  double d_f = 0.0;
  std::array<double, 2> d_raw{0.0, 0.0};
};

LikelihoodTerm log_likelihood_grad(ObservationKind kind, std::span<const double> raw, double f, double y);

// Single-component distribution queries at location F.
double component_cdf(const ObservationParams& params, double f, double y);
double component_pdf(const ObservationParams& params, double f, double y);
double component_mean(const ObservationParams& params, double f);
/// Continuous heads: exact quantile. Poisson: smallest integer k with CDF(k) >= alpha.
double component_quantile(const ObservationParams& params, double f, double alpha);

double sample_observation(const ObservationParams& params, double f, std::mt19937_64& rng);

}  // namespace bayesnf
