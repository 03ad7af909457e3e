#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bayesnf {

/// A point (s, t) of the space-time domain.
struct SpaceTimeIndex {
  std::vector<double> space;
  double time = 0.0;
};

/// One seasonal period with the harmonics used for it.
struct SeasonalTerm {
  double period = 0.0;
  std::vector<int> harmonics;
};

struct SpatialBound {
  double min = 0.0;
  double max = 1.0;
};

/// Declarative covariate recipe. Features are emitted in this order:
///   linear        {t, s_1..s_d}
///   time-space    {t*s_i}
///   space-space   {s_i*s_j, i<j}
///   seasonal      (cos, sin)(2 pi h t / p) for each period and harmonic
///   fourier       (cos, sin)(2 pi 2^h shat_i) for each dimension and exponent
///   exogenous     raw values of the named columns
///
/// The polynomial block (linear and interactions) is mapped through
/// (x - shift) / scale when `poly_shift`/`poly_scale` are non-empty.
struct FeatureSpec {
  std::size_t dim = 1;
  bool use_linear = true;
  bool use_time_space_interactions = false;
  bool use_space_space_interactions = false;
  std::vector<SeasonalTerm> seasonal;
  std::vector<std::vector<int>> spatial_fourier;  // one exponent set per dimension, may be empty
  std::vector<SpatialBound> spatial_bounds;       // one per dimension
  std::vector<std::string> exogenous;

  std::vector<double> poly_shift;
  std::vector<double> poly_scale;

  /// Throws InputError on violated invariants.
  void validate() const;
};

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;
};

std::size_t feature_count(const FeatureSpec& spec);

/// Size of the polynomial block (linear plus interaction terms).
std::size_t polynomial_count(const FeatureSpec& spec);

/// Labels in emission order. Pure function of the spec.
std::vector<std::string> feature_names(const FeatureSpec& spec);

FeatureVector build_features(const FeatureSpec& spec, const SpaceTimeIndex& idx,
                             std::span<const double> exogenous = {});

/// Writes the features into `out` (length feature_count(spec)) without allocating names.
void build_features_into(const FeatureSpec& spec, const SpaceTimeIndex& idx,
                         std::span<const double> exogenous, std::span<double> out);

/// Sets poly_shift/poly_scale to the mean and standard deviation of the
/// polynomial block over the supplied indices. Constant columns get scale 1.
void fit_polynomial_scaling(FeatureSpec& spec, std::span<const SpaceTimeIndex> indices);

/// Sets spatial_bounds to the coordinate ranges of the supplied indices.
/// Degenerate ranges are widened to unit width around the value.
void fit_spatial_bounds(FeatureSpec& spec, std::span<const SpaceTimeIndex> indices);

enum class Frequency { kYearly, kQuarterly, kMonthly, kWeekly, kDaily, kHourly, kMinutely, kSecondly };
enum class SeasonalEffect { kSecondly, kMinutely, kHourly, kDaily, kWeekly, kMonthly, kQuarterly, kYearly };

/// Period of a seasonal effect expressed in units of the measurement
/// frequency, or nullopt where the effect is finer than the measurements.
std::optional<double> seasonal_period(Frequency frequency, SeasonalEffect effect);

Frequency parse_frequency(std::string_view name);
SeasonalEffect parse_seasonal_effect(std::string_view name);
std::string_view to_string(Frequency frequency);
std::string_view to_string(SeasonalEffect effect);

}  // namespace bayesnf
