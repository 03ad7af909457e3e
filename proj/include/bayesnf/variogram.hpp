#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "bayesnf/data.hpp"
#include "bayesnf/features.hpp"
#include "bayesnf/model.hpp"

namespace bayesnf {

enum class DistanceMetric { kEuclidean, kHaversine };

DistanceMetric parse_distance_metric(std::string_view name);
std::string_view to_string(DistanceMetric metric);

/// Great-circle distance in km between (lon, lat) points given in degrees.
double haversine_km(double lon1, double lat1, double lon2, double lat2);
double distance(DistanceMetric metric, std::span<const double> a, std::span<const double> b);

struct VariogramSpec {
  std::vector<double> distance_bins;  // edges; bin k is [edge_k, edge_{k+1})
  std::vector<int> time_lags;
  DistanceMetric metric = DistanceMetric::kHaversine;
  std::size_t min_pairs = 30;

  void validate() const;
  std::size_t n_bins() const { return distance_bins.empty() ? 0 : distance_bins.size() - 1; }
};

struct VariogramCell {
  double gamma = 0.0;
  std::size_t pairs = 0;
  bool populated = false;
};

struct VariogramSurface {
  VariogramSpec spec;
  std::vector<VariogramCell> cells;  // [bin * n_lags + lag_index]

  const VariogramCell& at(std::size_t bin, std::size_t lag_index) const;
  double bin_center(std::size_t bin) const;
};

/// Lag 0 pairs distinct locations at equal times; lag > 0 pairs (a, t) with
/// (b, t + lag) for every ordered pair of locations, a == b included.
VariogramSurface empirical_variogram(const Dataset& dataset, const VariogramSpec& spec);

/// Averages the empirical surface of one simulated field per draw over the
/// grid locations x times. Observation noise is drawn independently per cell.
VariogramSurface inferred_variogram(const Network& network, std::span<const ParamVector> draws,
                                    const FeatureSpec& features, std::span<const std::vector<double>> locations,
                                    std::span<const double> times, const VariogramSpec& spec, std::uint64_t seed);

/// Uniform draws from the convex hull of the dataset's (2-D) locations.
std::vector<std::vector<double>> uniform_locations_in_hull(std::span<const std::vector<double>> points, std::size_t n,
                                                           std::uint64_t seed);
std::vector<std::vector<double>> uniform_locations_in_hull(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Counter-clockwise hull vertices (monotone chain).
std::vector<std::vector<double>> convex_hull(std::span<const std::vector<double>> points);
bool inside_convex_polygon(std::span<const std::vector<double>> hull, std::span<const double> p);

/// Header plus one row per populated cell: distance_bin_center,lag,gamma,pairs.
void write_surface(std::ostream& out, const VariogramSurface& surface, char delimiter = ',');

}  // namespace bayesnf
