#include "bayesnf/variogram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

constexpr double kEarthRadiusKm = 6371.0;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Values on a dense (location x integer time) grid; NaN marks a gap.
struct Field {
  std::vector<std::vector<double>> coords;
  std::size_t n_times = 0;
  std::vector<double> values;  // [loc * n_times + t]

  double at(std::size_t loc, std::size_t t) const { return values[loc * n_times + t]; }
};

struct Accumulator {
  std::vector<double> sum;
  std::vector<std::size_t> count;
};

long long integer_time(double t) {
  const double r = std::round(t);
  if (std::abs(t - r) > 1e-9) throw InputError("variogram: time " + std::to_string(t) + " is not an integer step");
  return static_cast<long long>(r);
}

std::size_t find_bin(const std::vector<double>& edges, double d) {
  if (d < edges.front() || d >= edges.back()) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin()) - 1;
}

Accumulator accumulate(const Field& field, const VariogramSpec& spec) {
  const std::size_t n_lags = spec.time_lags.size();
  const std::size_t n_loc = field.coords.size();
  Accumulator acc;
  acc.sum.assign(spec.n_bins() * n_lags, 0.0);
  acc.count.assign(spec.n_bins() * n_lags, 0);
  for (std::size_t a = 0; a < n_loc; ++a) {
    for (std::size_t b = 0; b < n_loc; ++b) {
      const std::size_t bin = find_bin(spec.distance_bins, distance(spec.metric, field.coords[a], field.coords[b]));
      if (bin == std::numeric_limits<std::size_t>::max()) continue;
      for (std::size_t li = 0; li < n_lags; ++li) {
        const auto lag = static_cast<std::size_t>(spec.time_lags[li]);
        if (lag == 0 && b <= a) continue;
        if (lag >= field.n_times) continue;
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t + lag < field.n_times; ++t) {
          const double ya = field.at(a, t), yb = field.at(b, t + lag);
          if (std::isnan(ya) || std::isnan(yb)) continue;
          sum += (ya - yb) * (ya - yb);
          ++count;
        }
        acc.sum[bin * n_lags + li] += sum;
        acc.count[bin * n_lags + li] += count;
      }
    }
  }
  return acc;
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double cross(std::span<const double> o, std::span<const double> a, std::span<const double> b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

}  // namespace

DistanceMetric parse_distance_metric(std::string_view name) {
  if (name == "euclidean") return DistanceMetric::kEuclidean;
  if (name == "haversine") return DistanceMetric::kHaversine;
  throw InputError("unknown distance metric '" + std::string(name) + "'");
}

std::string_view to_string(DistanceMetric metric) {
  return metric == DistanceMetric::kEuclidean ? "euclidean" : "haversine";
}

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * kRad;
  const double dlon = (lon2 - lon1) * kRad;
  const double s = std::sin(0.5 * dlat), c = std::sin(0.5 * dlon);
  const double h = s * s + std::cos(lat1 * kRad) * std::cos(lat2 * kRad) * c * c;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double distance(DistanceMetric metric, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("distance: coordinate dimensions differ");
  if (metric == DistanceMetric::kHaversine) {
    if (a.size() != 2) throw InputError("haversine distance needs (lon, lat) coordinates");
    return haversine_km(a[0], a[1], b[0], b[1]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(total);
}

void VariogramSpec::validate() const {
  if (distance_bins.size() < 2) throw InputError("variogram: need at least two distance bin edges");
  for (std::size_t i = 0; i < distance_bins.size(); ++i) {
    if (!std::isfinite(distance_bins[i]) || distance_bins[i] < 0.0) {
      throw InputError("variogram: bin edges must be finite and nonnegative");
    }
    if (i > 0 && distance_bins[i] <= distance_bins[i - 1]) {
      throw InputError("variogram: bin edges must be strictly increasing");
    }
  }
  if (time_lags.empty()) throw InputError("variogram: no time lags");
  for (int lag : time_lags)
    if (lag < 0) throw InputError("variogram: time lags must be nonnegative");
  if (min_pairs < 1) throw InputError("variogram: min_pairs must be at least 1");
}

const VariogramCell& VariogramSurface::at(std::size_t bin, std::size_t lag_index) const {
  return cells.at(bin * spec.time_lags.size() + lag_index);
}

double VariogramSurface::bin_center(std::size_t bin) const {
  return 0.5 * (spec.distance_bins.at(bin) + spec.distance_bins.at(bin + 1));
}

VariogramSurface empirical_variogram(const Dataset& dataset, const VariogramSpec& spec) {
  spec.validate();
  if (dataset.locations.size() < 2) throw InputError("variogram: dataset needs at least two locations");
  if (dataset.records.empty()) throw InputError("variogram: dataset has no observations");

  long long t_min = std::numeric_limits<long long>::max(), t_max = std::numeric_limits<long long>::min();
  for (const auto& r : dataset.records) {
    const long long t = integer_time(r.index.time);
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  }
  Field field;
  for (const auto& loc : dataset.locations) field.coords.push_back(loc.coords);
  field.n_times = static_cast<std::size_t>(t_max - t_min + 1);
  field.values.assign(field.coords.size() * field.n_times, kNan);
  for (const auto& r : dataset.records) {
    if (std::isnan(r.value)) continue;
    field.values[r.location * field.n_times + static_cast<std::size_t>(integer_time(r.index.time) - t_min)] = r.value;
  }

  const Accumulator acc = accumulate(field, spec);
  std::size_t total = 0;
  VariogramSurface surface;
  surface.spec = spec;
  surface.cells.resize(acc.sum.size());
  for (std::size_t i = 0; i < acc.sum.size(); ++i) {
    total += acc.count[i];
    auto& cell = surface.cells[i];
    cell.pairs = acc.count[i];
    cell.populated = acc.count[i] >= spec.min_pairs;
    if (cell.populated) cell.gamma = 0.5 * acc.sum[i] / static_cast<double>(acc.count[i]);
  }
  if (total == 0) throw InputError("variogram: no qualifying pairs for the requested bins and lags");
  return surface;
}

VariogramSurface inferred_variogram(const Network& network, std::span<const ParamVector> draws,
                                    const FeatureSpec& features, std::span<const std::vector<double>> locations,
                                    std::span<const double> times, const VariogramSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (draws.empty()) throw StateError("inferred variogram: no parameter draws");
  if (locations.empty() || times.empty()) throw InputError("inferred variogram: empty location or time grid");
  if (!features.exogenous.empty()) throw InputError("inferred variogram: exogenous covariates are not supported");
  const std::size_t m = feature_count(features);
  if (m != network.config().input_dim) throw StateError("inferred variogram: feature spec does not match network");

  long long t_min = std::numeric_limits<long long>::max(), t_max = std::numeric_limits<long long>::min();
  for (double t : times) {
    t_min = std::min(t_min, integer_time(t));
    t_max = std::max(t_max, integer_time(t));
  }
  Field field;
  field.coords.assign(locations.begin(), locations.end());
  field.n_times = static_cast<std::size_t>(t_max - t_min + 1);

  const std::size_t n_loc = locations.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_loc * times.size()));
  std::vector<std::size_t> slot(n_loc * times.size());
  for (std::size_t a = 0; a < n_loc; ++a) {
    for (std::size_t j = 0; j < times.size(); ++j) {
      const std::size_t col = a * times.size() + j;
      SpaceTimeIndex idx{locations[a], times[j]};
      auto c = x.col(static_cast<Eigen::Index>(col));
      build_features_into(features, idx, {}, std::span<double>(c.data(), m));
      slot[col] = a * field.n_times + static_cast<std::size_t>(integer_time(times[j]) - t_min);
    }
  }

  const std::size_t n_cells = spec.n_bins() * spec.time_lags.size();
  std::vector<double> gamma_sum(n_cells, 0.0);
  std::vector<std::size_t> pairs(n_cells, 0);
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const Eigen::VectorXd f = network.forward_batch(draws[d].values, x);
    const ObservationParams obs = network.observation(draws[d].values);
    std::mt19937_64 rng(mix_seed(seed, d));
    field.values.assign(n_loc * field.n_times, kNan);
    for (std::size_t col = 0; col < slot.size(); ++col) {
      field.values[slot[col]] = sample_observation(obs, f[static_cast<Eigen::Index>(col)], rng);
    }
    const Accumulator acc = accumulate(field, spec);
    for (std::size_t i = 0; i < n_cells; ++i) {
      pairs[i] = acc.count[i];
      if (acc.count[i] > 0) gamma_sum[i] += 0.5 * acc.sum[i] / static_cast<double>(acc.count[i]);
    }
  }

  VariogramSurface surface;
  surface.spec = spec;
  surface.cells.resize(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) {
    auto& cell = surface.cells[i];
    cell.pairs = pairs[i];
    cell.populated = pairs[i] >= spec.min_pairs;
    if (cell.populated) cell.gamma = gamma_sum[i] / static_cast<double>(draws.size());
  }
  return surface;
}

std::vector<std::vector<double>> convex_hull(std::span<const std::vector<double>> points) {
  std::vector<std::vector<double>> pts(points.begin(), points.end());
  for (const auto& p : pts)
    if (p.size() != 2) throw InputError("convex hull: points must be two-dimensional");
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<std::vector<double>> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_convex_polygon(std::span<const std::vector<double>> hull, std::span<const double> p) {
  const std::size_t n = hull.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(hull[i], hull[(i + 1) % n], p) < 0.0) return false;
  }
  return true;
}

std::vector<std::vector<double>> uniform_locations_in_hull(std::span<const std::vector<double>> points, std::size_t n,
                                                           std::uint64_t seed) {
  const auto hull = convex_hull(points);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a[0] * b[1] - a[1] * b[0];
  }
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& p : hull) {
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  }
  if (hull.size() < 3 || !(0.5 * area > 1e-12 * std::max(1.0, (hi_x - lo_x) * (hi_y - lo_y)))) {
    throw InputError("cannot sample from a degenerate (collinear or too small) hull");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  while (out.size() < n) {
    std::vector<double> p{ux(rng), uy(rng)};
    if (inside_convex_polygon(hull, p)) out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<double>> uniform_locations_in_hull(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<std::vector<double>> pts;
  for (const auto& loc : dataset.locations) pts.push_back(loc.coords);
  return uniform_locations_in_hull(pts, n, seed);
}

void write_surface(std::ostream& out, const VariogramSurface& surface, char delimiter) {
  out << "distance_bin_center" << delimiter << "lag" << delimiter << "gamma" << delimiter << "pairs\n";
  const std::size_t n_lags = surface.spec.time_lags.size();
  for (std::size_t b = 0; b < surface.spec.n_bins(); ++b) {
    for (std::size_t l = 0; l < n_lags; ++l) {
      const auto& cell = surface.at(b, l);
      if (!cell.populated) continue;
      out << shortest(surface.bin_center(b)) << delimiter << surface.spec.time_lags[l] << delimiter
          << shortest(cell.gamma) << delimiter << cell.pairs << '\n';
    }
  }
}

}  // namespace bayesnf
