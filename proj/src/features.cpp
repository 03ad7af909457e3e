#include "bayesnf/features.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string format_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

void FeatureSpec::validate() const {
  if (dim < 1) throw InputError("feature spec: spatial dimension must be at least 1");
  for (const auto& term : seasonal) {
    if (!(term.period > 0.0) || !std::isfinite(term.period)) {
      throw InputError("feature spec: seasonal period must be positive, got " + format_number(term.period));
    }
    const int max_harmonic = static_cast<int>(std::floor(term.period / 2.0));
    for (int h : term.harmonics) {
      if (h < 1 || h > max_harmonic) {
        throw InputError("feature spec: harmonic " + std::to_string(h) + " outside [1, " +
                         std::to_string(max_harmonic) + "] for period " + format_number(term.period));
      }
    }
  }
  if (!spatial_fourier.empty() && spatial_fourier.size() != dim) {
    throw InputError("feature spec: spatial_fourier needs one exponent set per dimension");
  }
  bool any_fourier = false;
  for (const auto& exps : spatial_fourier) {
    for (int h : exps) {
      if (h < 0 || h > 30) throw InputError("feature spec: spatial Fourier exponent out of range: " + std::to_string(h));
      any_fourier = true;
    }
  }
  if (!spatial_bounds.empty() && spatial_bounds.size() != dim) {
    throw InputError("feature spec: spatial_bounds needs one (min, max) per dimension");
  }
  if (any_fourier && spatial_bounds.empty()) {
    throw InputError("feature spec: spatial Fourier features need spatial_bounds");
  }
  for (const auto& b : spatial_bounds) {
    if (!(b.min < b.max) || !std::isfinite(b.min) || !std::isfinite(b.max)) {
      throw InputError("feature spec: spatial bound requires finite min < max");
    }
  }
  const std::size_t n_poly = polynomial_count(*this);
  if (!poly_shift.empty() || !poly_scale.empty()) {
    if (poly_shift.size() != n_poly || poly_scale.size() != n_poly) {
      throw InputError("feature spec: polynomial scaling length does not match polynomial block");
    }
    for (double s : poly_scale) {
      if (!(s > 0.0) || !std::isfinite(s)) throw InputError("feature spec: polynomial scale must be positive");
    }
  }
}

std::size_t polynomial_count(const FeatureSpec& spec) {
  const std::size_t d = spec.dim;
  std::size_t m = 0;
  if (spec.use_linear) m += 1 + d;
  if (spec.use_time_space_interactions) m += d;
  if (spec.use_space_space_interactions) m += d * (d - 1) / 2;
  return m;
}

std::size_t feature_count(const FeatureSpec& spec) {
  std::size_t m = polynomial_count(spec);
  for (const auto& term : spec.seasonal) m += 2 * term.harmonics.size();
  for (const auto& exps : spec.spatial_fourier) m += 2 * exps.size();
  m += spec.exogenous.size();
  return m;
}

std::vector<std::string> feature_names(const FeatureSpec& spec) {
  std::vector<std::string> names;
  names.reserve(feature_count(spec));
  const std::size_t d = spec.dim;
  auto s = [](std::size_t i) { return "s" + std::to_string(i + 1); };
  if (spec.use_linear) {
    names.emplace_back("t");
    for (std::size_t i = 0; i < d; ++i) names.push_back(s(i));
  }
  if (spec.use_time_space_interactions) {
    for (std::size_t i = 0; i < d; ++i) names.push_back("t*" + s(i));
  }
  if (spec.use_space_space_interactions) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) names.push_back(s(i) + "*" + s(j));
  }
  for (const auto& term : spec.seasonal) {
    const std::string p = format_number(term.period);
    for (int h : term.harmonics) {
      names.push_back("cos(2pi*" + std::to_string(h) + "*t/" + p + ")");
      names.push_back("sin(2pi*" + std::to_string(h) + "*t/" + p + ")");
    }
  }
  for (std::size_t i = 0; i < spec.spatial_fourier.size(); ++i) {
    for (int h : spec.spatial_fourier[i]) {
      names.push_back("cos(2pi*2^" + std::to_string(h) + "*" + s(i) + ")");
      names.push_back("sin(2pi*2^" + std::to_string(h) + "*" + s(i) + ")");
    }
  }
  for (const auto& col : spec.exogenous) names.push_back(col);
  return names;
}

void build_features_into(const FeatureSpec& spec, const SpaceTimeIndex& idx,
                         std::span<const double> exogenous, std::span<double> out) {
  const std::size_t d = spec.dim;
  if (idx.space.size() != d) {
    throw InputError("build_features: index has " + std::to_string(idx.space.size()) +
                     " spatial coordinates, spec expects " + std::to_string(d));
  }
  if (exogenous.size() != spec.exogenous.size()) {
    throw InputError("build_features: expected " + std::to_string(spec.exogenous.size()) +
                     " exogenous values, got " + std::to_string(exogenous.size()));
  }
  if (out.size() != feature_count(spec)) throw InputError("build_features: output length mismatch");
  if (!std::isfinite(idx.time)) throw InputError("build_features: non-finite time");
  for (double v : idx.space)
    if (!std::isfinite(v)) throw InputError("build_features: non-finite spatial coordinate");

  const double t = idx.time;
  const auto& s = idx.space;
  std::size_t k = 0;
  if (spec.use_linear) {
    out[k++] = t;
    for (std::size_t i = 0; i < d; ++i) out[k++] = s[i];
  }
  if (spec.use_time_space_interactions) {
    for (std::size_t i = 0; i < d; ++i) out[k++] = t * s[i];
  }
  if (spec.use_space_space_interactions) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) out[k++] = s[i] * s[j];
  }
  if (!spec.poly_shift.empty()) {
    for (std::size_t i = 0; i < k; ++i) out[i] = (out[i] - spec.poly_shift[i]) / spec.poly_scale[i];
  }
  for (const auto& term : spec.seasonal) {
    for (int h : term.harmonics) {
      const double angle = kTwoPi * h * t / term.period;
      out[k++] = std::cos(angle);
      out[k++] = std::sin(angle);
    }
  }
  for (std::size_t i = 0; i < spec.spatial_fourier.size(); ++i) {
    if (spec.spatial_fourier[i].empty()) continue;
    const auto& b = spec.spatial_bounds[i];
    const double shat = (s[i] - b.min) / (b.max - b.min);
    for (int h : spec.spatial_fourier[i]) {
      const double angle = kTwoPi * std::ldexp(1.0, h) * shat;
      out[k++] = std::cos(angle);
      out[k++] = std::sin(angle);
    }
  }
  for (double v : exogenous) {
    if (!std::isfinite(v)) throw InputError("build_features: non-finite exogenous value");
    out[k++] = v;
  }
}

FeatureVector build_features(const FeatureSpec& spec, const SpaceTimeIndex& idx,
                             std::span<const double> exogenous) {
  FeatureVector fv;
  fv.values.resize(feature_count(spec));
  build_features_into(spec, idx, exogenous, fv.values);
  fv.names = feature_names(spec);
  return fv;
}

void fit_polynomial_scaling(FeatureSpec& spec, std::span<const SpaceTimeIndex> indices) {
  FeatureSpec raw = spec;
  raw.poly_shift.clear();
  raw.poly_scale.clear();
  raw.seasonal.clear();
  raw.spatial_fourier.clear();
  raw.exogenous.clear();
  const std::size_t n_poly = polynomial_count(raw);
  std::vector<double> sum(n_poly, 0.0), sum_sq(n_poly, 0.0), row(n_poly);
  for (const auto& idx : indices) {
    build_features_into(raw, idx, {}, row);
    for (std::size_t i = 0; i < n_poly; ++i) {
      sum[i] += row[i];
      sum_sq[i] += row[i] * row[i];
    }
  }
  spec.poly_shift.assign(n_poly, 0.0);
  spec.poly_scale.assign(n_poly, 1.0);
  if (indices.empty()) return;
  const double n = static_cast<double>(indices.size());
  for (std::size_t i = 0; i < n_poly; ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, sum_sq[i] / n - mean * mean);
    spec.poly_shift[i] = mean;
    spec.poly_scale[i] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

void fit_spatial_bounds(FeatureSpec& spec, std::span<const SpaceTimeIndex> indices) {
  if (indices.empty()) throw InputError("fit_spatial_bounds: no indices");
  spec.spatial_bounds.assign(spec.dim, SpatialBound{std::numeric_limits<double>::infinity(),
                                                    -std::numeric_limits<double>::infinity()});
  for (const auto& idx : indices) {
    if (idx.space.size() != spec.dim) throw InputError("fit_spatial_bounds: dimension mismatch");
    for (std::size_t i = 0; i < spec.dim; ++i) {
      spec.spatial_bounds[i].min = std::min(spec.spatial_bounds[i].min, idx.space[i]);
      spec.spatial_bounds[i].max = std::max(spec.spatial_bounds[i].max, idx.space[i]);
    }
  }
  for (auto& b : spec.spatial_bounds) {
    if (!(b.min < b.max)) {
      b.min -= 0.5;
      b.max += 0.5;
    }
  }
}

namespace {

// Rows: measurement frequency (Yearly..Secondly). Columns: effect (Secondly..Yearly).
// Zero marks cells without a period.
constexpr std::array<std::array<double, 8>, 8> kPeriodTable = {{
    {0, 0, 0, 0, 0, 0, 0, 1},
    {0, 0, 0, 0, 0, 0, 1, 4},
    {0, 0, 0, 0, 0, 1, 3, 12},
    {0, 0, 0, 0, 1, 4.35, 13.045, 52.18},
    {0, 0, 0, 1, 7, 30.44, 91.32, 365.25},
    {0, 0, 1, 24, 168, 730.5, 2191.5, 8766},
    {0, 1, 60, 1440, 10080, 43830, 131490, 525960},
    {1, 60, 3600, 86400, 604800, 2629800, 7889400, 31557600},
}};

constexpr std::array<std::string_view, 8> kFrequencyNames = {"yearly", "quarterly", "monthly", "weekly",
                                                            "daily",  "hourly",    "minutely", "secondly"};
constexpr std::array<std::string_view, 8> kEffectNames = {"secondly", "minutely", "hourly",    "daily",
                                                         "weekly",   "monthly",  "quarterly", "yearly"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::optional<double> seasonal_period(Frequency frequency, SeasonalEffect effect) {
  const auto row = static_cast<std::size_t>(frequency);
  const auto col = static_cast<std::size_t>(effect);
  if (row >= kPeriodTable.size() || col >= kPeriodTable[row].size()) {
    throw InputError("seasonal_period: unknown frequency or effect");
  }
  const double p = kPeriodTable[row][col];
  if (p == 0.0) return std::nullopt;
  return p;
}

Frequency parse_frequency(std::string_view name) {
  const std::string n = lower(name);
  for (std::size_t i = 0; i < kFrequencyNames.size(); ++i)
    if (n == kFrequencyNames[i]) return static_cast<Frequency>(i);
  throw InputError("unknown frequency '" + std::string(name) + "'");
}

SeasonalEffect parse_seasonal_effect(std::string_view name) {
  const std::string n = lower(name);
  for (std::size_t i = 0; i < kEffectNames.size(); ++i)
    if (n == kEffectNames[i]) return static_cast<SeasonalEffect>(i);
  throw InputError("unknown seasonal effect '" + std::string(name) + "'");
}

std::string_view to_string(Frequency frequency) { return kFrequencyNames.at(static_cast<std::size_t>(frequency)); }
std::string_view to_string(SeasonalEffect effect) { return kEffectNames.at(static_cast<std::size_t>(effect)); }

}  // namespace bayesnf
