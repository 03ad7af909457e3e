#include "bayesnf/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bayesnf/error.hpp"
#include "json.hpp"

namespace bayesnf {

namespace {

using nlohmann::ordered_json;

// Every block rejects keys it does not know, so typos fail loudly.
void check_keys(const ordered_json& obj, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw InputError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw InputError("config: unknown key '" + key + "' in '" + std::string(where) + "'");
  }
}

template <typename T>
void read(const ordered_json& obj, const char* key, T& out, std::string_view where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config: bad value for '" + std::string(where) + "." + key + "': " + e.what());
  }
}

char parse_delimiter(const std::string& s) {
  if (s == "\\t" || s == "tab") return '\t';
  if (s.size() != 1) throw InputError("config: delimiter must be a single character, got '" + s + "'");
  return s[0];
}

std::string delimiter_text(char c) { return c == '\t' ? std::string("\\t") : std::string(1, c); }

void parse_data(const ordered_json& j, RunConfig& c) {
  check_keys(j, "data",
             {"path", "location_column", "coordinate_columns", "time_column", "value_column", "covariate_columns",
              "delimiter", "missing_tokens", "frequency"});
  auto& s = c.data.schema;
  read(j, "path", c.data.path, "data");
  read(j, "location_column", s.location_column, "data");
  read(j, "coordinate_columns", s.coordinate_columns, "data");
  read(j, "time_column", s.time_column, "data");
  read(j, "value_column", s.value_column, "data");
  read(j, "covariate_columns", s.covariate_columns, "data");
  read(j, "missing_tokens", s.missing_tokens, "data");
  if (j.contains("delimiter")) {
    std::string d;
    read(j, "delimiter", d, "data");
    s.delimiter = parse_delimiter(d);
  }
  if (j.contains("frequency")) {
    std::string f;
    read(j, "frequency", f, "data");
    c.data.frequency = parse_frequency(f);
  }
}

void parse_features(const ordered_json& j, RunConfig& c) {
  check_keys(j, "features",
             {"linear", "time_space_interactions", "space_space_interactions", "seasonal", "spatial_fourier",
              "spatial_bounds", "standardize"});
  auto& f = c.features;
  read(j, "linear", f.linear, "features");
  read(j, "time_space_interactions", f.time_space_interactions, "features");
  read(j, "space_space_interactions", f.space_space_interactions, "features");
  read(j, "standardize", f.standardize, "features");
  read(j, "spatial_fourier", f.spatial_fourier, "features");
  if (j.contains("seasonal")) {
    if (!j["seasonal"].is_array()) throw InputError("config: 'features.seasonal' must be an array");
    f.seasonal.clear();
    for (const auto& e : j["seasonal"]) {
      check_keys(e, "features.seasonal[]", {"period", "effect", "harmonics"});
      SeasonalEntry entry;
      if (e.contains("period")) {
        double p = 0.0;
        read(e, "period", p, "features.seasonal[]");
        entry.period = p;
      }
      if (e.contains("effect")) {
        std::string name;
        read(e, "effect", name, "features.seasonal[]");
        entry.effect = parse_seasonal_effect(name);
      }
      if (entry.period.has_value() == entry.effect.has_value()) {
        throw InputError("config: each seasonal entry needs exactly one of 'period' or 'effect'");
      }
      read(e, "harmonics", entry.harmonics, "features.seasonal[]");
      f.seasonal.push_back(std::move(entry));
    }
  }
  if (j.contains("spatial_bounds") && !j["spatial_bounds"].is_null()) {
    std::vector<std::vector<double>> raw;
    read(j, "spatial_bounds", raw, "features");
    std::vector<SpatialBound> bounds;
    for (const auto& b : raw) {
      if (b.size() != 2) throw InputError("config: each spatial bound is a [min, max] pair");
      bounds.push_back({b[0], b[1]});
    }
    f.spatial_bounds = std::move(bounds);
  }
}

void parse_network(const ordered_json& j, RunConfig& c, std::optional<std::size_t>& input_dim) {
  check_keys(j, "network", {"layers", "observation", "input_dim"});
  if (j.contains("layers")) {
    if (!j["layers"].is_array()) throw InputError("config: 'network.layers' must be an array");
    c.layers.clear();
    for (const auto& l : j["layers"]) {
      check_keys(l, "network.layers[]", {"width", "activations"});
      LayerConfig layer;
      read(l, "width", layer.width, "network.layers[]");
      std::vector<std::string> names;
      read(l, "activations", names, "network.layers[]");
      for (const auto& n : names) layer.activations.push_back(parse_activation(n));
      c.layers.push_back(std::move(layer));
    }
  }
  if (j.contains("observation")) {
    std::string name;
    read(j, "observation", name, "network");
    c.observation = parse_observation_kind(name);
  }
  if (j.contains("input_dim")) {
    std::size_t m = 0;
    read(j, "input_dim", m, "network");
    input_dim = m;
  }
}

void parse_train(const ordered_json& j, RunConfig& c) {
  check_keys(j, "train",
             {"method", "ensemble_size", "epochs", "target_steps", "batch_size", "learning_rate", "warmup_fraction",
              "decay", "seed", "vi_samples_per_step", "kl_scale_mode", "coordinates", "threads"});
  auto& t = c.train;
  std::string s;
  if (j.contains("method")) {
    read(j, "method", s, "train");
    t.method = parse_method(s);
  }
  read(j, "ensemble_size", t.ensemble_size, "train");
  if (j.contains("epochs") && !j["epochs"].is_null()) {
    std::size_t e = 0;
    read(j, "epochs", e, "train");
    t.epochs = e;
  }
  read(j, "target_steps", t.target_steps, "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "learning_rate", t.schedule.peak, "train");
  read(j, "warmup_fraction", t.schedule.warmup_fraction, "train");
  if (j.contains("decay")) {
    read(j, "decay", s, "train");
    t.schedule.decay = parse_decay_kind(s);
  }
  read(j, "seed", t.seed, "train");
  read(j, "vi_samples_per_step", t.vi_samples_per_step, "train");
  if (j.contains("kl_scale_mode")) {
    read(j, "kl_scale_mode", s, "train");
    t.kl_scale_mode = parse_kl_scale_mode(s);
  }
  if (j.contains("coordinates")) {
    read(j, "coordinates", s, "train");
    t.coordinates = parse_coordinates(s);
  }
  read(j, "threads", c.threads, "train");
}

void parse_rest(const ordered_json& j, RunConfig& c) {
  if (j.contains("prediction")) {
    const auto& p = j["prediction"];
    check_keys(p, "prediction", {"quantiles", "n_draws", "seed"});
    read(p, "quantiles", c.prediction.quantiles, "prediction");
    read(p, "n_draws", c.prediction.n_draws, "prediction");
    read(p, "seed", c.prediction.seed, "prediction");
  }
  if (j.contains("splits")) {
    const auto& p = j["splits"];
    check_keys(p, "splits", {"n_splits", "holdout_fraction", "seed"});
    read(p, "n_splits", c.splits.n_splits, "splits");
    read(p, "holdout_fraction", c.splits.holdout_fraction, "splits");
    read(p, "seed", c.splits.seed, "splits");
  }
  if (j.contains("variogram")) {
    const auto& p = j["variogram"];
    check_keys(p, "variogram", {"distance_bins", "time_lags", "metric", "min_pairs", "n_locations", "seed"});
    read(p, "distance_bins", c.variogram.spec.distance_bins, "variogram");
    read(p, "time_lags", c.variogram.spec.time_lags, "variogram");
    read(p, "min_pairs", c.variogram.spec.min_pairs, "variogram");
    read(p, "n_locations", c.variogram.n_locations, "variogram");
    read(p, "seed", c.variogram.seed, "variogram");
    if (p.contains("metric")) {
      std::string s;
      read(p, "metric", s, "variogram");
      c.variogram.spec.metric = parse_distance_metric(s);
    }
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, "paths", {"checkpoint", "output"});
    read(p, "checkpoint", c.paths.checkpoint, "paths");
    read(p, "output", c.paths.output, "paths");
  }
}

// Effects become periods so the saved form no longer depends on the frequency lookup.
void resolve_seasonal(RunConfig& c) {
  for (auto& e : c.features.seasonal) {
    if (!e.effect) continue;
    const auto p = seasonal_period(c.data.frequency, *e.effect);
    if (!p) {
      throw InputError("config: seasonal effect '" + std::string(to_string(*e.effect)) +
                       "' is finer than the data frequency '" + std::string(to_string(c.data.frequency)) + "'");
    }
    e.period = *p;
    e.effect.reset();
  }
}

ordered_json features_json(const FeatureConfig& f) {
  ordered_json j;
  j["linear"] = f.linear;
  j["time_space_interactions"] = f.time_space_interactions;
  j["space_space_interactions"] = f.space_space_interactions;
  ordered_json seasonal = ordered_json::array();
  for (const auto& e : f.seasonal) {
    ordered_json s;
    if (e.period) s["period"] = *e.period;
    if (e.effect) s["effect"] = std::string(to_string(*e.effect));
    s["harmonics"] = e.harmonics;
    seasonal.push_back(std::move(s));
  }
  j["seasonal"] = std::move(seasonal);
  j["spatial_fourier"] = f.spatial_fourier;
  if (f.spatial_bounds) {
    ordered_json b = ordered_json::array();
    for (const auto& sb : *f.spatial_bounds) b.push_back({sb.min, sb.max});
    j["spatial_bounds"] = std::move(b);
  } else {
    j["spatial_bounds"] = nullptr;
  }
  j["standardize"] = f.standardize;
  return j;
}

ordered_json network_json(const RunConfig& c) {
  ordered_json j;
  ordered_json layers = ordered_json::array();
  for (const auto& l : c.layers) {
    ordered_json lj;
    lj["width"] = l.width;
    std::vector<std::string> names;
    for (auto a : l.activations) names.emplace_back(to_string(a));
    lj["activations"] = names;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  j["observation"] = std::string(to_string(c.observation));
  j["input_dim"] = feature_count(c.feature_recipe());
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  const auto& s = c.data.schema;
  j["data"] = {{"path", c.data.path},
               {"location_column", s.location_column},
               {"coordinate_columns", s.coordinate_columns},
               {"time_column", s.time_column},
               {"value_column", s.value_column},
               {"covariate_columns", s.covariate_columns},
               {"delimiter", delimiter_text(s.delimiter)},
               {"missing_tokens", s.missing_tokens},
               {"frequency", std::string(to_string(c.data.frequency))}};
  j["features"] = features_json(c.features);
  j["network"] = network_json(c);
  const auto& t = c.train;
  ordered_json tj;
  tj["method"] = std::string(to_string(t.method));
  tj["ensemble_size"] = t.ensemble_size;
  tj["epochs"] = t.epochs ? ordered_json(*t.epochs) : ordered_json(nullptr);
  tj["target_steps"] = t.target_steps;
  tj["batch_size"] = t.batch_size;
  tj["learning_rate"] = t.schedule.peak;
  tj["warmup_fraction"] = t.schedule.warmup_fraction;
  tj["decay"] = std::string(to_string(t.schedule.decay));
  tj["seed"] = t.seed;
  tj["vi_samples_per_step"] = t.vi_samples_per_step;
  tj["kl_scale_mode"] = std::string(to_string(t.kl_scale_mode));
  tj["coordinates"] = std::string(to_string(t.coordinates));
  tj["threads"] = c.threads;
  j["train"] = std::move(tj);
  j["prediction"] = {{"quantiles", c.prediction.quantiles},
                     {"n_draws", c.prediction.n_draws},
                     {"seed", c.prediction.seed}};
  j["splits"] = {{"n_splits", c.splits.n_splits},
                 {"holdout_fraction", c.splits.holdout_fraction},
                 {"seed", c.splits.seed}};
  const auto& v = c.variogram;
  j["variogram"] = {{"distance_bins", v.spec.distance_bins},
                    {"time_lags", v.spec.time_lags},
                    {"metric", std::string(to_string(v.spec.metric))},
                    {"min_pairs", v.spec.min_pairs},
                    {"n_locations", v.n_locations},
                    {"seed", v.seed}};
  j["paths"] = {{"checkpoint", c.paths.checkpoint}, {"output", c.paths.output}};
  return j;
}

}  // namespace

RunConfig::RunConfig() {
  layers = NetworkConfig::make_default(1).layers;
  variogram.spec.time_lags = {0, 1, 2, 3};
}

FeatureSpec RunConfig::feature_recipe() const {
  FeatureSpec spec;
  spec.dim = data.schema.coordinate_columns.size();
  spec.use_linear = features.linear;
  spec.use_time_space_interactions = features.time_space_interactions;
  spec.use_space_space_interactions = features.space_space_interactions;
  for (const auto& e : features.seasonal) {
    double period = 0.0;
    if (e.period) {
      period = *e.period;
    } else if (auto p = seasonal_period(data.frequency, *e.effect)) {
      period = *p;
    } else {
      throw InputError("config: seasonal effect '" + std::string(to_string(*e.effect)) +
                       "' is finer than the data frequency");
    }
    spec.seasonal.push_back({period, e.harmonics});
  }
  spec.spatial_fourier = features.spatial_fourier;
  if (features.spatial_bounds) spec.spatial_bounds = *features.spatial_bounds;
  spec.exogenous = data.schema.covariate_columns;
  return spec;
}

NetworkConfig RunConfig::network() const {
  NetworkConfig net;
  net.layers = layers;
  net.input_dim = feature_count(feature_recipe());
  net.observation.kind = observation;
  return net;
}

void RunConfig::validate() const {
  if (data.schema.coordinate_columns.empty()) throw InputError("config: data.coordinate_columns is empty");
  FeatureSpec spec = feature_recipe();
  // Fourier terms need bounds, which may only be fitted later.
  if (spec.spatial_bounds.empty() && !spec.spatial_fourier.empty()) {
    spec.spatial_bounds.assign(spec.dim, SpatialBound{});
  }
  spec.validate();
  if (feature_count(spec) == 0) throw InputError("config: feature recipe produces no covariates");
  network().validate();
  train.validate();
  if (prediction.quantiles.empty()) throw InputError("config: prediction.quantiles is empty");
  for (double q : prediction.quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw InputError("config: prediction quantile outside (0, 1)");
  }
  if (prediction.n_draws == 0) throw InputError("config: prediction.n_draws must be positive");
  if (splits.n_splits == 0) throw InputError("config: splits.n_splits must be positive");
  if (!(splits.holdout_fraction > 0.0 && splits.holdout_fraction < 1.0)) {
    throw InputError("config: splits.holdout_fraction must lie in (0, 1)");
  }
  if (!variogram.spec.distance_bins.empty()) variogram.spec.validate();
}

RunConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  check_keys(j, "<root>", {"data", "features", "network", "train", "prediction", "splits", "variogram", "paths"});
  RunConfig c;
  std::optional<std::size_t> input_dim;
  if (j.contains("data")) parse_data(j["data"], c);
  if (j.contains("features")) parse_features(j["features"], c);
  if (j.contains("network")) parse_network(j["network"], c, input_dim);
  if (j.contains("train")) parse_train(j["train"], c);
  parse_rest(j, c);
  resolve_seasonal(c);
  c.validate();
  if (input_dim) {
    const std::size_t m = feature_count(c.feature_recipe());
    if (*input_dim != m) {
      throw InputError("config: network.input_dim is " + std::to_string(*input_dim) +
                       " but the feature recipe yields " + std::to_string(m) + " covariates");
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t model_hash(const RunConfig& config) {
  ordered_json j;
  j["coordinate_columns"] = config.data.schema.coordinate_columns;
  j["covariate_columns"] = config.data.schema.covariate_columns;
  j["frequency"] = std::string(to_string(config.data.frequency));
  j["features"] = features_json(config.features);
  j["network"] = network_json(config);
  const std::string s = j.dump();
  return fnv1a(s.data(), s.size());
}

FeatureSpec fit_feature_spec(const RunConfig& config, std::span<const SpaceTimeIndex> indices) {
  FeatureSpec spec = config.feature_recipe();
  if (!config.features.spatial_bounds) fit_spatial_bounds(spec, indices);
  if (config.features.standardize) fit_polynomial_scaling(spec, indices);
  spec.validate();
  return spec;
}

}  // namespace bayesnf
