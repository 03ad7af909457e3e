#include "bayesnf/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "bayesnf/error.hpp"
#include "bayesnf/log.hpp"
#include "bayesnf/predict.hpp"
#include "json.hpp"

namespace bayesnf {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kCheckpointVersion = 1;

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("cannot read checkpoint file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json parse_json_file(const fs::path& path) {
  try {
    return ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw StateError("corrupt checkpoint file " + path.string() + ": " + e.what());
  }
}

std::string member_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03zu.json", k);
  return buf;
}

ordered_json spec_json(const FeatureSpec& s) {
  ordered_json j;
  j["dim"] = s.dim;
  j["linear"] = s.use_linear;
  j["time_space_interactions"] = s.use_time_space_interactions;
  j["space_space_interactions"] = s.use_space_space_interactions;
  ordered_json seasonal = ordered_json::array();
  for (const auto& t : s.seasonal) seasonal.push_back({{"period", t.period}, {"harmonics", t.harmonics}});
  j["seasonal"] = std::move(seasonal);
  j["spatial_fourier"] = s.spatial_fourier;
  ordered_json bounds = ordered_json::array();
  for (const auto& b : s.spatial_bounds) bounds.push_back({b.min, b.max});
  j["spatial_bounds"] = std::move(bounds);
  j["exogenous"] = s.exogenous;
  j["poly_shift"] = s.poly_shift;
  j["poly_scale"] = s.poly_scale;
  return j;
}

FeatureSpec spec_from_json(const ordered_json& j) {
  FeatureSpec s;
  s.dim = j.at("dim").get<std::size_t>();
  s.use_linear = j.at("linear").get<bool>();
  s.use_time_space_interactions = j.at("time_space_interactions").get<bool>();
  s.use_space_space_interactions = j.at("space_space_interactions").get<bool>();
  for (const auto& t : j.at("seasonal")) {
    s.seasonal.push_back({t.at("period").get<double>(), t.at("harmonics").get<std::vector<int>>()});
  }
  s.spatial_fourier = j.at("spatial_fourier").get<std::vector<std::vector<int>>>();
  for (const auto& b : j.at("spatial_bounds")) s.spatial_bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  s.exogenous = j.at("exogenous").get<std::vector<std::string>>();
  s.poly_shift = j.at("poly_shift").get<std::vector<double>>();
  s.poly_scale = j.at("poly_scale").get<std::vector<double>>();
  return s;
}

void hash_doubles(std::uint64_t& h, const std::vector<double>& v) {
  h = fnv1a(v.data(), v.size() * sizeof(double), h);
}

std::string train_log_csv(const PosteriorEnsemble& ens) {
  std::string out = "member,step,epoch,objective\n";
  for (std::size_t k = 0; k < ens.traces.size(); ++k) {
    for (const auto& p : ens.traces[k]) {
      out += std::to_string(k) + ',' + std::to_string(p.step) + ',' + std::to_string(p.epoch) + ',' + num(p.objective) +
             '\n';
    }
  }
  return out;
}

std::vector<TracePoint> parse_train_log(const fs::path& path, std::size_t member) {
  std::vector<TracePoint> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::size_t k = 0;
    TracePoint p;
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%lf", &k, &p.step, &p.epoch, &p.objective) == 4 && k == member) {
      out.push_back(p);
    }
  }
  return out;
}

void require_hash_match(const RunConfig& config, const Checkpoint& ck) {
  const std::uint64_t h = model_hash(config);
  if (h != ck.model_hash) {
    throw StateError("config does not match checkpoint (model hash " + hex64(h) + " vs " + hex64(ck.model_hash) + ")");
  }
}

std::vector<ParamVector> checkpoint_draws(const Checkpoint& ck) {
  return predictive_draws(ck.ensemble, ck.config.prediction.n_draws, ck.config.prediction.seed);
}

std::string quantile_label(double q) { return "q" + num(q); }

struct Scored {
  std::vector<double> y, median, lower, upper;
};

Scored score_rows(const Checkpoint& ck, const Dataset& ds) {
  const Network network(ck.ensemble.config);
  const auto draws = checkpoint_draws(ck);
  std::vector<SpaceTimeIndex> idx;
  std::vector<std::vector<double>> exo;
  Scored s;
  for (const auto& r : ds.records) {
    if (std::isnan(r.value)) continue;
    idx.push_back(r.index);
    exo.push_back(r.covariates);
    s.y.push_back(r.value);
  }
  if (ck.features.exogenous.empty()) exo.clear();
  const std::vector<double> qs = {0.5, 0.025, 0.975};
  const auto batch = predict_batch(network, draws, ck.features, idx, exo, qs);
  for (const auto& row : batch.quantiles) {
    s.median.push_back(row[0]);
    s.lower.push_back(row[1]);
    s.upper.push_back(row[2]);
  }
  return s;
}

}  // namespace

std::uint64_t values_hash(const PosteriorEnsemble& ensemble) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (ensemble.method == Method::kVi) {
    for (const auto& v : ensemble.variational) {
      hash_doubles(h, v.mean);
      hash_doubles(h, v.raw_scale);
    }
  } else {
    for (const auto& m : ensemble.members) hash_doubles(h, m.values);
  }
  return h;
}

void write_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  const auto& ens = ck.ensemble;
  ordered_json members = ordered_json::array();
  for (std::size_t k = 0; k < ens.size(); ++k) {
    ordered_json m;
    m["member"] = k;
    m["seed"] = ens.member_seeds.at(k);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    if (ens.method == Method::kVi) {
      m["mean"] = ens.variational[k].mean;
      m["raw_scale"] = ens.variational[k].raw_scale;
      hash_doubles(h, ens.variational[k].mean);
      hash_doubles(h, ens.variational[k].raw_scale);
    } else {
      m["values"] = ens.members[k].values;
      hash_doubles(h, ens.members[k].values);
    }
    write_atomic(dir / member_file(k), m.dump() + "\n");
    members.push_back({{"file", member_file(k)}, {"seed", ens.member_seeds[k]}, {"values_hash", hex64(h)}});
  }
  write_atomic(dir / "train_log.csv", train_log_csv(ens));

  ordered_json man;
  man["version"] = kCheckpointVersion;
  man["model_hash"] = hex64(ck.model_hash);
  man["values_hash"] = hex64(values_hash(ens));
  man["method"] = std::string(to_string(ens.method));
  man["n_params"] = ParamLayout::for_config(ens.config).size;
  man["origin"] = ck.origin.format(true);
  man["frequency"] = std::string(to_string(ck.config.data.frequency));
  man["split_index"] = ck.split_index ? ordered_json(*ck.split_index) : ordered_json(nullptr);
  man["time_range"] = {ck.time_min, ck.time_max};
  man["train_locations"] = ck.train_locations;
  man["features"] = spec_json(ck.features);
  man["members"] = std::move(members);
  man["config"] = ordered_json::parse(dump_config(ck.config));
  // Manifest last: a directory without one is never mistaken for a checkpoint.
  write_atomic(dir / "manifest.json", man.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw StateError("no checkpoint at " + dir.string() + " (manifest.json missing)");
  const ordered_json man = parse_json_file(manifest);
  Checkpoint ck;
  try {
    if (man.at("version").get<int>() != kCheckpointVersion) throw StateError("unsupported checkpoint version");
    try {
      ck.config = parse_config(man.at("config").dump());
    } catch (const InputError& e) {
      throw StateError(std::string("checkpoint config is invalid: ") + e.what());
    }
    ck.model_hash = std::stoull(man.at("model_hash").get<std::string>(), nullptr, 16);
    if (ck.model_hash != model_hash(ck.config)) throw StateError("checkpoint manifest hash does not match its config");
    ck.features = spec_from_json(man.at("features"));
    ck.origin = CivilTime::parse(man.at("origin").get<std::string>());
    if (!man.at("split_index").is_null()) ck.split_index = man.at("split_index").get<std::size_t>();
    ck.time_min = man.at("time_range").at(0).get<double>();
    ck.time_max = man.at("time_range").at(1).get<double>();
    ck.train_locations = man.at("train_locations").get<std::vector<std::vector<double>>>();

    auto& ens = ck.ensemble;
    ens.method = parse_method(man.at("method").get<std::string>());
    ens.config = ck.config.network();
    const ParamLayout layout = ParamLayout::for_config(ens.config);
    if (man.at("n_params").get<std::size_t>() != layout.size) throw StateError("checkpoint layout size mismatch");
    if (feature_count(ck.features) != ens.config.input_dim) {
      throw StateError("checkpoint feature spec does not match the network input size");
    }
    std::size_t k = 0;
    for (const auto& entry : man.at("members")) {
      const ordered_json m = parse_json_file(dir / entry.at("file").get<std::string>());
      ens.member_seeds.push_back(entry.at("seed").get<std::uint64_t>());
      std::uint64_t h = 0xcbf29ce484222325ULL;
      if (ens.method == Method::kVi) {
        VariationalParams vp;
        vp.mean = m.at("mean").get<std::vector<double>>();
        vp.raw_scale = m.at("raw_scale").get<std::vector<double>>();
        vp.layout = layout;
        if (vp.mean.size() != layout.size || vp.raw_scale.size() != layout.size) {
          throw StateError("member " + std::to_string(k) + " has the wrong parameter count");
        }
        hash_doubles(h, vp.mean);
        hash_doubles(h, vp.raw_scale);
        ens.variational.push_back(std::move(vp));
      } else {
        ParamVector pv{m.at("values").get<std::vector<double>>(), layout};
        if (pv.values.size() != layout.size) {
          throw StateError("member " + std::to_string(k) + " has the wrong parameter count");
        }
        hash_doubles(h, pv.values);
        ens.members.push_back(std::move(pv));
      }
      if (hex64(h) != entry.at("values_hash").get<std::string>()) {
        throw StateError("member " + std::to_string(k) + " does not match its manifest hash");
      }
      ens.traces.push_back(parse_train_log(dir / "train_log.csv", k));
      ++k;
    }
    if (ens.size() == 0) throw StateError("checkpoint has no members");
    ck.values_hash = values_hash(ens);
  } catch (const nlohmann::json::exception& e) {
    throw StateError("corrupt checkpoint manifest " + manifest.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw StateError("corrupt checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  return ck;
}

Dataset load_dataset(const RunConfig& config, const std::string& path, const EncodeOptions& options) {
  if (path.empty()) throw InputError("no data file given (set data.path or pass --data)");
  if (!fs::exists(path)) throw InputError("data file not found: " + path);
  return encode(load_table(path, config.data.schema), config.data.frequency, options);
}

Checkpoint cmd_train(const RunConfig& config, const TrainRequest& request) {
  config.validate();
  const Dataset all = load_dataset(config, config.data.path);
  if (all.records.empty()) throw InputError("no observed rows in " + config.data.path);

  Checkpoint ck;
  ck.config = config;
  ck.model_hash = model_hash(config);
  ck.origin = all.origin;
  ck.split_index = request.split_index;
  Dataset train = all;
  if (request.split_index) {
    if (*request.split_index >= config.splits.n_splits) {
      throw InputError("split index " + std::to_string(*request.split_index) + " out of range for " +
                       std::to_string(config.splits.n_splits) + " splits");
    }
    const SplitPlan plan = plan_splits(all, config.splits.n_splits, config.splits.holdout_fraction, config.splits.seed);
    train = make_split(all, plan, *request.split_index).train;
  }
  const auto indices = train.indices();
  ck.features = fit_feature_spec(config, indices);
  ck.time_min = std::numeric_limits<double>::infinity();
  ck.time_max = -ck.time_min;
  for (const auto& i : indices) {
    ck.time_min = std::min(ck.time_min, i.time);
    ck.time_max = std::max(ck.time_max, i.time);
  }
  for (const auto& loc : all.locations) ck.train_locations.push_back(loc.coords);

  FitOptions options;
  options.threads = config.threads;
  ck.ensemble = fit(config.network(), train, ck.features, config.train, options);
  ck.values_hash = values_hash(ck.ensemble);
  save_checkpoint(config.paths.checkpoint, ck);
  return ck;
}

std::string cmd_predict(const fs::path& checkpoint_dir, const std::string& query_path,
                        const std::vector<double>& quantiles, const RunConfig* config) {
  const Checkpoint ck = load_checkpoint(checkpoint_dir);
  if (config) require_hash_match(*config, ck);
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw InputError("quantile outside (0, 1): " + num(q));
  }
  const auto& schema = ck.config.data.schema;

  RawTable table;
  table.schema = schema;
  if (!fs::exists(query_path)) throw InputError("query file not found: " + query_path);
  if (fs::file_size(query_path) > 0) table = load_table(query_path, schema);
  EncodeOptions opts;
  opts.origin = ck.origin;
  opts.keep_missing = true;
  const Dataset ds = encode(table, ck.config.data.frequency, opts);

  std::string out = schema.location_column;
  for (const auto& c : schema.coordinate_columns) out += schema.delimiter + c;
  out += schema.delimiter + schema.time_column;
  out += schema.delimiter + std::string("t");
  out += schema.delimiter + std::string("mean");
  for (double q : quantiles) out += schema.delimiter + quantile_label(q);
  out += '\n';
  if (ds.records.empty()) return out;

  const Network network(ck.ensemble.config);
  const auto draws = checkpoint_draws(ck);
  std::vector<SpaceTimeIndex> idx;
  std::vector<std::vector<double>> exo;
  for (const auto& r : ds.records) {
    idx.push_back(r.index);
    exo.push_back(r.covariates);
  }
  if (ck.features.exogenous.empty()) exo.clear();
  const auto batch = predict_batch(network, draws, ck.features, idx, exo, quantiles);
  bool with_time = false;
  for (const auto& r : table.rows) with_time = with_time || r.timestamp.has_time_of_day();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& row = table.rows[i];
    out += row.location_id;
    for (double c : row.coords) out += schema.delimiter + num(c);
    out += schema.delimiter + row.timestamp.format(with_time);
    out += schema.delimiter + num(ds.records[i].index.time);
    out += schema.delimiter + num(batch.mean[i]);
    for (double q : batch.quantiles[i]) out += schema.delimiter + num(q);
    out += '\n';
  }
  return out;
}

std::string EvaluateResult::to_csv() const {
  std::string out = "split," + ScoreReport::header() + "\n";
  for (std::size_t k = 0; k < per_split.size(); ++k) out += std::to_string(k) + "," + per_split[k].to_record() + "\n";
  out += "mean," + mean.to_record() + "\n";
  return out;
}

EvaluateResult cmd_evaluate(const std::vector<fs::path>& checkpoints, const std::string& data_path,
                            std::optional<std::size_t> split_index, const RunConfig* config) {
  if (checkpoints.empty()) throw InputError("evaluate: no checkpoint given");
  EvaluateResult result;
  for (const auto& dir : checkpoints) {
    const Checkpoint ck = load_checkpoint(dir);
    if (config) require_hash_match(*config, ck);
    const std::string path = data_path.empty() ? ck.config.data.path : data_path;
    EncodeOptions opts;
    opts.origin = ck.origin;
    const Dataset all = load_dataset(ck.config, path, opts);
    const auto k = split_index ? split_index : ck.split_index;
    Dataset test = all;
    if (k) {
      const auto& sc = ck.config.splits;
      if (*k >= sc.n_splits) throw InputError("split index " + std::to_string(*k) + " out of range");
      test = make_split(all, plan_splits(all, sc.n_splits, sc.holdout_fraction, sc.seed), *k).test;
    }
    const Scored s = score_rows(ck, test);
    if (s.y.empty()) throw InputError("evaluate: no observed test rows for " + dir.string());
    result.per_split.push_back(score(s.y, s.median, s.lower, s.upper, 0.05));
  }
  auto& m = result.mean;
  const double n = static_cast<double>(result.per_split.size());
  for (const auto& r : result.per_split) {
    m.rmse += r.rmse / n;
    m.mae += r.mae / n;
    m.mis += r.mis / n;
    m.n += r.n;
  }
  return result;
}

RawTable cmd_simulate(const RunConfig& config, std::size_t n_locations, std::size_t n_times, std::uint64_t seed) {
  config.validate();
  if (n_locations == 0 || n_times == 0) throw InputError("simulate: need at least one location and one time");
  if (!config.data.schema.covariate_columns.empty()) {
    throw InputError("simulate: configs with covariate columns cannot be simulated");
  }
  FeatureSpec spec = config.feature_recipe();
  if (spec.spatial_bounds.empty()) spec.spatial_bounds.assign(spec.dim, SpatialBound{});

  std::mt19937_64 rng(mix_seed(seed, 7));
  std::vector<std::vector<double>> locs(n_locations);
  for (auto& loc : locs) {
    for (const auto& b : spec.spatial_bounds) loc.push_back(std::uniform_real_distribution<double>(b.min, b.max)(rng));
  }
  std::vector<SpaceTimeIndex> indices;
  for (std::size_t i = 0; i < n_locations; ++i) {
    for (std::size_t t = 0; t < n_times; ++t) indices.push_back({locs[i], static_cast<double>(t)});
  }
  if (config.features.standardize) fit_polynomial_scaling(spec, indices);
  const auto y = simulate_field(config.network(), seed, indices, spec);

  RawTable table;
  table.schema = config.data.schema;
  const CivilTime origin{2000, 1, 1, 0, 0, 0};
  const int width = static_cast<int>(std::to_string(n_locations - 1).size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    RawRow row;
    const std::size_t i = k / n_times;
    std::string id = std::to_string(i);
    row.location_id = "L" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    row.coords = indices[k].space;
    row.timestamp = decode_time(indices[k].time, origin, config.data.frequency);
    row.value = y[k];
    table.rows.push_back(std::move(row));
  }
  return table;
}

VariogramMode parse_variogram_mode(std::string_view name) {
  if (name == "empirical") return VariogramMode::kEmpirical;
  if (name == "inferred") return VariogramMode::kInferred;
  throw InputError("unknown variogram mode '" + std::string(name) + "' (expected empirical or inferred)");
}

VariogramSurface cmd_variogram(const RunConfig& config, VariogramMode mode, const std::string& data_path,
                               const std::optional<fs::path>& checkpoint_dir) {
  const auto& spec = config.variogram.spec;
  if (spec.distance_bins.empty()) throw InputError("variogram: variogram.distance_bins is not set");
  spec.validate();
  if (mode == VariogramMode::kEmpirical) {
    return empirical_variogram(load_dataset(config, data_path.empty() ? config.data.path : data_path), spec);
  }
  if (!checkpoint_dir) throw StateError("inferred variogram requires a checkpoint (--checkpoint)");
  const Checkpoint ck = load_checkpoint(*checkpoint_dir);
  if (!ck.features.exogenous.empty()) throw InputError("inferred variogram does not support covariate columns");
  const auto locations = uniform_locations_in_hull(ck.train_locations, config.variogram.n_locations, config.variogram.seed);
  std::vector<double> times;
  for (double t = std::ceil(ck.time_min); t <= ck.time_max; t += 1.0) times.push_back(t);
  const Network network(ck.ensemble.config);
  const auto draws = checkpoint_draws(ck);
  return inferred_variogram(network, draws, ck.features, locations, times, spec, config.variogram.seed);
}

}  // namespace bayesnf
