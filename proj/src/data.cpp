#include "bayesnf/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "bayesnf/error.hpp"
#include "bayesnf/log.hpp"
#include "bayesnf/model.hpp"

namespace bayesnf {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one delimited line; double quotes group fields containing the delimiter.
std::vector<std::string> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.emplace_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.emplace_back(trim(field));
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

int parse_int(std::string_view s, std::string_view what, std::string_view text) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw InputError("invalid " + std::string(what) + " in timestamp '" + std::string(text) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool is_calendar_frequency(Frequency f) {
  return f == Frequency::kMonthly || f == Frequency::kQuarterly || f == Frequency::kYearly;
}

std::int64_t seconds_per_step(Frequency f) {
  switch (f) {
    case Frequency::kWeekly: return 604800;
    case Frequency::kDaily: return 86400;
    case Frequency::kHourly: return 3600;
    case Frequency::kMinutely: return 60;
    case Frequency::kSecondly: return 1;
    default: return 0;
  }
}

int months_per_step(Frequency f) {
  switch (f) {
    case Frequency::kMonthly: return 1;
    case Frequency::kQuarterly: return 3;
    case Frequency::kYearly: return 12;
    default: return 0;
  }
}

}  // namespace

CivilTime CivilTime::parse(std::string_view text) {
  const std::string_view s = trim(text);
  CivilTime t;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') {
    throw InputError("unrecognized timestamp '" + std::string(text) + "' (expected YYYY-MM-DD[THH:MM[:SS]])");
  }
  t.year = parse_int(s.substr(0, 4), "year", text);
  t.month = parse_int(s.substr(5, 2), "month", text);
  t.day = parse_int(s.substr(8, 2), "day", text);
  if (s.size() > 10) {
    if ((s[10] != 'T' && s[10] != ' ') || s.size() < 16 || s[13] != ':') {
      throw InputError("unrecognized time of day in '" + std::string(text) + "'");
    }
    t.hour = parse_int(s.substr(11, 2), "hour", text);
    t.minute = parse_int(s.substr(14, 2), "minute", text);
    std::string_view rest = s.substr(16);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    if (!rest.empty()) {
      if (rest.size() != 3 || rest[0] != ':') throw InputError("unrecognized seconds in '" + std::string(text) + "'");
      t.second = parse_int(rest.substr(1), "second", text);
    }
  }
  const std::chrono::year_month_day ymd{std::chrono::year{t.year}, std::chrono::month{static_cast<unsigned>(t.month)},
                                        std::chrono::day{static_cast<unsigned>(t.day)}};
  if (!ymd.ok() || t.hour < 0 || t.hour > 23 || t.minute < 0 || t.minute > 59 || t.second < 0 || t.second > 59) {
    throw InputError("invalid calendar timestamp '" + std::string(text) + "'");
  }
  return t;
}

std::int64_t CivilTime::epoch_seconds() const {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  const std::int64_t days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return days * 86400 + hour * 3600 + minute * 60 + second;
}

CivilTime CivilTime::from_epoch_seconds(std::int64_t seconds) {
  const std::int64_t days = floor_div(seconds, 86400);
  std::int64_t rem = seconds - days * 86400;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  CivilTime t;
  t.year = static_cast<int>(ymd.year());
  t.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  t.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  t.hour = static_cast<int>(rem / 3600);
  rem %= 3600;
  t.minute = static_cast<int>(rem / 60);
  t.second = static_cast<int>(rem % 60);
  return t;
}

std::string CivilTime::format(bool with_time) const {
  char buf[32];
  if (with_time) {
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", year, month, day, hour, minute, second);
  } else {
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  }
  return buf;
}

// ---------------------------------------------------------------------------

RawTable parse_table(std::istream& in, const TableSchema& schema, std::string_view source) {
  const std::string src(source);
  std::string line;
  if (!std::getline(in, line)) throw InputError(src + ": empty file (header required)");
  const auto header = split_fields(line, schema.delimiter);
  auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw InputError(src + ": missing column '" + name + "'");
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t loc_col = *column(schema.location_column, true);
  const std::size_t time_col = *column(schema.time_column, true);
  const auto value_col = column(schema.value_column, false);
  std::vector<std::size_t> coord_cols, cov_cols;
  for (const auto& c : schema.coordinate_columns) coord_cols.push_back(*column(c, true));
  for (const auto& c : schema.covariate_columns) cov_cols.push_back(*column(c, true));

  auto is_missing = [&](const std::string& s) {
    return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), s) != schema.missing_tokens.end();
  };

  RawTable table;
  table.schema = schema;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> seen;
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> coords_of;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw InputError(src + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t col, const std::string& name) {
      const auto v = parse_double(fields[col]);
      if (!v || !std::isfinite(*v)) {
        throw InputError(src + ":" + std::to_string(line_no) + ": invalid number '" + fields[col] + "' in column '" +
                         name + "'");
      }
      return *v;
    };
    RawRow row;
    row.line = line_no;
    row.location_id = fields[loc_col];
    for (std::size_t i = 0; i < coord_cols.size(); ++i) row.coords.push_back(number(coord_cols[i], schema.coordinate_columns[i]));
    for (std::size_t i = 0; i < cov_cols.size(); ++i) row.covariates.push_back(number(cov_cols[i], schema.covariate_columns[i]));
    try {
      row.timestamp = CivilTime::parse(fields[time_col]);
    } catch (const InputError& e) {
      throw InputError(src + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (value_col && !is_missing(fields[*value_col])) row.value = number(*value_col, schema.value_column);

    const auto key = std::make_pair(row.location_id, row.timestamp.epoch_seconds());
    if (const auto it = seen.find(key); it != seen.end()) {
      throw InputError(src + ": duplicate (location, timestamp) (" + row.location_id + ", " + fields[time_col] +
                       ") at lines " + std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    seen.emplace(key, line_no);
    const auto [it, inserted] = coords_of.try_emplace(row.location_id, row.coords, line_no);
    if (!inserted && it->second.first != row.coords) {
      throw InputError(src + ":" + std::to_string(line_no) + ": coordinates of location '" + row.location_id +
                       "' differ from line " + std::to_string(it->second.second));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

RawTable load_table(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file '" + path.string() + "'");
  return parse_table(in, schema, path.string());
}

void write_table(std::ostream& out, const RawTable& table) {
  const auto& s = table.schema;
  const char d = s.delimiter;
  out << s.location_column;
  for (const auto& c : s.coordinate_columns) out << d << c;
  out << d << s.time_column << d << s.value_column;
  for (const auto& c : s.covariate_columns) out << d << c;
  out << '\n';
  bool with_time = false;
  for (const auto& r : table.rows) with_time = with_time || r.timestamp.has_time_of_day();
  for (const auto& r : table.rows) {
    out << r.location_id;
    for (double v : r.coords) out << d << format_double(v);
    out << d << r.timestamp.format(with_time) << d;
    if (r.value) out << format_double(*r.value);
    for (double v : r.covariates) out << d << format_double(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

double encode_time(const CivilTime& time, const CivilTime& origin, Frequency frequency) {
  if (is_calendar_frequency(frequency)) {
    if (time.day != origin.day || time.hour != origin.hour || time.minute != origin.minute ||
        time.second != origin.second) {
      throw InputError("timestamp " + time.format(true) + " is off the " + std::string(to_string(frequency)) +
                       " grid anchored at " + origin.format(true));
    }
    const int months = (time.year - origin.year) * 12 + (time.month - origin.month);
    const int step = months_per_step(frequency);
    if (months % step != 0) {
      throw InputError("timestamp " + time.format(false) + " is off the " + std::string(to_string(frequency)) +
                       " grid anchored at " + origin.format(false));
    }
    return static_cast<double>(months / step);
  }
  const std::int64_t delta = time.epoch_seconds() - origin.epoch_seconds();
  const std::int64_t step = seconds_per_step(frequency);
  if (delta % step != 0) {
    throw InputError("timestamp " + time.format(true) + " is off the " + std::string(to_string(frequency)) +
                     " grid anchored at " + origin.format(true));
  }
  return static_cast<double>(delta / step);
}

CivilTime decode_time(double steps, const CivilTime& origin, Frequency frequency) {
  const auto k = static_cast<std::int64_t>(std::llround(steps));
  if (is_calendar_frequency(frequency)) {
    const std::int64_t total = static_cast<std::int64_t>(origin.year) * 12 + (origin.month - 1) + k * months_per_step(frequency);
    CivilTime t = origin;
    t.year = static_cast<int>(floor_div(total, 12));
    t.month = static_cast<int>(total - floor_div(total, 12) * 12) + 1;
    return t;
  }
  return CivilTime::from_epoch_seconds(origin.epoch_seconds() + k * seconds_per_step(frequency));
}

std::vector<SpaceTimeIndex> Dataset::indices() const {
  std::vector<SpaceTimeIndex> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.index);
  return out;
}

std::vector<double> Dataset::values() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.value);
  return out;
}

Dataset encode(const RawTable& table, Frequency frequency, const EncodeOptions& options) {
  Dataset ds;
  ds.schema = table.schema;
  ds.frequency = frequency;
  if (options.origin) {
    ds.origin = *options.origin;
  } else if (!table.rows.empty()) {
    ds.origin = std::min_element(table.rows.begin(), table.rows.end(), [](const RawRow& a, const RawRow& b) {
                  return a.timestamp < b.timestamp;
                })->timestamp;
  }
  std::map<std::string, std::size_t> location_index;
  for (const auto& row : table.rows) {
    auto [it, inserted] = location_index.try_emplace(row.location_id, ds.locations.size());
    if (inserted) ds.locations.push_back(Location{row.location_id, row.coords});
    double t = 0.0;
    try {
      t = encode_time(row.timestamp, ds.origin, frequency);
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(row.line) + ": " + e.what());
    }
    if (!row.value && !options.keep_missing) continue;
    Record rec;
    rec.index = SpaceTimeIndex{row.coords, t};
    rec.value = row.value ? *row.value : std::numeric_limits<double>::quiet_NaN();
    rec.location = it->second;
    rec.covariates = row.covariates;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

RawTable to_table(const Dataset& dataset) {
  RawTable table;
  table.schema = dataset.schema;
  for (const auto& rec : dataset.records) {
    RawRow row;
    row.location_id = dataset.locations.at(rec.location).id;
    row.coords = rec.index.space;
    row.timestamp = decode_time(rec.index.time, dataset.origin, dataset.frequency);
    if (!std::isnan(rec.value)) row.value = rec.value;
    row.covariates = rec.covariates;
    table.rows.push_back(std::move(row));
  }
  return table;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> record_indices) {
  Dataset out;
  out.locations = dataset.locations;
  out.origin = dataset.origin;
  out.frequency = dataset.frequency;
  out.schema = dataset.schema;
  out.records.reserve(record_indices.size());
  for (std::size_t i : record_indices) out.records.push_back(dataset.records.at(i));
  return out;
}

// ---------------------------------------------------------------------------

SplitPlan plan_splits(const Dataset& dataset, std::size_t n_splits, double holdout_fraction, std::uint64_t seed) {
  const std::size_t n_loc = dataset.locations.size();
  if (n_splits < 1 || n_splits > n_loc) {
    throw InputError("make_splits: need 1 <= n_splits <= #locations (" + std::to_string(n_loc) + "), got " +
                     std::to_string(n_splits));
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InputError("make_splits: holdout fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(n_loc);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 17));
  std::shuffle(order.begin(), order.end(), rng);
  SplitPlan plan;
  plan.n_splits = n_splits;
  plan.holdout_fraction = holdout_fraction;
  plan.assignment.resize(n_loc);
  for (std::size_t i = 0; i < n_loc; ++i) plan.assignment[order[i]] = i * n_splits / n_loc;
  return plan;
}

TrainTestSplit make_split(const Dataset& dataset, const SplitPlan& plan, std::size_t split_index) {
  if (split_index >= plan.n_splits) throw InputError("split index out of range");
  if (plan.assignment.size() != dataset.locations.size()) throw StateError("split plan does not match dataset");
  std::vector<std::vector<std::size_t>> by_location(dataset.locations.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) by_location[dataset.records[i].location].push_back(i);

  std::vector<char> is_test(dataset.records.size(), 0);
  for (std::size_t loc = 0; loc < by_location.size(); ++loc) {
    if (plan.assignment[loc] != split_index) continue;
    auto& recs = by_location[loc];
    const std::size_t n_obs = recs.size();
    const auto n_test = static_cast<std::size_t>(std::ceil(plan.holdout_fraction * static_cast<double>(n_obs) - 1e-9));
    if (n_test == 0) continue;
    if (n_obs < 2) {
      warn("location '" + dataset.locations[loc].id + "' has fewer than 2 observations; kept in training data");
      continue;
    }
    std::stable_sort(recs.begin(), recs.end(), [&](std::size_t a, std::size_t b) {
      return dataset.records[a].index.time < dataset.records[b].index.time;
    });
    for (std::size_t i = n_obs - n_test; i < n_obs; ++i) is_test[recs[i]] = 1;
  }
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) (is_test[i] ? test : train).push_back(i);
  return TrainTestSplit{subset(dataset, train), subset(dataset, test)};
}

std::vector<TrainTestSplit> make_splits(const Dataset& dataset, std::size_t n_splits, double holdout_fraction,
                                        std::uint64_t seed) {
  const SplitPlan plan = plan_splits(dataset, n_splits, holdout_fraction, seed);
  std::vector<TrainTestSplit> out;
  out.reserve(n_splits);
  for (std::size_t k = 0; k < n_splits; ++k) out.push_back(make_split(dataset, plan, k));
  return out;
}

}  // namespace bayesnf
