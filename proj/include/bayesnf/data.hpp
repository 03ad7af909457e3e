#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bayesnf/features.hpp"

namespace bayesnf {

/// Calendar timestamp with second resolution (no time zone).
struct CivilTime {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  /// Accepts YYYY-MM-DD, optionally followed by 'T' or ' ' and HH:MM[:SS].
  static CivilTime parse(std::string_view text);
  std::int64_t epoch_seconds() const;
  static CivilTime from_epoch_seconds(std::int64_t seconds);
  bool has_time_of_day() const { return hour != 0 || minute != 0 || second != 0; }
  std::string format(bool with_time) const;

  auto operator<=>(const CivilTime&) const = default;
};

struct TableSchema {
  std::string location_column = "location";
  std::vector<std::string> coordinate_columns = {"s1", "s2"};
  std::string time_column = "timestamp";
  std::string value_column = "value";
  std::vector<std::string> covariate_columns;
  char delimiter = ',';
  std::vector<std::string> missing_tokens = {"", "NA"};
};

struct RawRow {
  std::string location_id;
  std::vector<double> coords;
  CivilTime timestamp;
  std::optional<double> value;
  std::vector<double> covariates;
  std::size_t line = 0;
};

struct RawTable {
  TableSchema schema;
  std::vector<RawRow> rows;
};

/// Reads a header-bearing delimited file. The value column may be absent
/// (every row is then missing), which is how query files are read.
RawTable load_table(const std::filesystem::path& path, const TableSchema& schema);
RawTable parse_table(std::istream& in, const TableSchema& schema, std::string_view source = "<stream>");
void write_table(std::ostream& out, const RawTable& table);

struct Location {
  std::string id;
  std::vector<double> coords;
};

struct Record {
  SpaceTimeIndex index;
  double value = 0.0;  // NaN for unobserved query rows
  std::size_t location = 0;
  std::vector<double> covariates;
};

struct Dataset {
  std::vector<Record> records;
  std::vector<Location> locations;
  CivilTime origin;
  Frequency frequency = Frequency::kDaily;
  TableSchema schema;

  std::size_t dim() const { return schema.coordinate_columns.size(); }
  std::vector<SpaceTimeIndex> indices() const;
  std::vector<double> values() const;
};

struct EncodeOptions {
  std::optional<CivilTime> origin;  // defaults to the earliest timestamp
  bool keep_missing = false;        // keep rows without a value (value = NaN)
};

/// Integer-stepped time from the origin in units of `frequency`.
Dataset encode(const RawTable& table, Frequency frequency, const EncodeOptions& options = {});

double encode_time(const CivilTime& time, const CivilTime& origin, Frequency frequency);
CivilTime decode_time(double steps, const CivilTime& origin, Frequency frequency);

/// Inverse of encode (missing rows are not restored).
RawTable to_table(const Dataset& dataset);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> record_indices);

struct SplitPlan {
  std::size_t n_splits = 1;
  std::vector<std::size_t> assignment;  // location index -> split index
  double holdout_fraction = 0.1;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

SplitPlan plan_splits(const Dataset& dataset, std::size_t n_splits, double holdout_fraction, std::uint64_t seed);

/// Split k holds out the latest ceil(fraction * n_obs) observations of every
/// location assigned to partition k; everything else is training data.
std::vector<TrainTestSplit> make_splits(const Dataset& dataset, std::size_t n_splits, double holdout_fraction,
                                        std::uint64_t seed);
TrainTestSplit make_split(const Dataset& dataset, const SplitPlan& plan, std::size_t split_index);

}  // namespace bayesnf
