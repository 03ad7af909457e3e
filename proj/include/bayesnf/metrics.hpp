#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>

namespace bayesnf {

double rmse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);
/// Mean interval score of the central (1 - alpha) intervals [lower, upper].
double mis(std::span<const double> y, std::span<const double> lower, std::span<const double> upper,
           double alpha = 0.05);

struct ScoreReport {
  double rmse = 0.0;
  double mae = 0.0;
  double mis = 0.0;
  std::size_t n = 0;
  double alpha = 0.05;

  static std::string header(char delimiter = ',');
  std::string to_record(char delimiter = ',') const;
  std::string to_text() const;
};

ScoreReport score(std::span<const double> y, std::span<const double> point, std::span<const double> lower,
                  std::span<const double> upper, double alpha = 0.05);

}  // namespace bayesnf
