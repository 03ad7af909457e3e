#include "bayesnf/metrics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

void check_pair(std::span<const double> y, std::span<const double> other, const char* what) {
  if (y.empty()) throw InputError(std::string(what) + ": no observations");
  if (y.size() != other.size()) {
    throw InputError(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                     std::to_string(other.size()) + ")");
  }
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "rmse");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(total / static_cast<double>(y.size()));
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += std::abs(y[i] - yhat[i]);
  return total / static_cast<double>(y.size());
}

double mis(std::span<const double> y, std::span<const double> lower, std::span<const double> upper, double alpha) {
  check_pair(y, lower, "mis");
  check_pair(y, upper, "mis");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("mis: alpha must lie in (0, 1)");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double l = lower[i], u = upper[i];
    if (l > u) throw InputError("mis: interval " + std::to_string(i) + " has lower > upper");
    double s = u - l;
    if (y[i] < l) s += 2.0 / alpha * (l - y[i]);
    if (y[i] > u) s += 2.0 / alpha * (y[i] - u);
    total += s;
  }
  return total / static_cast<double>(y.size());
}

ScoreReport score(std::span<const double> y, std::span<const double> point, std::span<const double> lower,
                  std::span<const double> upper, double alpha) {
  ScoreReport r;
  r.rmse = rmse(y, point);
  r.mae = mae(y, point);
  r.mis = mis(y, lower, upper, alpha);
  r.n = y.size();
  r.alpha = alpha;
  return r;
}

std::string ScoreReport::header(char delimiter) {
  std::string d(1, delimiter);
  return "rmse" + d + "mae" + d + "mis" + d + "n" + d + "alpha";
}

std::string ScoreReport::to_record(char delimiter) const {
  std::string d(1, delimiter);
  return shortest(rmse) + d + shortest(mae) + d + shortest(mis) + d + std::to_string(n) + d + shortest(alpha);
}

std::string ScoreReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << "RMSE  " << rmse << "\n"
      << "MAE   " << mae << "\n"
      << "MIS   " << mis << "  (alpha " << alpha << ")\n"
      << "n     " << n << "\n";
  return out.str();
}

}  // namespace bayesnf
