#include "bayesnf/observation.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <string>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

void check_count(double y) {
  if (!(y >= 0.0) || std::floor(y) != y || !std::isfinite(y)) {
    throw InputError("Poisson observation must be a nonnegative integer, got " + std::to_string(y));
  }
}

}  // namespace

std::size_t ObservationModel::n_params() const {
  switch (kind) {
    case ObservationKind::kNormal: return 1;
    case ObservationKind::kStudentT: return 2;
    case ObservationKind::kPoisson: return 0;
  }
  return 0;
}

ObservationKind parse_observation_kind(std::string_view name) {
  if (name == "normal" || name == "Normal") return ObservationKind::kNormal;
  if (name == "studentt" || name == "student_t" || name == "StudentT") return ObservationKind::kStudentT;
  if (name == "poisson" || name == "Poisson") return ObservationKind::kPoisson;
  throw InputError("unknown observation model '" + std::string(name) + "'");
}

std::string_view to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::kNormal: return "normal";
    case ObservationKind::kStudentT: return "studentt";
    case ObservationKind::kPoisson: return "poisson";
  }
  return "?";
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ObservationParams observation_params(ObservationKind kind, std::span<const double> raw) {
  ObservationParams p;
  p.kind = kind;
  switch (kind) {
    case ObservationKind::kNormal:
      p.variance = softplus(raw[0]);
      p.scale = std::sqrt(p.variance);
      break;
    case ObservationKind::kStudentT:
      p.scale = softplus(raw[0]);
      p.df = 2.0 + softplus(raw[1]);
      p.variance = p.scale * p.scale * p.df / (p.df - 2.0);
      break;
    case ObservationKind::kPoisson:
      break;
  }
  return p;
}

double log_likelihood(const ObservationModel& model, const ObservationParams& params, double f, double y) {
  switch (model.kind) {
    case ObservationKind::kNormal: {
      const double r = y - f;
      return -0.5 * (kLogTwoPi + std::log(params.variance)) - 0.5 * r * r / params.variance;
    }
    case ObservationKind::kStudentT: {
      const double nu = params.df;
      const double z = (y - f) / params.scale;
      return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
             std::log(params.scale) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
    }
    case ObservationKind::kPoisson:
      check_count(y);
      return y * f - std::exp(f) - std::lgamma(y + 1.0);
  }
  return 0.0;
}

LikelihoodTerm log_likelihood_grad(ObservationKind kind, std::span<const double> raw, double f, double y) {
  LikelihoodTerm out;
  switch (kind) {
    case ObservationKind::kNormal: {
      const double v = softplus(raw[0]);
      const double r = y - f;
      out.value = -0.5 * (kLogTwoPi + std::log(v)) - 0.5 * r * r / v;
      out.d_f = r / v;
      const double d_v = -0.5 / v + 0.5 * r * r / (v * v);
      out.d_raw[0] = d_v * sigmoid(raw[0]);
      break;
    }
    case ObservationKind::kStudentT: {
      const double s = softplus(raw[0]);
      const double nu = 2.0 + softplus(raw[1]);
      const double r = y - f;
      const double z = r / s;
      const double z2 = z * z;
      out.value = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
                  std::log(s) - 0.5 * (nu + 1.0) * std::log1p(z2 / nu);
      out.d_f = (nu + 1.0) * z / (s * (nu + z2));
      const double d_s = -1.0 / s + (nu + 1.0) * z2 / (s * (nu + z2));
      const double d_nu = 0.5 * boost::math::digamma(0.5 * (nu + 1.0)) - 0.5 * boost::math::digamma(0.5 * nu) -
                          0.5 / nu - 0.5 * std::log1p(z2 / nu) + 0.5 * (nu + 1.0) * z2 / (nu * (nu + z2));
      out.d_raw[0] = d_s * sigmoid(raw[0]);
      out.d_raw[1] = d_nu * sigmoid(raw[1]);
      break;
    }
    case ObservationKind::kPoisson: {
      check_count(y);
      const double rate = std::exp(f);
      out.value = y * f - rate - std::lgamma(y + 1.0);
      out.d_f = y - rate;
      break;
    }
  }
  return out;
}

double component_cdf(const ObservationParams& params, double f, double y) {
  switch (params.kind) {
    case ObservationKind::kNormal:
      return 0.5 * std::erfc(-(y - f) / (params.scale * std::numbers::sqrt2));
    case ObservationKind::kStudentT: {
      const double z = (y - f) / params.scale;
      if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
      return boost::math::cdf(boost::math::students_t(params.df), z);
    }
    case ObservationKind::kPoisson: {
      if (y < 0.0) return 0.0;
      if (std::isinf(y)) return 1.0;
      const double k = std::floor(y);
      return boost::math::gamma_q(k + 1.0, std::exp(f));
    }
  }
  return 0.0;
}

double component_pdf(const ObservationParams& params, double f, double y) {
  switch (params.kind) {
    case ObservationKind::kNormal: {
      const double z = (y - f) / params.scale;
      return std::exp(-0.5 * z * z) / (params.scale * std::sqrt(2.0 * std::numbers::pi));
    }
    case ObservationKind::kStudentT:
      return boost::math::pdf(boost::math::students_t(params.df), (y - f) / params.scale) / params.scale;
    case ObservationKind::kPoisson:
      if (y < 0.0 || std::floor(y) != y || !std::isfinite(y)) return 0.0;
      return std::exp(y * f - std::exp(f) - std::lgamma(y + 1.0));
  }
  return 0.0;
}

double component_mean(const ObservationParams& params, double f) {
  return params.kind == ObservationKind::kPoisson ? std::exp(f) : f;
}

double component_quantile(const ObservationParams& params, double f, double alpha) {
  switch (params.kind) {
    case ObservationKind::kNormal:
      return f + params.scale * boost::math::quantile(boost::math::normal(0.0, 1.0), alpha);
    case ObservationKind::kStudentT:
      return f + params.scale * boost::math::quantile(boost::math::students_t(params.df), alpha);
    case ObservationKind::kPoisson: {
      double hi = 1.0;
      while (component_cdf(params, f, hi) < alpha) hi *= 2.0;
      double lo = -1.0;  // cdf(lo) < alpha always
      while (hi - lo > 1.0) {
        const double mid = std::floor(0.5 * (lo + hi));
        if (component_cdf(params, f, mid) >= alpha) hi = mid; else lo = mid;
      }
      return hi;
    }
  }
  return 0.0;
}

double sample_observation(const ObservationParams& params, double f, std::mt19937_64& rng) {
  switch (params.kind) {
    case ObservationKind::kNormal:
      return f + params.scale * std::normal_distribution<double>(0.0, 1.0)(rng);
    case ObservationKind::kStudentT:
      return f + params.scale * std::student_t_distribution<double>(params.df)(rng);
    case ObservationKind::kPoisson:
      return static_cast<double>(std::poisson_distribution<long long>(std::exp(f))(rng));
  }
  return 0.0;
}

}  // namespace bayesnf
