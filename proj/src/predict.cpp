#include "bayesnf/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("quantile level must lie in (0, 1), got " + std::to_string(alpha));
}

void check_mixture(const PredictiveMixture& mix) {
  if (mix.size() == 0 || mix.params.size() != mix.f.size()) throw StateError("predictive mixture is empty");
}

double poisson_quantile(const PredictiveMixture& mix, double alpha) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double q = component_quantile(mix.params[i], mix.f[i], alpha);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  // cdf(hi) >= alpha; find the smallest such integer in [lo, hi].
  while (lo < hi) {
    const double mid = std::floor(0.5 * (lo + hi));
    if (mixture_cdf(mix, mid) >= alpha) {
      hi = mid;
    } else {
      lo = mid + 1.0;
    }
  }
  return hi;
}

}  // namespace

std::vector<ParamVector> predictive_draws(const PosteriorEnsemble& ensemble, std::size_t n_draws, std::uint64_t seed) {
  return sample_ensemble(ensemble, n_draws, seed);
}

PredictiveMixture predictive_at(const Network& network, std::span<const ParamVector> draws, const FeatureSpec& spec,
                                const SpaceTimeIndex& idx, std::span<const double> exogenous) {
  if (draws.empty()) throw StateError("predictive_at: no parameter draws");
  if (feature_count(spec) != network.config().input_dim) {
    throw StateError("predictive_at: feature spec yields " + std::to_string(feature_count(spec)) +
                     " covariates but the network expects " + std::to_string(network.config().input_dim));
  }
  const FeatureVector x = build_features(spec, idx, exogenous);
  PredictiveMixture mix;
  mix.kind = network.config().observation.kind;
  for (const auto& p : draws) {
    if (!(p.layout == network.layout())) throw StateError("predictive_at: parameter layout does not match network");
    mix.f.push_back(network.forward(p.values, x.values));
    mix.params.push_back(network.observation(p.values));
  }
  return mix;
}

double mixture_cdf(const PredictiveMixture& mix, double y) {
  check_mixture(mix);
  double total = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) total += component_cdf(mix.params[i], mix.f[i], y);
  return total / static_cast<double>(mix.size());
}

double mixture_pdf(const PredictiveMixture& mix, double y, bool* off_support) {
  check_mixture(mix);
  if (off_support) *off_support = false;
  if (mix.kind == ObservationKind::kPoisson && (!std::isfinite(y) || std::floor(y) != y)) {
    if (off_support) *off_support = true;
    return 0.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) total += component_pdf(mix.params[i], mix.f[i], y);
  return total / static_cast<double>(mix.size());
}

double mixture_mean(const PredictiveMixture& mix) {
  check_mixture(mix);
  double total = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) total += component_mean(mix.params[i], mix.f[i]);
  return total / static_cast<double>(mix.size());
}

RootResult chandrupatla(const std::function<double(double)>& fn, double a, double b, double xtol_rel, double ftol,
                        std::size_t max_iter) {
  double fa = fn(a), fb = fn(b);
  if (fa == 0.0) return {a, 0, true};
  if (fb == 0.0) return {b, 0, true};
  if ((fa > 0.0) == (fb > 0.0)) throw NumericalError("chandrupatla: root is not bracketed");

  constexpr double kEps = std::numeric_limits<double>::epsilon();
  double c = a, fc = fa;
  double t = 0.5;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const double xt = a + t * (b - a);
    const double ft = fn(xt);
    if ((ft > 0.0) == (fa > 0.0)) {
      c = a;
      fc = fa;
    } else {
      c = b;
      fc = fb;
      b = a;
      fb = fa;
    }
    a = xt;
    fa = ft;

    const bool a_better = std::abs(fa) < std::abs(fb);
    const double xm = a_better ? a : b;
    const double fm = a_better ? fa : fb;
    const double tol = 2.0 * kEps * std::abs(xm) + xtol_rel * std::max(std::abs(xm), 1e-300);
    const double tl = tol / std::abs(b - c);
    if (tl > 0.5 || std::abs(fm) <= ftol || fm == 0.0) return {xm, it, true};

    const double xi = (a - b) / (c - b);
    const double phi = (fa - fb) / (fc - fb);
    if (phi * phi < xi && (1.0 - phi) * (1.0 - phi) < 1.0 - xi) {
      t = fa / (fb - fa) * fc / (fb - fc) + (c - a) / (b - a) * fa / (fc - fa) * fb / (fc - fb);
    } else {
      t = 0.5;
    }
    t = std::clamp(t, tl, 1.0 - tl);
  }

  // Plain bisection on the remaining bracket.
  double lo = std::min(a, b), hi = std::max(a, b);
  double flo = fn(lo);
  for (std::size_t it = 0; it < 200 && hi - lo > xtol_rel * std::max(std::abs(lo), std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = fn(mid);
    if (fmid == 0.0) return {mid, max_iter + it, true};
    if ((fmid > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), max_iter, false};
}

double mixture_quantile(const PredictiveMixture& mix, double alpha) {
  check_mixture(mix);
  check_alpha(alpha);
  if (mix.kind == ObservationKind::kPoisson) return poisson_quantile(mix, alpha);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double q = component_quantile(mix.params[i], mix.f[i], alpha);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (lo == hi) return lo;
  auto g = [&](double y) { return mixture_cdf(mix, y) - alpha; };
  // Rounding in the component quantiles can leave the bracket a hair short.
  double width = hi - lo;
  for (int k = 0; g(lo) > 0.0 && k < 64; ++k, width *= 2.0) lo -= width;
  width = hi - lo;
  for (int k = 0; g(hi) < 0.0 && k < 64; ++k, width *= 2.0) hi += width;
  return chandrupatla(g, lo, hi).x;
}

PredictionBatch predict_batch(const Network& network, std::span<const ParamVector> draws, const FeatureSpec& spec,
                              std::span<const SpaceTimeIndex> indices, std::span<const std::vector<double>> exogenous,
                              std::span<const double> quantiles) {
  if (draws.empty()) throw StateError("predict_batch: no parameter draws");
  for (double a : quantiles) check_alpha(a);
  if (!exogenous.empty() && exogenous.size() != indices.size()) {
    throw InputError("predict_batch: exogenous rows do not match index count");
  }
  const std::size_t m = feature_count(spec);
  if (m != network.config().input_dim) {
    throw StateError("predict_batch: feature spec yields " + std::to_string(m) + " covariates but the network expects " +
                     std::to_string(network.config().input_dim));
  }
  const std::size_t n = indices.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    auto col = x.col(static_cast<Eigen::Index>(i));
    build_features_into(spec, indices[i], exogenous.empty() ? std::span<const double>{} : exogenous[i],
                        std::span<double>(col.data(), m));
  }

  std::vector<Eigen::VectorXd> f;
  std::vector<ObservationParams> obs;
  for (const auto& p : draws) {
    if (!(p.layout == network.layout())) throw StateError("predict_batch: parameter layout does not match network");
    f.push_back(network.forward_batch(p.values, x));
    obs.push_back(network.observation(p.values));
  }

  PredictionBatch out;
  out.mean.resize(n);
  out.quantiles.assign(n, std::vector<double>(quantiles.size()));
  PredictiveMixture mix;
  mix.kind = network.config().observation.kind;
  mix.params = obs;
  mix.f.resize(draws.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < draws.size(); ++d) mix.f[d] = f[d][static_cast<Eigen::Index>(i)];
    out.mean[i] = mixture_mean(mix);
    for (std::size_t q = 0; q < quantiles.size(); ++q) out.quantiles[i][q] = mixture_quantile(mix, quantiles[q]);
  }
  return out;
}

}  // namespace bayesnf
