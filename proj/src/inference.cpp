#include "bayesnf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "bayesnf/error.hpp"
#include "bayesnf/log.hpp"

namespace bayesnf {

namespace {

constexpr double kHalfLogTwoPi = 0.91893853320467274178032973640562;
constexpr double kInitialStddev = 0.01;
constexpr double kCollapseStddev = 1e-7;

bool is_frozen(const std::vector<char>& frozen, std::size_t i) { return !frozen.empty() && frozen[i] != 0; }

bool has_fixed_prior(BlockKind kind) { return kind != BlockKind::kWeights && kind != BlockKind::kBias; }

// Epoch-wise shuffling: every record is visited once per epoch, in
// near-equal batches.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t steps_per_epoch, std::uint64_t seed)
      : order_(n), steps_per_epoch_(steps_per_epoch), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
  }

  std::span<const std::size_t> next() {
    if (cursor_ == 0) std::shuffle(order_.begin(), order_.end(), rng_);
    const std::size_t n = order_.size();
    const std::size_t begin = cursor_ * n / steps_per_epoch_;
    const std::size_t end = (cursor_ + 1) * n / steps_per_epoch_;
    cursor_ = (cursor_ + 1) % steps_per_epoch_;
    return std::span<const std::size_t>(order_).subspan(begin, end - begin);
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t steps_per_epoch_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

// Log density of the weight and bias blocks under Normal(0, softplus(xi_l)),
// with gradient (into the weights and into xi_l) added to `grad`.
double weight_prior(const ParamLayout& layout, std::span<const double> theta, std::span<double> grad,
                    const std::vector<char>& frozen) {
  double total = 0.0;
  for (const auto& b : layout.blocks) {
    if (has_fixed_prior(b.kind)) continue;
    const std::size_t xi_index = layout.block("xi" + std::to_string(b.layer)).offset;
    const double xi = theta[xi_index];
    const double sigma = softplus(xi);
    const double log_sigma = std::log(sigma);
    double d_sigma = 0.0;
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (is_frozen(frozen, i)) continue;
      const double w = theta[i];
      total += -0.5 * w * w / (sigma * sigma) - log_sigma - kHalfLogTwoPi;
      if (!grad.empty()) grad[i] -= w / (sigma * sigma);
      d_sigma += w * w / (sigma * sigma * sigma) - 1.0 / sigma;
    }
    if (!grad.empty()) grad[xi_index] += d_sigma * sigmoid(xi);
  }
  return total;
}

// Entropy of the weight/bias factors minus the closed-form KL of the
// fixed-prior factors, over non-frozen entries.
double variational_terms(const ParamLayout& layout, const std::vector<double>& mean, const std::vector<double>& sd,
                         const std::vector<char>& frozen) {
  double total = 0.0;
  for (const auto& b : layout.blocks) {
    for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
      if (is_frozen(frozen, i)) continue;
      if (has_fixed_prior(b.kind)) {
        total -= kl_to_standard_normal(mean[i], sd[i]);
      } else {
        total += std::log(sd[i]) + kHalfLogTwoPi + 0.5;
      }
    }
  }
  return total;
}

template <class Fn>
void run_members(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  std::vector<std::exception_ptr> errors(count);
  auto work = [&](std::size_t worker) {
    for (std::size_t k = worker; k < count; k += threads) {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Schedule {
  std::size_t n_records = 0;
  std::size_t steps_per_epoch = 1;
  std::size_t epochs = 0;
  std::size_t trace_every = 1;

  std::size_t total_steps() const { return steps_per_epoch * epochs; }
};

Schedule make_schedule(const Design& design, const TrainConfig& train, const FitOptions& options) {
  Schedule s;
  s.n_records = static_cast<std::size_t>(design.x.cols());
  if (s.n_records == 0) throw InputError("fit: dataset is empty");
  if (train.batch_size > s.n_records) {
    warn("batch size " + std::to_string(train.batch_size) + " exceeds dataset size " + std::to_string(s.n_records) +
         "; clamped");
  }
  s.steps_per_epoch = train.steps_per_epoch(s.n_records);
  s.epochs = train.resolved_epochs(s.n_records);
  s.trace_every = options.trace_every > 0 ? options.trace_every : std::max<std::size_t>(1, (s.epochs + 99) / 100);
  return s;
}

void check_frozen(const FitOptions& options, std::size_t n_params) {
  if (!options.frozen.empty() && options.frozen.size() != n_params) {
    throw InputError("fit: frozen mask has " + std::to_string(options.frozen.size()) + " entries, expected " +
                     std::to_string(n_params));
  }
}

void check_method(const TrainConfig& train, Method expected) {
  train.validate();
  if (train.method != expected) {
    throw InputError("fit: train config requests method '" + std::string(to_string(train.method)) +
                     "' but fit_" + std::string(to_string(expected)) + " was called");
  }
}

// Maps working coordinates to the centered parameterization and pulls
// gradients back. Identity when centered.
class CoordinateMap {
 public:
  CoordinateMap(const ParamLayout& layout, Coordinates coords) : coords_(coords) {
    if (coords_ == Coordinates::kCentered) return;
    for (const auto& b : layout.blocks) {
      if (has_fixed_prior(b.kind)) continue;
      groups_.push_back({layout.block("xi" + std::to_string(b.layer)).offset, b.offset, b.size});
    }
  }

  void to_centered(std::span<const double> w, std::span<double> theta) const {
    std::copy(w.begin(), w.end(), theta.begin());
    for (const auto& g : groups_) {
      const double sigma = softplus(w[g.xi]);
      for (std::size_t i = g.offset; i < g.offset + g.size; ++i) theta[i] = sigma * w[i];
    }
  }

  void from_centered(std::span<const double> theta, std::span<double> w) const {
    std::copy(theta.begin(), theta.end(), w.begin());
    for (const auto& g : groups_) {
      const double sigma = softplus(theta[g.xi]);
      for (std::size_t i = g.offset; i < g.offset + g.size; ++i) w[i] = theta[i] / sigma;
    }
  }

  // Turns the centered gradient `grad` into the working-coordinate gradient
  // in place. With the prior included, adds the log-Jacobian sum(ln sigma)
  // and returns its value.
  double pull_back(std::span<const double> w, std::span<double> grad, bool with_prior) const {
    double jacobian = 0.0;
    for (const auto& g : groups_) {
      const double xi = w[g.xi];
      const double sigma = softplus(xi);
      const double d_sigma = sigmoid(xi);
      double d_xi = 0.0;
      for (std::size_t i = g.offset; i < g.offset + g.size; ++i) {
        d_xi += grad[i] * w[i];
        grad[i] *= sigma;
      }
      grad[g.xi] += d_sigma * d_xi;
      if (with_prior) {
        jacobian += static_cast<double>(g.size) * std::log(sigma);
        grad[g.xi] += static_cast<double>(g.size) * d_sigma / sigma;
      }
    }
    return jacobian;
  }

  double jacobian(std::span<const double> w) const {
    double total = 0.0;
    for (const auto& g : groups_) total += static_cast<double>(g.size) * std::log(softplus(w[g.xi]));
    return total;
  }

 private:
  struct Group {
    std::size_t xi;
    std::size_t offset;
    std::size_t size;
  };
  Coordinates coords_;
  std::vector<Group> groups_;
};

PosteriorEnsemble fit_point_estimates(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                                      const TrainConfig& train, const FitOptions& options, Method method,
                                      PriorMode prior) {
  const Network net(config);
  const Design design = make_design(dataset, spec);
  const Schedule sched = make_schedule(design, train, options);
  check_frozen(options, net.num_params());
  const CoordinateMap coords(net.layout(), train.coordinates);
  const bool with_prior = prior == PriorMode::kInclude;

  PosteriorEnsemble ens;
  ens.method = method;
  ens.config = config;
  ens.members.resize(train.ensemble_size);
  ens.traces.resize(train.ensemble_size);
  ens.member_seeds.resize(train.ensemble_size);
  for (std::size_t k = 0; k < train.ensemble_size; ++k) ens.member_seeds[k] = mix_seed(train.seed, 1000 + k);

  // Objective in working coordinates.
  auto objective = [&](const std::vector<double>& w, std::vector<double>& theta) {
    coords.to_centered(w, theta);
    double value = net.log_likelihood(theta, design, {}, 1.0);
    if (with_prior) value += net.log_prior(theta) + coords.jacobian(w);
    return value;
  };

  run_members(train.ensemble_size, options.threads, [&](std::size_t k) {
    ParamVector params = init_params(config, ens.member_seeds[k]);
    if (options.customize_init) options.customize_init(params);
    const std::size_t n = net.num_params();
    std::vector<double> w(n), theta(n);
    coords.from_centered(params.values, w);
    auto& trace = ens.traces[k];
    try {
      trace.push_back(TracePoint{0, 0, objective(w, theta)});
    } catch (const NumericalError& e) {
      throw NumericalError("member " + std::to_string(k) + ", initial point: " + e.what());
    }

    BatchSampler sampler(sched.n_records, sched.steps_per_epoch, mix_seed(ens.member_seeds[k], 2));
    Adam adam(n);
    const std::size_t total = sched.total_steps();
    for (std::size_t step = 0; step < total; ++step) {
      const auto batch = sampler.next();
      const double scale = static_cast<double>(sched.n_records) / static_cast<double>(batch.size());
      coords.to_centered(w, theta);
      JointGradient jg;
      try {
        jg = net.joint_gradient(theta, design, batch, scale, prior);
        jg.value += coords.pull_back(w, jg.grad, with_prior);
      } catch (const NumericalError& e) {
        throw NumericalError("member " + std::to_string(k) + ", step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(jg.value)) {
        throw NumericalError("member " + std::to_string(k) + ", step " + std::to_string(step) +
                             ": non-finite objective");
      }
      for (std::size_t i = 0; i < n; ++i)
        if (is_frozen(options.frozen, i)) jg.grad[i] = 0.0;
      adam.ascend(w, jg.grad, train.schedule.rate(step, total));

      if ((step + 1) % sched.steps_per_epoch == 0) {
        const std::size_t epoch = (step + 1) / sched.steps_per_epoch;
        if (epoch % sched.trace_every == 0 || epoch == sched.epochs) {
          trace.push_back(TracePoint{step + 1, epoch, objective(w, theta)});
        }
      }
    }
    coords.to_centered(w, params.values);
    check_finite(params.layout, params.values, "fit member " + std::to_string(k));
    ens.members[k] = std::move(params);
  });
  return ens;
}

}  // namespace

Method parse_method(std::string_view name) {
  if (name == "map" || name == "MAP") return Method::kMap;
  if (name == "vi" || name == "VI") return Method::kVi;
  if (name == "mle" || name == "MLE") return Method::kMle;
  throw InputError("unknown inference method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kMap: return "map";
    case Method::kVi: return "vi";
    case Method::kMle: return "mle";
  }
  return "?";
}

KlScaleMode parse_kl_scale_mode(std::string_view name) {
  if (name == "uniform") return KlScaleMode::kUniform;
  if (name == "blundell") return KlScaleMode::kBlundell;
  throw InputError("unknown KL scale mode '" + std::string(name) + "'");
}

Coordinates parse_coordinates(std::string_view name) {
  if (name == "noncentered") return Coordinates::kNonCentered;
  if (name == "centered") return Coordinates::kCentered;
  throw InputError("unknown coordinates '" + std::string(name) + "'");
}

std::string_view to_string(Coordinates coords) {
  return coords == Coordinates::kCentered ? "centered" : "noncentered";
}

std::string_view to_string(KlScaleMode mode) { return mode == KlScaleMode::kUniform ? "uniform" : "blundell"; }

void TrainConfig::validate() const {
  if (ensemble_size < 1) throw InputError("train: ensemble size must be at least 1");
  if (batch_size < 1) throw InputError("train: batch size must be at least 1");
  if (!epochs && target_steps < 1) throw InputError("train: target steps must be at least 1");
  if (vi_samples_per_step < 1) throw InputError("train: vi_samples_per_step must be at least 1");
  if (!(schedule.peak > 0.0) || !std::isfinite(schedule.peak)) throw InputError("train: learning rate must be positive");
  if (!(schedule.warmup_fraction >= 0.0 && schedule.warmup_fraction < 1.0)) {
    throw InputError("train: warmup fraction must lie in [0, 1)");
  }
  if (kl_scale_mode != KlScaleMode::kUniform) throw InputError("train: only uniform KL scaling is implemented");
}

std::size_t TrainConfig::effective_batch_size(std::size_t n_records) const {
  return std::max<std::size_t>(1, std::min(batch_size, n_records));
}

std::size_t TrainConfig::steps_per_epoch(std::size_t n_records) const {
  const std::size_t b = effective_batch_size(n_records);
  return std::max<std::size_t>(1, (n_records + b - 1) / b);
}

std::size_t TrainConfig::resolved_epochs(std::size_t n_records) const {
  if (epochs) return *epochs;
  const std::size_t spe = steps_per_epoch(n_records);
  return std::max<std::size_t>(1, (target_steps + spe - 1) / spe);
}

std::vector<double> VariationalParams::stddev() const {
  std::vector<double> sd(raw_scale.size());
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = softplus(raw_scale[i]);
  return sd;
}

Design make_design(const Dataset& dataset, const FeatureSpec& spec) {
  spec.validate();
  const std::size_t m = feature_count(spec);
  Design d;
  d.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dataset.records.size()));
  d.y.resize(static_cast<Eigen::Index>(dataset.records.size()));
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    auto col = d.x.col(static_cast<Eigen::Index>(i));
    build_features_into(spec, r.index, r.covariates, std::span<double>(col.data(), m));
    d.y[static_cast<Eigen::Index>(i)] = r.value;
  }
  return d;
}

double kl_to_standard_normal(double mean, double stddev) {
  return 0.5 * (stddev * stddev + mean * mean - 1.0) - std::log(stddev);
}

PosteriorEnsemble fit_map(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                          const TrainConfig& train, const FitOptions& options) {
  check_method(train, Method::kMap);
  return fit_point_estimates(config, dataset, spec, train, options, Method::kMap, options.prior);
}

PosteriorEnsemble fit_mle(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                          const TrainConfig& train, const FitOptions& options) {
  check_method(train, Method::kMle);
  return fit_point_estimates(config, dataset, spec, train, options, Method::kMle, PriorMode::kExclude);
}

ElboEstimate estimate_elbo(const Network& network, const VariationalParams& vp, const Design& data,
                           std::size_t n_samples, std::uint64_t seed, const std::vector<char>& frozen) {
  if (n_samples < 1) throw InputError("estimate_elbo: need at least one sample");
  const std::size_t n = vp.mean.size();
  const auto sd = vp.stddev();
  const double fixed = variational_terms(vp.layout, vp.mean, sd, frozen);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> theta(n);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = normal(rng);
      theta[i] = is_frozen(frozen, i) ? vp.mean[i] : vp.mean[i] + sd[i] * eps;
    }
    const double v = network.log_likelihood(theta, data, {}, 1.0) + weight_prior(vp.layout, theta, {}, frozen) + fixed;
    sum += v;
    sum_sq += v * v;
  }
  const double ns = static_cast<double>(n_samples);
  const double mean = sum / ns;
  const double var = n_samples > 1 ? std::max(0.0, (sum_sq - ns * mean * mean) / (ns - 1.0)) : 0.0;
  return ElboEstimate{mean, std::sqrt(var / ns)};
}

PosteriorEnsemble fit_vi(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                         const TrainConfig& train, const FitOptions& options) {
  check_method(train, Method::kVi);
  const Network net(config);
  const Design design = make_design(dataset, spec);
  const Schedule sched = make_schedule(design, train, options);
  const std::size_t n_params = net.num_params();
  check_frozen(options, n_params);
  const auto& layout = net.layout();

  PosteriorEnsemble ens;
  ens.method = Method::kVi;
  ens.config = config;
  ens.variational.resize(train.ensemble_size);
  ens.traces.resize(train.ensemble_size);
  ens.member_seeds.resize(train.ensemble_size);
  for (std::size_t k = 0; k < train.ensemble_size; ++k) ens.member_seeds[k] = mix_seed(train.seed, 1000 + k);

  run_members(train.ensemble_size, options.threads, [&](std::size_t k) {
    ParamVector init = init_params(config, ens.member_seeds[k]);
    if (options.customize_init) options.customize_init(init);
    VariationalParams vp;
    vp.layout = layout;
    vp.mean = init.values;
    vp.raw_scale.assign(n_params, inverse_softplus(kInitialStddev));

    const std::uint64_t trace_seed = mix_seed(ens.member_seeds[k], 4);
    auto& trace = ens.traces[k];
    trace.push_back(TracePoint{0, 0, estimate_elbo(net, vp, design, 4, trace_seed, options.frozen).value});

    // phi = [mean; raw_scale]
    std::vector<double> phi(2 * n_params);
    std::copy(vp.mean.begin(), vp.mean.end(), phi.begin());
    std::copy(vp.raw_scale.begin(), vp.raw_scale.end(), phi.begin() + static_cast<std::ptrdiff_t>(n_params));
    std::vector<double> grad(2 * n_params), g(n_params), eps(n_params), theta(n_params), sd(n_params);
    Adam adam(2 * n_params);
    BatchSampler sampler(sched.n_records, sched.steps_per_epoch, mix_seed(ens.member_seeds[k], 2));
    std::mt19937_64 rng(mix_seed(ens.member_seeds[k], 3));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double inv_samples = 1.0 / static_cast<double>(train.vi_samples_per_step);
    const std::size_t total = sched.total_steps();

    for (std::size_t step = 0; step < total; ++step) {
      const auto batch = sampler.next();
      const double scale = static_cast<double>(sched.n_records) / static_cast<double>(batch.size());
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < n_params; ++i) sd[i] = softplus(phi[n_params + i]);
      double value = 0.0;
      for (std::size_t s = 0; s < train.vi_samples_per_step; ++s) {
        for (std::size_t i = 0; i < n_params; ++i) {
          eps[i] = is_frozen(options.frozen, i) ? 0.0 : normal(rng);
          theta[i] = phi[i] + sd[i] * eps[i];
        }
        std::fill(g.begin(), g.end(), 0.0);
        try {
          value += net.log_likelihood(theta, design, batch, scale, g);
        } catch (const NumericalError& e) {
          throw NumericalError("member " + std::to_string(k) + ", step " + std::to_string(step) + ": " + e.what());
        }
        value += weight_prior(layout, theta, g, options.frozen);
        for (std::size_t i = 0; i < n_params; ++i) {
          grad[i] += inv_samples * g[i];
          grad[n_params + i] += inv_samples * g[i] * eps[i] * sigmoid(phi[n_params + i]);
        }
      }
      value = inv_samples * value + variational_terms(layout, phi, sd, options.frozen);
      if (!std::isfinite(value)) {
        throw NumericalError("member " + std::to_string(k) + ", step " + std::to_string(step) + ": non-finite ELBO");
      }
      for (const auto& b : layout.blocks) {
        const bool fixed_prior = has_fixed_prior(b.kind);
        for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
          if (is_frozen(options.frozen, i)) {
            grad[i] = grad[n_params + i] = 0.0;
            continue;
          }
          const double ds = sigmoid(phi[n_params + i]);
          if (fixed_prior) {
            grad[i] -= phi[i];
            grad[n_params + i] -= (sd[i] - 1.0 / sd[i]) * ds;
          } else {
            grad[n_params + i] += ds / sd[i];
          }
        }
      }
      for (double v : grad)
        if (!std::isfinite(v)) {
          throw NumericalError("member " + std::to_string(k) + ", step " + std::to_string(step) +
                               ": non-finite ELBO gradient");
        }
      adam.ascend(phi, grad, train.schedule.rate(step, total));

      if ((step + 1) % sched.steps_per_epoch == 0) {
        const std::size_t epoch = (step + 1) / sched.steps_per_epoch;
        if (epoch % sched.trace_every == 0 || epoch == sched.epochs) {
          std::copy(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(n_params), vp.mean.begin());
          std::copy(phi.begin() + static_cast<std::ptrdiff_t>(n_params), phi.end(), vp.raw_scale.begin());
          trace.push_back(TracePoint{step + 1, epoch, estimate_elbo(net, vp, design, 4, trace_seed, options.frozen).value});
        }
      }
    }
    std::copy(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(n_params), vp.mean.begin());
    std::copy(phi.begin() + static_cast<std::ptrdiff_t>(n_params), phi.end(), vp.raw_scale.begin());
    for (std::size_t i = 0; i < n_params; ++i) {
      if (!is_frozen(options.frozen, i) && softplus(vp.raw_scale[i]) < kCollapseStddev) {
        warn("member " + std::to_string(k) + ": variational stddev collapsed in block '" + layout.block_of(i).name + "'");
        break;
      }
    }
    ens.variational[k] = std::move(vp);
  });
  return ens;
}

PosteriorEnsemble fit(const NetworkConfig& config, const Dataset& dataset, const FeatureSpec& spec,
                      const TrainConfig& train, const FitOptions& options) {
  switch (train.method) {
    case Method::kMap: return fit_map(config, dataset, spec, train, options);
    case Method::kMle: return fit_mle(config, dataset, spec, train, options);
    case Method::kVi: return fit_vi(config, dataset, spec, train, options);
  }
  throw InputError("fit: unknown method");
}

std::vector<ParamVector> sample_ensemble(const PosteriorEnsemble& ensemble, std::size_t n_draws, std::uint64_t seed) {
  if (ensemble.size() == 0) throw StateError("sample_ensemble: empty ensemble");
  if (ensemble.method != Method::kVi) return ensemble.members;
  if (n_draws < 1) throw InputError("sample_ensemble: n_draws must be at least 1");
  std::mt19937_64 rng(mix_seed(seed, 5));
  std::uniform_int_distribution<std::size_t> pick(0, ensemble.variational.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ParamVector> draws;
  draws.reserve(n_draws);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto& vp = ensemble.variational[pick(rng)];
    ParamVector p;
    p.layout = vp.layout;
    p.values.resize(vp.mean.size());
    for (std::size_t i = 0; i < vp.mean.size(); ++i) p.values[i] = vp.mean[i] + softplus(vp.raw_scale[i]) * normal(rng);
    draws.push_back(std::move(p));
  }
  return draws;
}

}  // namespace bayesnf
