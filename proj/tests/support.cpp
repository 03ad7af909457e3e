#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bayesnf/observation.hpp"

namespace testing_support {

Dataset grid_benchmark(std::uint64_t seed, double noise_sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sd);
  RawTable table;
  table.schema.coordinate_columns = {"s1", "s2"};
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double s1 = i / 4.0, s2 = j / 4.0;
      for (int t = 0; t < 120; ++t) {
        RawRow row;
        row.location_id = "g" + std::to_string(i) + std::to_string(j);
        row.coords = {s1, s2};
        row.timestamp = CivilTime{2000 + t / 12, 1 + t % 12, 1};
        row.value = std::sin(2.0 * std::numbers::pi * t / 12.0) + s1 + 0.5 * s1 * s2 + noise(rng);
        table.rows.push_back(std::move(row));
      }
    }
  }
  return encode(table, Frequency::kMonthly);
}

FeatureSpec benchmark_features(const Dataset& train) {
  FeatureSpec spec;
  spec.dim = 2;
  spec.use_linear = true;
  spec.use_time_space_interactions = true;
  spec.use_space_space_interactions = true;
  spec.seasonal = {{12.0, {1, 2}}};
  spec.spatial_bounds = {{0.0, 1.0}, {0.0, 1.0}};
  const auto idx = train.indices();
  fit_polynomial_scaling(spec, idx);
  return spec;
}

TrainTestSplit benchmark_split(const Dataset& ds) {
  // One split holding out every location: the latest 10% of 120 steps.
  return make_splits(ds, 1, 0.1, 0).front();
}

NetworkConfig random_config(std::mt19937_64& rng, std::size_t input_dim, ObservationKind kind) {
  static const Activation kAll[] = {Activation::kTanh, Activation::kRelu, Activation::kElu};
  NetworkConfig c;
  c.input_dim = input_dim;
  c.observation.kind = kind;
  const std::size_t n_layers = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerConfig layer;
    layer.width = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t n_act = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    std::vector<Activation> pool(std::begin(kAll), std::end(kAll));
    std::shuffle(pool.begin(), pool.end(), rng);
    layer.activations.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_act));
    c.layers.push_back(layer);
  }
  return c;
}

Design random_design(std::mt19937_64& rng, std::size_t m, std::size_t n, ObservationKind kind) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::poisson_distribution<int> counts(2.0);
  Design d;
  d.x.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  d.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) d.x(i, j) = z(rng);
    d.y[j] = kind == ObservationKind::kPoisson ? counts(rng) : z(rng);
  }
  return d;
}

std::vector<double> fd_gradient(const Network& net, std::span<const double> theta, const Design& d, double scale,
                                double step) {
  std::vector<double> p(theta.begin(), theta.end()), g(p.size());
  auto f = [&] { return net.log_prior(p) + net.log_likelihood(p, d, {}, scale); };
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = f();
    p[i] = orig - step;
    const double down = f();
    p[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

ConjugateInstance conjugate_instance(std::size_t n, double mean, std::uint64_t seed) {
  ConjugateInstance c;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(mean, 1.0);
  c.data.schema.coordinate_columns = {"s1"};
  c.data.schema.covariate_columns = {"one"};
  c.data.frequency = Frequency::kDaily;
  c.data.locations = {Location{"a", {0.0}}};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    r.index = SpaceTimeIndex{{0.0}, static_cast<double>(i)};
    r.value = noise(rng);
    r.covariates = {1.0};
    sum += r.value;
    c.data.records.push_back(std::move(r));
  }
  c.sample_mean = sum / static_cast<double>(n);
  // Prior beta ~ N(0, 1), likelihood N(beta, 1): precision n + 1.
  c.posterior_mean = sum / (static_cast<double>(n) + 1.0);
  c.posterior_sd = 1.0 / std::sqrt(static_cast<double>(n) + 1.0);

  c.spec.dim = 1;
  c.spec.use_linear = false;
  c.spec.exogenous = {"one"};
  c.config.input_dim = 1;
  c.config.observation.kind = ObservationKind::kNormal;

  const ParamLayout layout = ParamLayout::for_config(c.config);
  c.frozen.assign(layout.size, 1);
  const auto& beta = layout.block("beta1");
  c.frozen[beta.offset] = 0;
  c.init = [](ParamVector& p) {
    p.block("xi0")[0] = 0.0;
    p.block("xi1")[0] = inverse_softplus(1.0);
    p.block("omega1")[0] = 0.0;
    p.block("obs")[0] = inverse_softplus(1.0);
  };
  return c;
}

double coverage(std::span<const double> y, std::span<const double> lower, std::span<const double> upper) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += (lower[i] <= y[i] && y[i] <= upper[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

}  // namespace testing_support
