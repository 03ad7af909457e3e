#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "bayesnf/error.hpp"
#include "bayesnf/model.hpp"
#include "support.hpp"

using namespace bayesnf;
using namespace testing_support;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double normal_logpdf(double x, double sd) { return -0.5 * kLog2Pi - std::log(sd) - 0.5 * (x / sd) * (x / sd); }

// Log prior evaluated block by block from the layout, without the Network.
double prior_oracle(const ParamLayout& layout, const std::vector<double>& v) {
  double total = 0.0;
  for (const auto& b : layout.blocks) {
    if (b.kind == BlockKind::kWeights || b.kind == BlockKind::kBias) {
      const double sd = std::log1p(std::exp(v[layout.block("xi" + std::to_string(b.layer)).offset]));
      for (std::size_t i = 0; i < b.size; ++i) total += normal_logpdf(v[b.offset + i], sd);
    } else {
      for (std::size_t i = 0; i < b.size; ++i) total += normal_logpdf(v[b.offset + i], 1.0);
    }
  }
  return total;
}

NetworkConfig one_hidden(std::size_t m, std::size_t width, std::vector<Activation> acts,
                         ObservationKind kind = ObservationKind::kNormal) {
  NetworkConfig c;
  c.input_dim = m;
  c.layers = {{width, std::move(acts)}};
  c.observation.kind = kind;
  return c;
}

Design design_from(std::vector<std::vector<double>> xs, std::vector<double> ys) {
  Design d;
  d.x.resize(static_cast<Eigen::Index>(xs.empty() ? 1 : xs[0].size()), static_cast<Eigen::Index>(xs.size()));
  d.y.resize(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    for (std::size_t i = 0; i < xs[j].size(); ++i) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[j][i];
    d.y[static_cast<Eigen::Index>(j)] = ys[j];
  }
  return d;
}

}  // namespace

TEST(Layout, SizeFormula) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 30; ++k) {
    const auto c = random_config(rng, 1 + k % 5, static_cast<ObservationKind>(k % 3));
    std::size_t expect = c.input_dim + c.observation.n_params();
    std::size_t prev = c.input_dim;
    for (const auto& l : c.layers) {
      expect += 1 + l.activations.size() + l.width * prev + l.width;
      prev = l.width;
    }
    expect += 1 + prev + 1;
    const auto layout = ParamLayout::for_config(c);
    EXPECT_EQ(layout.size, expect);
    // Blocks tile [0, size) in order.
    std::size_t next = 0;
    for (const auto& b : layout.blocks) {
      EXPECT_EQ(b.offset, next);
      next += b.size;
    }
    EXPECT_EQ(next, layout.size);
    EXPECT_TRUE(layout == ParamLayout::for_config(c));
  }
}

TEST(Layout, MinimalArchitecture) {
  NetworkConfig c;
  c.input_dim = 3;
  const auto layout = ParamLayout::for_config(c);
  std::vector<std::string> names;
  for (const auto& b : layout.blocks) names.push_back(b.name);
  EXPECT_EQ(names, (std::vector<std::string>{"xi0", "xi1", "omega1", "beta1", "obs"}));
  EXPECT_EQ(layout.block("omega1").rows, 1u);
  EXPECT_EQ(layout.block("omega1").cols, 3u);
}

TEST(Config, Validation) {
  NetworkConfig c;
  c.input_dim = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = one_hidden(2, 3, {});
  EXPECT_THROW(c.validate(), InputError);
  c = one_hidden(2, 0, {Activation::kTanh});
  EXPECT_THROW(c.validate(), InputError);
  const auto d = NetworkConfig::make_default(4);
  ASSERT_EQ(d.layers.size(), 2u);
  EXPECT_EQ(d.layers[0].width, 64u);
  EXPECT_EQ(d.layers[1].activations, (std::vector<Activation>{Activation::kTanh, Activation::kElu}));
}

TEST(InitParams, Deterministic) {
  const auto c = NetworkConfig::make_default(5, ObservationKind::kStudentT);
  EXPECT_EQ(init_params(c, 42).values, init_params(c, 42).values);
  EXPECT_NE(init_params(c, 42).values, init_params(c, 43).values);
}

TEST(InitParams, InputScaleIsStandardNormal) {
  NetworkConfig c;
  c.input_dim = 1;
  const std::size_t off = ParamLayout::for_config(c).block("xi0").offset;
  const int n = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = init_params(c, static_cast<std::uint64_t>(i)).values[off];
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(InitParams, WeightsScaleWithLayerSigma) {
  // Given xi, omega entries are N(0, softplus(xi)): the standardized draws are N(0, 1).
  const auto c = one_hidden(3, 40, {Activation::kTanh});
  const auto layout = ParamLayout::for_config(c);
  double s2 = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = init_params(c, seed);
    const double sd = softplus(p.block("xi1")[0]);
    for (double w : p.block("omega1")) {
      s2 += (w / sd) * (w / sd);
      ++n;
    }
  }
  EXPECT_NEAR(s2 / static_cast<double>(n), 1.0, 4.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST(Forward, ZeroWeightsGiveZero) {
  const auto c = NetworkConfig::make_default(3);
  auto p = init_params(c, 1);
  for (const auto& b : p.layout.blocks) {
    if (b.kind == BlockKind::kWeights || b.kind == BlockKind::kBias) {
      std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 0.0);
    }
  }
  const Network net(c);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (int k = 0; k < 10; ++k) {
    const std::vector<double> x = {z(rng), z(rng), z(rng)};
    EXPECT_EQ(net.forward(p.values, x), 0.0);
  }
}

TEST(Forward, HandEvaluatedLinear) {
  NetworkConfig c;
  c.input_dim = 1;
  ParamVector p = init_params(c, 0);
  p.block("xi0")[0] = 0.0;
  p.block("omega1")[0] = 2.0;
  p.block("beta1")[0] = 1.0;
  EXPECT_DOUBLE_EQ(forward(c, p, FeatureVector{{3.0}, {"x"}}), 7.0);
}

TEST(Forward, HandEvaluatedHidden) {
  // m = 2, one hidden layer of width 2 mixing tanh and relu.
  const auto c = one_hidden(2, 2, {Activation::kTanh, Activation::kRelu});
  ParamVector p = init_params(c, 0);
  p.block("xi0")[0] = 0.0;
  p.block("xi0")[1] = std::log(2.0);
  const std::vector<double> w1 = {0.5, -1.0, 1.5, 0.25}, b1 = {0.1, -0.2}, g = {0.3, -0.4};
  std::copy(w1.begin(), w1.end(), p.block("omega1").begin());
  std::copy(b1.begin(), b1.end(), p.block("beta1").begin());
  std::copy(g.begin(), g.end(), p.block("gamma1").begin());
  p.block("omega2")[0] = 0.7;
  p.block("omega2")[1] = -1.1;
  p.block("beta2")[0] = 0.05;
  const std::vector<double> x = {1.2, -0.4};
  const double h0[2] = {1.2, -0.8};
  const double e0 = std::exp(0.3), e1 = std::exp(-0.4), p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
  double h1[2];
  for (int i = 0; i < 2; ++i) {
    const double z = (w1[2 * i] * h0[0] + w1[2 * i + 1] * h0[1]) / std::sqrt(2.0) + b1[i];
    h1[i] = p0 * std::tanh(z) + p1 * std::max(z, 0.0);
  }
  const double f = (0.7 * h1[0] - 1.1 * h1[1]) / std::sqrt(2.0) + 0.05;
  EXPECT_NEAR(Network(c).forward(p.values, x), f, 1e-14);
}

TEST(Forward, EqualLogitsAverageActivations) {
  const auto c = one_hidden(1, 1, {Activation::kTanh, Activation::kElu});
  ParamVector p = init_params(c, 3);
  p.block("gamma1")[0] = p.block("gamma1")[1] = 1.7;
  const Network net(c);
  const std::vector<double> x = {0.8};
  const auto z = net.pre_activations(p.values, x);
  const double zz = z[0][0];
  const double h = 0.5 * (std::tanh(zz) + apply_activation(Activation::kElu, zz));
  const double expect = p.block("omega2")[0] * h + p.block("beta2")[0];
  EXPECT_NEAR(net.forward(p.values, x), expect, 1e-14);
}

TEST(Forward, ActivationPrimitives) {
  for (double z : {-3.0, -0.5, 0.0, 0.25, 4.0}) {
    EXPECT_NEAR(apply_activation(Activation::kTanh, z), std::tanh(z), 1e-15);
    EXPECT_EQ(apply_activation(Activation::kRelu, z), std::max(z, 0.0));
    EXPECT_NEAR(apply_activation(Activation::kElu, z), z > 0 ? z : std::expm1(z), 1e-15);
  }
  EXPECT_EQ(parse_activation("elu"), Activation::kElu);
  EXPECT_THROW(parse_activation("gelu"), InputError);
}

TEST(Forward, BatchMatchesSingle) {
  std::mt19937_64 rng(8);
  const auto c = NetworkConfig::make_default(4);
  const auto p = init_params(c, 5);
  const Network net(c);
  const Design d = random_design(rng, 4, 37, ObservationKind::kNormal);
  const Eigen::VectorXd f = net.forward_batch(p.values, d.x);
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    const Eigen::VectorXd col = d.x.col(j);
    EXPECT_NEAR(f[j], net.forward(p.values, std::span<const double>(col.data(), 4)), 1e-12);
  }
}

TEST(Forward, PermutingHiddenUnits) {
  const auto c = one_hidden(3, 5, {Activation::kTanh, Activation::kElu});
  const auto p = init_params(c, 12);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  ParamVector q = p;
  auto w1 = p.block("omega1"), b1 = p.block("beta1"), w2 = p.block("omega2");
  auto qw1 = q.block("omega1"), qb1 = q.block("beta1"), qw2 = q.block("omega2");
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) qw1[i * 3 + j] = w1[perm[i] * 3 + j];
    qb1[i] = b1[perm[i]];
    qw2[i] = w2[perm[i]];
  }
  const Network net(c);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> x = {z(rng), z(rng), z(rng)};
    // Identical terms, summed in another order.
    EXPECT_NEAR(net.forward(p.values, x), net.forward(q.values, x), 1e-14);
  }
}

TEST(Forward, SoftmaxWeightsSumToOne) {
  // With all activations equal to the same primitive the mixture is the primitive itself.
  const auto c = one_hidden(2, 3, {Activation::kRelu, Activation::kRelu, Activation::kRelu});
  const auto single = one_hidden(2, 3, {Activation::kRelu});
  const auto p = init_params(c, 4);
  ParamVector s = init_params(single, 4);
  for (const auto& b : s.layout.blocks) {
    if (b.name == "gamma1") continue;
    const auto src = p.block(b.name);
    std::copy(src.begin(), src.end(), s.block(b.name).begin());
  }
  const std::vector<double> x = {0.3, -1.4};
  EXPECT_NEAR(Network(c).forward(p.values, x), Network(single).forward(s.values, x), 1e-14);
}

TEST(Forward, WidthIndependentPreActivationVariance) {
  const std::vector<double> x = {0.7, -0.2};
  auto sample = [&](std::size_t width) {
    NetworkConfig c;
    c.input_dim = 2;
    c.layers = {{width, {Activation::kTanh}}, {width, {Activation::kTanh}}};
    const Network net(c);
    std::vector<double> z;
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
      const auto p = init_params(c, seed * 7919 + width);
      z.push_back(net.pre_activations(p.values, x)[1][0]);
    }
    return z;
  };
  auto moments = [](const std::vector<double>& z) {
    const double n = static_cast<double>(z.size());
    double m2 = 0, m4 = 0;
    for (double v : z) {
      m2 += v * v / n;
      m4 += v * v * v * v / n;
    }
    return std::pair{m2, std::sqrt((m4 - m2 * m2) / n)};
  };
  const auto [v4, se4] = moments(sample(4));
  const auto [v64, se64] = moments(sample(64));
  EXPECT_NEAR(v4, v64, 4.0 * std::hypot(se4, se64));
}

TEST(Forward, NonFiniteReported) {
  NetworkConfig c;
  c.input_dim = 1;
  auto p = init_params(c, 0);
  p.block("xi0")[0] = 800.0;  // exp overflows
  const std::vector<double> x = {1.0};
  try {
    Network(c).forward(p.values, x);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(LogPrior, AllZeroClosedForm) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto c = random_config(rng, 3, static_cast<ObservationKind>(k % 3));
    const auto layout = ParamLayout::for_config(c);
    std::size_t n_std = 0, n_w = 0;
    for (const auto& b : layout.blocks) (b.kind == BlockKind::kWeights || b.kind == BlockKind::kBias ? n_w : n_std) += b.size;
    const double expect = -0.5 * kLog2Pi * static_cast<double>(n_std + n_w) - std::log(std::log(2.0)) * static_cast<double>(n_w);
    const ParamVector p{std::vector<double>(layout.size, 0.0), layout};
    EXPECT_NEAR(log_prior(c, p), expect, 1e-10);
  }
}

TEST(LogPrior, MatchesBlockOracle) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto c = random_config(rng, 1 + k % 4, static_cast<ObservationKind>(k % 3));
    const auto p = init_params(c, static_cast<std::uint64_t>(k));
    EXPECT_NEAR(log_prior(c, p), prior_oracle(p.layout, p.values), 1e-9);
  }
}

TEST(LogPrior, GammaPerturbation) {
  const auto c = one_hidden(2, 3, {Activation::kTanh, Activation::kElu});
  const auto layout = ParamLayout::for_config(c);
  ParamVector p{std::vector<double>(layout.size, 0.0), layout};
  const double before = log_prior(c, p);
  p.block("gamma1")[1] = 1.0;
  EXPECT_NEAR(before - log_prior(c, p), 0.5, 1e-12);
}

TEST(LogPrior, StackedLayersAdd) {
  NetworkConfig one = one_hidden(2, 2, {Activation::kTanh});
  NetworkConfig two = one;
  two.layers.push_back({2, {Activation::kTanh}});
  const auto l1 = ParamLayout::for_config(one), l2 = ParamLayout::for_config(two);
  ParamVector p1{std::vector<double>(l1.size, 0.0), l1}, p2{std::vector<double>(l2.size, 0.0), l2};
  // Extra: xi and gamma of the new layer, plus 6 weight/bias entries (15 vs 9).
  const double extra = -0.5 * kLog2Pi * 2 + (-0.5 * kLog2Pi - std::log(std::log(2.0))) * 6;
  EXPECT_NEAR(log_prior(two, p2) - log_prior(one, p1), extra, 1e-10);
}

TEST(LogJoint, EmptyDatasetIsPrior) {
  const auto c = NetworkConfig::make_default(3);
  const auto p = init_params(c, 2);
  Design empty;
  empty.x.resize(3, 0);
  empty.y.resize(0);
  EXPECT_EQ(log_joint(c, p, empty), log_prior(c, p));
}

TEST(LogJoint, SingleRecordByHand) {
  NetworkConfig c;
  c.input_dim = 1;
  auto p = init_params(c, 0);
  p.block("xi0")[0] = 0.0;
  p.block("omega1")[0] = 1.5;
  p.block("beta1")[0] = -0.5;
  p.block("obs")[0] = inverse_softplus(0.64);
  const Design d = design_from({{2.0}}, {3.1});
  const double f = 1.5 * 2.0 - 0.5;
  EXPECT_NEAR(log_joint(c, p, d), log_prior(c, p) + normal_logpdf(3.1 - f, 0.8), 1e-12);
}

TEST(LogJoint, DuplicatingRecordsDoublesLikelihood) {
  std::mt19937_64 rng(4);
  for (auto kind : {ObservationKind::kNormal, ObservationKind::kStudentT, ObservationKind::kPoisson}) {
    const auto c = random_config(rng, 3, kind);
    const auto p = init_params(c, 1);
    const Design d = random_design(rng, 3, 6, kind);
    Design dd;
    dd.x.resize(3, 12);
    dd.x << d.x, d.x;
    dd.y.resize(12);
    dd.y << d.y, d.y;
    const double prior = log_prior(c, p);
    EXPECT_NEAR(log_joint(c, p, dd) - prior, 2.0 * (log_joint(c, p, d) - prior), 1e-10);
  }
}

TEST(Gradient, SymmetricStationaryPoint) {
  const auto c = NetworkConfig::make_default(2);
  auto p = init_params(c, 1);
  for (const auto& b : p.layout.blocks) {
    if (b.kind == BlockKind::kWeights || b.kind == BlockKind::kBias) {
      std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, 0.0);
    }
  }
  const Design d = design_from({{0.0, 0.0}, {0.0, 0.0}}, {0.0, 0.0});
  const auto g = log_joint_grad(c, p, d, 1.0);
  for (const auto& b : p.layout.blocks) {
    if (b.kind != BlockKind::kWeights && b.kind != BlockKind::kBias) continue;
    for (std::size_t i = 0; i < b.size; ++i) EXPECT_EQ(g[b.offset + i], 0.0) << b.name;
  }
}

TEST(Gradient, FiniteDifferencesSmallInstance) {
  std::mt19937_64 rng(17);
  for (auto kind : {ObservationKind::kNormal, ObservationKind::kStudentT, ObservationKind::kPoisson}) {
    NetworkConfig c = one_hidden(3, 4, {Activation::kTanh, Activation::kRelu, Activation::kElu}, kind);
    auto p = init_params(c, 9);
    for (auto& v : p.values) v *= 0.5;
    const Design d = random_design(rng, 3, 5, kind);
    const auto g = log_joint_grad(c, p, d, 1.0);
    const auto fd = fd_gradient(Network(c), p.values, d, 1.0);
    EXPECT_LE(max_relative_error(g, fd), 1e-4) << to_string(kind);
  }
}

TEST(Gradient, ScaleLinearity) {
  std::mt19937_64 rng(2);
  const auto c = NetworkConfig::make_default(3, ObservationKind::kStudentT);
  const auto p = init_params(c, 5);
  const Design d = random_design(rng, 3, 8, ObservationKind::kStudentT);
  const auto g0 = log_joint_grad(c, p, d, 0.0), g1 = log_joint_grad(c, p, d, 1.5), g2 = log_joint_grad(c, p, d, 3.0);
  for (std::size_t i = 0; i < g0.size(); ++i) {
    EXPECT_NEAR(g2[i] - g0[i], 2.0 * (g1[i] - g0[i]), 1e-10 * std::max(1.0, std::abs(g2[i])));
  }
}

TEST(Gradient, ColumnSubsetMatchesSubDesign) {
  std::mt19937_64 rng(3);
  const auto c = NetworkConfig::make_default(2);
  const auto p = init_params(c, 6);
  const Design d = random_design(rng, 2, 10, ObservationKind::kNormal);
  const std::vector<std::size_t> cols = {7, 2, 4};
  Design sub;
  sub.x.resize(2, 3);
  sub.y.resize(3);
  for (int k = 0; k < 3; ++k) {
    sub.x.col(k) = d.x.col(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(k)]));
    sub.y[k] = d.y[static_cast<Eigen::Index>(cols[static_cast<std::size_t>(k)])];
  }
  const Network net(c);
  const auto a = net.joint_gradient(p.values, d, cols, 2.0);
  const auto b = net.joint_gradient(p.values, sub, {}, 2.0);
  EXPECT_NEAR(a.value, b.value, 1e-10);
  EXPECT_LE(max_relative_error(a.grad, b.grad), 1e-12);
}

TEST(Gradient, ExcludePriorDropsPriorTerm) {
  std::mt19937_64 rng(5);
  const auto c = NetworkConfig::make_default(2);
  const auto p = init_params(c, 3);
  const Design d = random_design(rng, 2, 6, ObservationKind::kNormal);
  const Network net(c);
  const auto with = net.joint_gradient(p.values, d, {}, 1.0, PriorMode::kInclude);
  const auto without = net.joint_gradient(p.values, d, {}, 1.0, PriorMode::kExclude);
  std::vector<double> prior_grad(p.values.size(), 0.0);
  const double prior = net.log_prior(p.values, prior_grad);
  EXPECT_NEAR(with.value - without.value, prior, 1e-10);
  for (std::size_t i = 0; i < prior_grad.size(); ++i) EXPECT_NEAR(with.grad[i] - without.grad[i], prior_grad[i], 1e-10);
}

TEST(SimulateField, PoissonSupport) {
  NetworkConfig c = NetworkConfig::make_default(3, ObservationKind::kPoisson);
  FeatureSpec spec;
  spec.dim = 2;
  std::vector<SpaceTimeIndex> idx;
  for (int t = 0; t < 50; ++t) idx.push_back({{0.1 * t, 0.2}, static_cast<double>(t)});
  const auto y = simulate_field(c, 7, idx, spec);
  ASSERT_EQ(y.size(), idx.size());
  for (double v : y) {
    EXPECT_GE(v, 0.0);
    EXPECT_EQ(v, std::floor(v));
  }
  EXPECT_EQ(y, simulate_field(c, 7, idx, spec));
}

TEST(SimulateField, NoiseAroundField) {
  NetworkConfig c = NetworkConfig::make_default(2);
  FeatureSpec spec;
  spec.dim = 1;
  const std::vector<SpaceTimeIndex> idx(10000, SpaceTimeIndex{{0.4}, 3.0});
  const std::uint64_t seed = 21;
  const auto y = simulate_field(c, seed, idx, spec);
  const auto p = init_params(c, seed);
  const Network net(c);
  const double f = net.forward(p.values, build_features(spec, idx[0]).values);
  const double sd = std::sqrt(net.observation(p.values).variance);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  EXPECT_NEAR(mean, f, 3.0 * sd / 100.0);
}

TEST(SimulateField, FeatureMismatch) {
  NetworkConfig c = NetworkConfig::make_default(5);
  FeatureSpec spec;
  spec.dim = 1;
  const std::vector<SpaceTimeIndex> idx(2, SpaceTimeIndex{{0.4}, 3.0});
  EXPECT_THROW(simulate_field(c, 1, idx, spec), InputError);
}

TEST(CheckFinite, NamesBlock) {
  const auto c = NetworkConfig::make_default(2);
  auto p = init_params(c, 0);
  p.block("beta2")[3] = NAN;
  try {
    check_finite(p.layout, p.values, "params");
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("beta2"), std::string::npos);
  }
}
