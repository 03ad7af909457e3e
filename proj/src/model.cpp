#include "bayesnf/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "bayesnf/error.hpp"

namespace bayesnf {

namespace {

constexpr double kHalfLogTwoPi = 0.91893853320467274178032973640562;

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Writes activation values into `u`, adding mix * derivative into `slope`
// when non-null. Outputs are reused buffers: fresh large temporaries cost
// more in page faults than the arithmetic.
void activate(Activation a, const Eigen::ArrayXXd& z, double mix, Eigen::ArrayXXd* slope, Eigen::ArrayXXd& u) {
  switch (a) {
    case Activation::kTanh:
      // Eigen's double tanh is scalar; the exp form vectorizes.
      u = 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
      if (slope) *slope += mix * (1.0 - u.square());
      return;
    case Activation::kRelu:
      u = z.max(0.0);
      if (slope) *slope += mix * (z > 0.0).cast<double>();
      return;
    case Activation::kElu:
      // Branch-free so it vectorizes: select() evaluates per scalar.
      u = z.max(0.0) + (z.min(0.0).exp() - 1.0);
      if (slope) *slope += mix * (u + 1.0).min(1.0);
      return;
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    w[j] = std::exp(logits[j] - mx);
    total += w[j];
  }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "elu") return Activation::kElu;
  throw InputError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
  }
  return "?";
}

double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kElu: return z > 0.0 ? z : std::expm1(z);
  }
  return z;
}

void NetworkConfig::validate() const {
  if (input_dim < 1) throw InputError("network: input dimension must be at least 1");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].width < 1) throw InputError("network: layer " + std::to_string(l + 1) + " has zero width");
    if (layers[l].activations.empty()) {
      throw InputError("network: layer " + std::to_string(l + 1) + " needs at least one activation");
    }
  }
}

NetworkConfig NetworkConfig::make_default(std::size_t input_dim, ObservationKind kind) {
  NetworkConfig c;
  c.input_dim = input_dim;
  c.observation.kind = kind;
  c.layers.assign(2, LayerConfig{64, {Activation::kTanh, Activation::kElu}});
  return c;
}

ParamLayout ParamLayout::for_config(const NetworkConfig& config) {
  config.validate();
  ParamLayout layout;
  auto add = [&](std::string name, BlockKind kind, std::size_t layer, std::size_t rows, std::size_t cols) {
    layout.blocks.push_back(ParamBlock{std::move(name), kind, layer, layout.size, rows * cols, rows, cols});
    layout.size += rows * cols;
  };
  add("xi0", BlockKind::kInputScale, 0, config.input_dim, 1);
  std::size_t n_prev = config.input_dim;
  const std::size_t n_layers = config.layers.size();
  for (std::size_t l = 1; l <= n_layers + 1; ++l) {
    const bool hidden = l <= n_layers;
    const std::size_t n_out = hidden ? config.layers[l - 1].width : 1;
    const std::string suffix = std::to_string(l);
    add("xi" + suffix, BlockKind::kLayerScale, l, 1, 1);
    if (hidden) add("gamma" + suffix, BlockKind::kActivationLogits, l, config.layers[l - 1].activations.size(), 1);
    add("omega" + suffix, BlockKind::kWeights, l, n_out, n_prev);
    add("beta" + suffix, BlockKind::kBias, l, n_out, 1);
    n_prev = n_out;
  }
  add("obs", BlockKind::kObservation, 0, config.observation.n_params(), 1);
  return layout;
}

const ParamBlock& ParamLayout::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw InputError("parameter layout has no block '" + std::string(name) + "'");
}

const ParamBlock& ParamLayout::block_of(std::size_t i) const {
  for (const auto& b : blocks)
    if (i >= b.offset && i < b.offset + b.size) return b;
  throw InputError("parameter index out of range");
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (size != other.size || blocks.size() != other.blocks.size()) return false;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& a = blocks[i];
    const auto& b = other.blocks[i];
    if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

std::span<double> ParamVector::block(std::string_view name) {
  const auto& b = layout.block(name);
  return std::span<double>(values).subspan(b.offset, b.size);
}

std::span<const double> ParamVector::block(std::string_view name) const {
  const auto& b = layout.block(name);
  return std::span<const double>(values).subspan(b.offset, b.size);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_finite(const ParamLayout& layout, std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError(std::string(what) + ": non-finite entry in block '" + layout.block_of(i).name + "'");
    }
  }
}

// ---------------------------------------------------------------------------

struct Network::Cache {
  std::vector<Eigen::MatrixXd> h;                     // h[0] = scaled input, h[l] hidden outputs
  std::vector<Eigen::ArrayXXd> z;                     // z[l-1] = pre-activation of layer l
  std::vector<std::vector<Eigen::ArrayXXd>> u;        // u[l-1][j] = activation j of layer l
  std::vector<std::vector<double>> mix;               // softmax weights per hidden layer
  std::vector<Eigen::ArrayXXd> slope;                 // d h / d z per hidden layer
  std::array<Eigen::MatrixXd, 2> back;                // backward ping-pong buffers
  bool with_slope = false;
};

namespace {

// One workspace per thread; Network methods stay const and reentrant.
Network::Cache& thread_cache();

}  // namespace

Network::Network(NetworkConfig config) : config_(std::move(config)), layout_(ParamLayout::for_config(config_)) {
  const std::size_t n_layers = config_.layers.size();
  views_.resize(n_layers + 1);
  for (std::size_t l = 1; l <= n_layers + 1; ++l) {
    auto& v = views_[l - 1];
    const std::string s = std::to_string(l);
    v.xi = layout_.block("xi" + s).offset;
    if (l <= n_layers) {
      const auto& g = layout_.block("gamma" + s);
      v.gamma = g.offset;
      v.n_act = g.size;
    }
    const auto& w = layout_.block("omega" + s);
    v.weights = w.offset;
    v.n_out = w.rows;
    v.n_in = w.cols;
    v.bias = layout_.block("beta" + s).offset;
  }
  obs_offset_ = layout_.block("obs").offset;
}

ObservationParams Network::observation(std::span<const double> params) const {
  return observation_params(config_.observation.kind, params.subspan(obs_offset_, config_.observation.n_params()));
}

void Network::run_forward(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x,
                          Cache& cache) const {
  const std::size_t m = config_.input_dim;
  if (static_cast<std::size_t>(x.rows()) != m) {
    throw InputError("forward: feature length " + std::to_string(x.rows()) + " does not match input dimension " +
                     std::to_string(m));
  }
  const std::size_t n_layers = config_.layers.size();
  const Eigen::Index cols = x.cols();
  cache.h.resize(n_layers + 1);
  cache.z.resize(n_layers + 1);
  cache.u.resize(n_layers);
  cache.mix.resize(n_layers);
  cache.slope.resize(n_layers);

  Eigen::Map<const Eigen::VectorXd> xi0(params.data(), static_cast<Eigen::Index>(m));
  cache.h[0].noalias() = xi0.array().exp().matrix().asDiagonal() * x;

  for (std::size_t l = 1; l <= n_layers + 1; ++l) {
    const auto& v = views_[l - 1];
    RowMajorMap w(params.data() + v.weights, static_cast<Eigen::Index>(v.n_out), static_cast<Eigen::Index>(v.n_in));
    Eigen::Map<const Eigen::VectorXd> b(params.data() + v.bias, static_cast<Eigen::Index>(v.n_out));
    const Eigen::MatrixXd ws = (1.0 / std::sqrt(static_cast<double>(v.n_in))) * w;
    auto& z = cache.z[l - 1];
    z.resize(static_cast<Eigen::Index>(v.n_out), cols);
    z.matrix().noalias() = ws * cache.h[l - 1];
    z.matrix().colwise() += b;
    // A NaN or infinity anywhere survives the sum.
    if (!std::isfinite(z.sum())) {
      throw NumericalError("forward: non-finite pre-activation at layer " + std::to_string(l));
    }
    if (l > n_layers) break;

    const auto& acts = config_.layers[l - 1].activations;
    cache.mix[l - 1] = softmax(params.subspan(v.gamma, v.n_act));
    auto& us = cache.u[l - 1];
    us.resize(acts.size());
    Eigen::ArrayXXd* slope = nullptr;
    if (cache.with_slope) {
      cache.slope[l - 1].setZero(z.rows(), z.cols());
      slope = &cache.slope[l - 1];
    }
    auto& h = cache.h[l];
    for (std::size_t j = 0; j < acts.size(); ++j) {
      const double mj = cache.mix[l - 1][j];
      activate(acts[j], z, mj, slope, us[j]);
      if (j == 0) {
        h = (mj * us[j]).matrix();
      } else {
        h.array() += mj * us[j];
      }
    }
  }
}

void Network::run_backward(std::span<const double> params, Cache& cache, const Eigen::RowVectorXd& d_f,
                           std::span<double> grad) const {
  const std::size_t n_layers = config_.layers.size();
  int cur = 0;
  cache.back[cur] = d_f;  // 1 x B
  for (std::size_t l = n_layers + 1; l >= 1; --l) {
    const auto& v = views_[l - 1];
    RowMajorMap w(params.data() + v.weights, static_cast<Eigen::Index>(v.n_out), static_cast<Eigen::Index>(v.n_in));
    RowMajorMutMap d_w(grad.data() + v.weights, static_cast<Eigen::Index>(v.n_out), static_cast<Eigen::Index>(v.n_in));
    Eigen::Map<Eigen::VectorXd> d_b(grad.data() + v.bias, static_cast<Eigen::Index>(v.n_out));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(v.n_in));
    const auto& d_z = cache.back[cur];

    d_w.noalias() += inv_sqrt * (d_z * cache.h[l - 1].transpose());
    d_b.noalias() += d_z * Eigen::VectorXd::Ones(d_z.cols());
    const Eigen::MatrixXd ws = inv_sqrt * w;
    auto& d_h = cache.back[1 - cur];
    d_h.resize(ws.cols(), d_z.cols());
    d_h.noalias() = ws.transpose() * d_z;

    if (l == 1) {
      const Eigen::VectorXd d_xi0 = (d_h.array() * cache.h[0].array()).rowwise().sum();
      for (std::size_t i = 0; i < config_.input_dim; ++i) grad[i] += d_xi0[static_cast<Eigen::Index>(i)];
      break;
    }

    // Layer l - 1 is hidden: undo the activation mixture.
    const std::size_t k = l - 1;
    const auto& prev = views_[k - 1];
    const auto& acts = config_.layers[k - 1].activations;
    const auto& mix = cache.mix[k - 1];
    const auto& us = cache.u[k - 1];
    std::vector<double> d_mix(acts.size());
    for (std::size_t j = 0; j < acts.size(); ++j) d_mix[j] = (d_h.array() * us[j]).sum();
    double mean_d = 0.0;
    for (std::size_t j = 0; j < acts.size(); ++j) mean_d += mix[j] * d_mix[j];
    for (std::size_t j = 0; j < acts.size(); ++j) grad[prev.gamma + j] += mix[j] * (d_mix[j] - mean_d);
    d_h.array() *= cache.slope[k - 1];
    cur = 1 - cur;
  }
}

namespace {

Network::Cache& thread_cache() {
  thread_local Network::Cache cache;
  return cache;
}

}  // namespace

double Network::forward(std::span<const double> params, std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> col(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward_batch(params, col)[0];
}

Eigen::VectorXd Network::forward_batch(std::span<const double> params,
                                       const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Cache& cache = thread_cache();
  cache.with_slope = false;
  run_forward(params, x, cache);
  return cache.z.back().row(0).transpose().matrix();
}

std::vector<Eigen::VectorXd> Network::pre_activations(std::span<const double> params,
                                                      std::span<const double> x) const {
  Eigen::Map<const Eigen::VectorXd> col(x.data(), static_cast<Eigen::Index>(x.size()));
  Cache cache;
  run_forward(params, col, cache);
  std::vector<Eigen::VectorXd> out;
  for (const auto& z : cache.z) out.emplace_back(z.col(0).matrix());
  return out;
}

double Network::log_prior(std::span<const double> params, std::span<double> grad) const {
  const bool with_grad = !grad.empty();
  double total = 0.0;
  auto standard = [&](std::size_t offset, std::size_t size) {
    for (std::size_t i = offset; i < offset + size; ++i) {
      total += -0.5 * params[i] * params[i] - kHalfLogTwoPi;
      if (with_grad) grad[i] -= params[i];
    }
  };
  standard(0, config_.input_dim);
  for (const auto& v : views_) {
    standard(v.xi, 1);
    standard(v.gamma, v.n_act);
    const double xi = params[v.xi];
    const double sigma = softplus(xi);
    const double log_sigma = std::log(sigma);
    double sum_sq = 0.0;
    std::size_t count = 0;
    auto weighted = [&](std::size_t offset, std::size_t size) {
      for (std::size_t i = offset; i < offset + size; ++i) {
        sum_sq += params[i] * params[i];
        if (with_grad) grad[i] -= params[i] / (sigma * sigma);
      }
      count += size;
    };
    weighted(v.weights, v.n_out * v.n_in);
    weighted(v.bias, v.n_out);
    total += -0.5 * sum_sq / (sigma * sigma) - static_cast<double>(count) * (log_sigma + kHalfLogTwoPi);
    if (with_grad) {
      const double d_sigma = sum_sq / (sigma * sigma * sigma) - static_cast<double>(count) / sigma;
      grad[v.xi] += d_sigma * sigmoid(xi);
    }
  }
  standard(obs_offset_, config_.observation.n_params());
  return total;
}

double Network::log_likelihood(std::span<const double> params, const Design& data,
                               std::span<const std::size_t> columns, double scale, std::span<double> grad) const {
  const Eigen::Index n = columns.empty() ? data.x.cols() : static_cast<Eigen::Index>(columns.size());
  if (n == 0) return 0.0;
  Eigen::MatrixXd batch;
  Eigen::VectorXd y;
  if (columns.empty()) {
    batch = data.x;
    y = data.y;
  } else {
    batch.resize(data.x.rows(), n);
    y.resize(n);
    for (Eigen::Index b = 0; b < n; ++b) {
      batch.col(b) = data.x.col(static_cast<Eigen::Index>(columns[static_cast<std::size_t>(b)]));
      y[b] = data.y[static_cast<Eigen::Index>(columns[static_cast<std::size_t>(b)])];
    }
  }
  Cache& cache = thread_cache();
  cache.with_slope = !grad.empty();
  run_forward(params, batch, cache);
  const auto kind = config_.observation.kind;
  const auto raw = params.subspan(obs_offset_, config_.observation.n_params());
  double total = 0.0;
  Eigen::RowVectorXd d_f(n);
  std::array<double, 2> d_raw{0.0, 0.0};
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto term = log_likelihood_grad(kind, raw, cache.z.back()(0, b), y[b]);
    total += term.value;
    d_f[b] = scale * term.d_f;
    d_raw[0] += term.d_raw[0];
    d_raw[1] += term.d_raw[1];
  }
  if (!grad.empty()) {
    run_backward(params, cache, d_f, grad);
    for (std::size_t k = 0; k < raw.size(); ++k) grad[obs_offset_ + k] += scale * d_raw[k];
  }
  return scale * total;
}

JointGradient Network::joint_gradient(std::span<const double> params, const Design& data,
                                      std::span<const std::size_t> columns, double scale, PriorMode prior) const {
  JointGradient out;
  out.grad.assign(layout_.size, 0.0);
  if (prior == PriorMode::kInclude) out.value += log_prior(params, out.grad);
  out.value += log_likelihood(params, data, columns, scale, out.grad);
  check_finite(layout_, out.grad, "gradient");
  return out;
}

// ---------------------------------------------------------------------------

ParamVector init_params(const NetworkConfig& config, std::uint64_t seed) {
  ParamVector p;
  p.layout = ParamLayout::for_config(config);
  p.values.assign(p.layout.size, 0.0);
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  double sigma = 1.0;
  for (const auto& b : p.layout.blocks) {
    switch (b.kind) {
      case BlockKind::kInputScale:
      case BlockKind::kActivationLogits:
      case BlockKind::kObservation:
        for (std::size_t i = 0; i < b.size; ++i) p.values[b.offset + i] = normal(rng);
        break;
      case BlockKind::kLayerScale:
        p.values[b.offset] = normal(rng);
        sigma = softplus(p.values[b.offset]);
        break;
      case BlockKind::kWeights:
      case BlockKind::kBias:
        for (std::size_t i = 0; i < b.size; ++i) p.values[b.offset + i] = sigma * normal(rng);
        break;
    }
  }
  return p;
}

double forward(const NetworkConfig& config, const ParamVector& params, const FeatureVector& x) {
  return Network(config).forward(params.values, x.values);
}

double log_prior(const NetworkConfig& config, const ParamVector& params) {
  return Network(config).log_prior(params.values);
}

double log_joint(const NetworkConfig& config, const ParamVector& params, const Design& data) {
  const Network net(config);
  return net.log_prior(params.values) + net.log_likelihood(params.values, data, {}, 1.0);
}

std::vector<double> log_joint_grad(const NetworkConfig& config, const ParamVector& params, const Design& data,
                                   double scale) {
  return Network(config).joint_gradient(params.values, data, {}, scale).grad;
}

std::vector<double> simulate_field(const NetworkConfig& config, std::uint64_t seed,
                                   std::span<const SpaceTimeIndex> indices, const FeatureSpec& spec) {
  spec.validate();
  if (feature_count(spec) != config.input_dim) {
    throw InputError("simulate_field: feature spec yields " + std::to_string(feature_count(spec)) +
                     " features, network expects " + std::to_string(config.input_dim));
  }
  const Network net(config);
  const ParamVector params = init_params(config, seed);
  const ObservationParams obs = net.observation(params.values);
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::vector<double> out;
  out.reserve(indices.size());
  std::vector<double> x(config.input_dim);
  for (const auto& idx : indices) {
    build_features_into(spec, idx, {}, x);
    out.push_back(sample_observation(obs, net.forward(params.values, x), rng));
  }
  return out;
}

}  // namespace bayesnf
