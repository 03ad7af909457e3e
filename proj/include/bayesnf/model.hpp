#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bayesnf/features.hpp"
#include "bayesnf/observation.hpp"

namespace bayesnf {

enum class Activation { kTanh, kRelu, kElu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);
double apply_activation(Activation a, double z);

struct LayerConfig {
  std::size_t width = 0;
  std::vector<Activation> activations;
};

/// Architecture of the field network: L internal layers followed by a
/// single-unit output layer whose pre-activation is F(s, t).
struct NetworkConfig {
  std::vector<LayerConfig> layers;
  std::size_t input_dim = 1;
  ObservationModel observation;

  void validate() const;

  /// Two layers of width 64 mixing tanh and elu.
  static NetworkConfig make_default(std::size_t input_dim, ObservationKind kind = ObservationKind::kNormal);
};

enum class BlockKind { kInputScale, kLayerScale, kActivationLogits, kWeights, kBias, kObservation };

struct ParamBlock {
  std::string name;
  BlockKind kind = BlockKind::kInputScale;
  std::size_t layer = 0;  // 0 for the input scale and observation blocks
  std::size_t offset = 0;
  std::size_t size = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Index ranges of every parameter block inside the flat vector. Order:
/// xi0 [m]; for l = 1..L+1: xi_l [1], gamma_l [A_l] (hidden layers only),
/// omega_l [N_l x N_{l-1}, row-major], beta_l [N_l]; obs [n_y].
struct ParamLayout {
  std::vector<ParamBlock> blocks;
  std::size_t size = 0;

  static ParamLayout for_config(const NetworkConfig& config);
  const ParamBlock& block(std::string_view name) const;
  /// Name of the block containing flat index `i`.
  const ParamBlock& block_of(std::size_t i) const;
  bool operator==(const ParamLayout& other) const;
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  std::span<double> block(std::string_view name);
  std::span<const double> block(std::string_view name) const;
};

/// Column-major design: one column of features per record.
struct Design {
  Eigen::MatrixXd x;  // m x N
  Eigen::VectorXd y;  // N
};

enum class PriorMode { kInclude, kExclude };

struct JointGradient {
  double value = 0.0;
  std::vector<double> grad;
};

/// Evaluation engine for one architecture. Stateless after construction;
/// all methods are safe to call concurrently.
class Network {
 public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.size; }

  double forward(std::span<const double> params, std::span<const double> x) const;
  Eigen::VectorXd forward_batch(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Pre-activations z^1..z^{L+1} at one input.
  std::vector<Eigen::VectorXd> pre_activations(std::span<const double> params, std::span<const double> x) const;

  ObservationParams observation(std::span<const double> params) const;

  /// Log prior; when `grad` is non-empty the gradient is added into it.
  double log_prior(std::span<const double> params, std::span<double> grad = {}) const;

  /// scale * sum of log likelihoods over the given design columns (all when
  /// `columns` is empty); when `grad` is non-empty the gradient is added into it.
  double log_likelihood(std::span<const double> params, const Design& data, std::span<const std::size_t> columns,
                        double scale, std::span<double> grad = {}) const;

  /// Value and gradient of log_prior + scale * batch log likelihood.
  JointGradient joint_gradient(std::span<const double> params, const Design& data,
                               std::span<const std::size_t> columns, double scale,
                               PriorMode prior = PriorMode::kInclude) const;

 private:
  struct LayerView {
    std::size_t xi = 0;
    std::size_t gamma = 0;
    std::size_t n_act = 0;
    std::size_t weights = 0;
    std::size_t bias = 0;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
  };

 public:
  struct Cache;

 private:
  void run_forward(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x, Cache& cache) const;
  void run_backward(std::span<const double> params, Cache& cache, const Eigen::RowVectorXd& d_f,
                    std::span<double> grad) const;

  NetworkConfig config_;
  ParamLayout layout_;
  std::vector<LayerView> views_;  // L + 1 entries
  std::size_t obs_offset_ = 0;
};

ParamVector init_params(const NetworkConfig& config, std::uint64_t seed);

double forward(const NetworkConfig& config, const ParamVector& params, const FeatureVector& x);

double log_prior(const NetworkConfig& config, const ParamVector& params);

double log_joint(const NetworkConfig& config, const ParamVector& params, const Design& data);

/// Exact gradient of log_prior + scale * sum of log likelihoods over `data`.
std::vector<double> log_joint_grad(const NetworkConfig& config, const ParamVector& params, const Design& data,
                                   double scale);

/// Draws parameters from the prior, then one observation per index.
std::vector<double> simulate_field(const NetworkConfig& config, std::uint64_t seed,
                                   std::span<const SpaceTimeIndex> indices, const FeatureSpec& spec);

/// Throws NumericalError naming the first block holding a non-finite entry.
void check_finite(const ParamLayout& layout, std::span<const double> values, std::string_view what);

/// Deterministic seed mixing (splitmix64).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bayesnf
