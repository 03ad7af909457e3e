#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace bayesnf {

enum class DecayKind { kConstant, kCosine };

DecayKind parse_decay_kind(std::string_view name);
std::string_view to_string(DecayKind kind);

/// Linear warmup to the peak rate over the first `warmup_fraction` of the
/// steps, then either constant or cosine decay to zero.
struct LearningRateSchedule {
  double peak = 5e-3;
  double warmup_fraction = 0.1;
  DecayKind decay = DecayKind::kCosine;

  double rate(std::size_t step, std::size_t total_steps) const;
  std::size_t warmup_steps(std::size_t total_steps) const;
};

/// Adam with bias correction, used for gradient *ascent*.
class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void ascend(std::span<double> params, std::span<const double> grad, double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace bayesnf
