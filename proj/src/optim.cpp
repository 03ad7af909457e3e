#include "bayesnf/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bayesnf/error.hpp"

namespace bayesnf {

DecayKind parse_decay_kind(std::string_view name) {
  if (name == "constant") return DecayKind::kConstant;
  if (name == "cosine") return DecayKind::kCosine;
  throw InputError("unknown learning-rate decay '" + std::string(name) + "'");
}

std::string_view to_string(DecayKind kind) { return kind == DecayKind::kConstant ? "constant" : "cosine"; }

std::size_t LearningRateSchedule::warmup_steps(std::size_t total_steps) const {
  return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

double LearningRateSchedule::rate(std::size_t step, std::size_t total_steps) const {
  const std::size_t warm = warmup_steps(total_steps);
  if (step < warm) return peak * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (decay == DecayKind::kConstant) return peak;
  const std::size_t span = total_steps > warm ? total_steps - warm : 1;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(std::size_t n, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void Adam::ascend(std::span<double> params, std::span<const double> grad, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] += learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

}  // namespace bayesnf
