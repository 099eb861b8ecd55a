#include "gridvla/nn/adam.hpp"

#include <cmath>

#include "gridvla/common/error.hpp"

namespace gridvla::nn {

AdamStats adam_step(ParameterSet& params, OptimizerState& state) {
  auto slots = params.slots();
  double sq = 0.0;
  for (auto& slot : slots) {
    if (!slot.trainable) continue;
    if (!slot.tensor->has_grad()) throw ContractError("adam_step: missing gradient for '" + slot.key + "'");
    for (double g : slot.tensor->grad()) sq += g * g;
  }
  AdamStats stats;
  stats.grad_norm = std::sqrt(sq);
  if (!std::isfinite(stats.grad_norm)) throw NumericError("adam_step: non-finite gradient norm");
  if (state.grad_clip_norm && stats.grad_norm > *state.grad_clip_norm) {
    stats.clip_scale = *state.grad_clip_norm / stats.grad_norm;
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto& slot : slots) {
    if (!slot.trainable) continue;
    auto& m = state.first_moment[slot.key];
    auto& v = state.second_moment[slot.key];
    auto data = slot.tensor->data();
    auto grad = slot.tensor->grad();
    if (m.size() != data.size()) {
      m.assign(data.size(), 0.0);
      v.assign(data.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i] * stats.clip_scale;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  return stats;
}

}  // namespace gridvla::nn
