#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridvla/nn/parameter_set.hpp"

namespace gridvla::nn {

struct OptimizerState {
  long step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> grad_clip_norm = 1.0;
};

struct AdamStats {
  double grad_norm = 0.0;  // before clipping
  double clip_scale = 1.0;
};

// Bias-corrected Adam update of every trainable slot. Gradients are read, not
// modified; global-norm clipping is applied to the values used for the update.
// Throws ContractError when a trainable slot has no gradient.
AdamStats adam_step(ParameterSet& params, OptimizerState& state);

}  // namespace gridvla::nn
