#pragma once

#include <cstdint>
#include <functional>

#include "gridvla/nn/graph.hpp"
#include "gridvla/nn/parameter_set.hpp"

namespace gridvla::nn {

using LossBuilder = std::function<Var(Graph&, ParameterSet&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients of `loss` with central differences on up to
// `max_coords` randomly sampled trainable coordinates (all of them when fewer).
// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
GradCheckResult finite_diff_check(const LossBuilder& loss, ParameterSet& params, double eps,
                                  std::size_t max_coords = 200, std::uint64_t seed = 0);

}  // namespace gridvla::nn
