#include "gridvla/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gridvla/common/error.hpp"
#include "gridvla/common/rng.hpp"

namespace gridvla::nn {
namespace {

double evaluate(const LossBuilder& loss, ParameterSet& params) {
  Graph g;
  const double v = loss(g, params).value().item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& loss, ParameterSet& params, double eps, std::size_t max_coords,
                                  std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-3]");
  params.zero_grad();
  {
    Graph g;
    Var l = loss(g, params);
    g.backward(l);
  }

  struct Coord {
    Tensor* tensor;
    std::size_t index;
  };
  std::vector<Coord> all;
  for (auto& slot : params.slots()) {
    if (!slot.trainable) continue;
    for (std::size_t i = 0; i < slot.tensor->size(); ++i) all.push_back({slot.tensor, i});
  }
  if (all.size() > max_coords) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) {
      std::swap(all[i], all[i + rng.below(all.size() - i)]);
    }
    all.resize(max_coords);
  }

  GradCheckResult result;
  result.coordinates = all.size();
  for (const auto& c : all) {
    double& x = c.tensor->data()[c.index];
    const double analytic = c.tensor->grad()[c.index];
    const double saved = x;
    x = saved + eps;
    const double up = evaluate(loss, params);
    x = saved - eps;
    const double down = evaluate(loss, params);
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    if (!std::isfinite(err)) throw NumericError("finite_diff_check: non-finite gradient comparison");
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

}  // namespace gridvla::nn
