#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gridvla/algos/rollout.hpp"
#include "gridvla/env/task.hpp"
#include "gridvla/policy/model.hpp"

namespace gridvla::bench {

// Metrics of one (variant, seed) evaluation unit.
struct EvalUnit {
  env::Variant variant = env::Variant::Training;
  std::uint64_t seed = 0;
  int episodes = 0;
  double grasp_acc = 0.0;       // grasped the target at least once
  double cont_grasp_acc = 0.0;  // hold streak reached 5
  double success = 0.0;         // placed
  double mean_return = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample std across seeds; 0 for a single seed
};

struct VariantSummary {
  env::Variant variant = env::Variant::Training;
  env::Axis axis = env::Axis::InDistribution;
  int seeds = 0;
  int episodes = 0;  // per seed
  MetricSummary grasp_acc;
  MetricSummary cont_grasp_acc;
  MetricSummary success;
  // (OOD - IND) / IND against the report's Training row; empty when IND is
  // 0 or the report has no Training row.
  std::optional<double> grasp_degradation;
  std::optional<double> cont_grasp_degradation;
  std::optional<double> success_degradation;
};

struct AxisSummary {
  env::Axis axis = env::Axis::InDistribution;
  std::vector<env::Variant> members;
  double grasp_acc = 0.0;
  double cont_grasp_acc = 0.0;
  double success = 0.0;
  // Mean over members with a defined success degradation.
  std::optional<double> success_degradation;
};

struct EvalReport {
  std::vector<EvalUnit> units;  // suite order, then seed order
  std::vector<VariantSummary> variants;
  std::vector<AxisSummary> axes;  // axes present in the suite, in enum order

  const VariantSummary& variant(env::Variant v) const;
  const AxisSummary& axis(env::Axis a) const;
};

struct EvalOptions {
  int episodes_per_task = 64;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int workers = 1;
  int n_envs = 16;
  env::EnvConfig env_config;
};

// Runs the episodes of `task` with the given reset seeds.
using EpisodeRunner =
    std::function<std::vector<algos::Trajectory>(const env::TaskSpec&, const std::vector<std::uint64_t>&)>;

// Reset seed of evaluation episode i under eval seed s.
std::uint64_t eval_episode_seed(std::uint64_t s, std::size_t i);

// Each variant is instantiated with make_task(variant, seed) for every seed.
EvalReport evaluate(const EpisodeRunner& runner, const std::vector<env::Variant>& suite, const EvalOptions& opt);
// Greedy decoding of a policy snapshot.
EvalReport evaluate(const policy::Snapshot& snap, const std::vector<env::Variant>& suite, const EvalOptions& opt);
EvalReport evaluate_controller(const algos::Controller& controller, const std::vector<env::Variant>& suite,
                               const EvalOptions& opt);

// Aggregates units (already in suite/seed order) into variant and axis rows.
EvalReport summarize(std::vector<EvalUnit> units);

// (ood - ind) / ind; empty when ind is not positive.
std::optional<double> degradation(double ind_metric, double ood_metric);

std::vector<env::Variant> full_suite();
std::vector<env::Variant> axis_members(env::Axis a);

}  // namespace gridvla::bench
