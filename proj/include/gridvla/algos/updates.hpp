#pragma once

#include <cstdint>
#include <vector>

#include "gridvla/algos/losses.hpp"
#include "gridvla/nn/adam.hpp"

namespace gridvla::algos {

// Flattened decision points with per-transition advantages and targets.
struct RolloutBatch {
  std::vector<const Transition*> transitions;
  std::vector<double> advantages;
  std::vector<double> returns;
  double raw_advantage_mean = 0.0;
  double raw_advantage_std = 0.0;
};

// GAE per trajectory (bootstrapping V at truncation, 0 at termination),
// then batch-level advantage normalization when enabled.
RolloutBatch make_ppo_batch(const std::vector<Trajectory>& trajectories, const AlgoConfig& algo);

// Shifts and scales advantages to mean 0 and std 1 when std > 1e-8.
void normalize_advantages(RolloutBatch& batch);

// Every transition of trajectory i gets its group-normalized outcome reward.
// Throws ContractError when a group's trajectories do not share their
// initial state (task and episode seed).
RolloutBatch make_grpo_batch(const std::vector<std::vector<Trajectory>>& groups);

struct UpdateStats {
  double policy_loss = 0.0;  // mean -surrogate
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  long grad_steps = 0;
  int epochs = 0;
};

nn::OptimizerState make_optimizer(const AlgoConfig& algo);

// ppo_epochs passes over shuffled minibatches of the batch. Throws
// NumericError naming the minibatch when a loss is not finite.
UpdateStats ppo_update(const RolloutBatch& batch, nn::ParameterSet& params, nn::OptimizerState& opt,
                       const policy::PolicyConfig& cfg, const AlgoConfig& algo, std::uint64_t shuffle_seed,
                       bool train_value = true);

// Clipped update on group-normalized outcome advantages; no value loss.
UpdateStats grpo_update(const std::vector<std::vector<Trajectory>>& groups, nn::ParameterSet& params,
                        nn::OptimizerState& opt, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                        std::uint64_t shuffle_seed);

// One optimizer step on the TPO loss averaged over `pairs`, for each
// minibatch of pairs_per_step pairs. ref_log_probs[i] is the reference
// log-probability of trajectories[i].
UpdateStats tpo_update(const std::vector<Trajectory>& trajectories, const std::vector<PreferencePair>& pairs,
                       const std::vector<double>& ref_log_probs, nn::ParameterSet& params, nn::OptimizerState& opt,
                       const policy::PolicyConfig& cfg, const AlgoConfig& algo, std::size_t pairs_per_step,
                       std::uint64_t shuffle_seed);

// One optimizer step on sft_loss; returns the loss before the step.
double sft_step(nn::ParameterSet& params, nn::OptimizerState& opt, const policy::PolicyConfig& cfg,
                const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens);

}  // namespace gridvla::algos
