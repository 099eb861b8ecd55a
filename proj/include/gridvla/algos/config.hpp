#pragma once

#include <cstddef>

#include "json.hpp"

namespace gridvla::algos {

struct AlgoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  int ppo_epochs = 1;
  int minibatch_size = 256;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.003;
  int group_size = 8;
  int n_groups = 32;
  double beta = 0.1;
  double temperature = 1.0;
  int chunk_size = 1;
  bool per_dim_clip = false;
  bool normalize_advantages = true;
  // Optimizer.
  double learning_rate = 2e-4;
  // RL loops scale the rate by (1 - env_steps / max_env_steps) when set.
  bool lr_linear_decay = false;
  double grad_clip_norm = 1.0;
  // Transitions gathered per PPO/TPO update.
  int rollout_transitions = 1024;
  // Parallel environment slots during rollouts.
  int n_envs = 16;

  void validate() const;
};

nlohmann::json to_json(const AlgoConfig& c);
// Missing keys keep defaults; unknown keys raise ConfigError.
AlgoConfig algo_config_from_json(const nlohmann::json& j);

// Settings of the chunked variant: gamma 0.96, lambda 0.85, clip 0.1,
// per-dimension clipping.
AlgoConfig chunked_defaults(int chunk_size = 4);
// GAE disabled: gamma = lambda = 1.
AlgoConfig orz_defaults();

}  // namespace gridvla::algos
