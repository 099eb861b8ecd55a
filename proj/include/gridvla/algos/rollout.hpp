#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gridvla/env/gridpick.hpp"
#include "gridvla/policy/model.hpp"

namespace gridvla::algos {

// One decision point. With chunking a decision spans up to chunk_size
// environment steps and `reward` is their sum.
struct Transition {
  env::Observation observation;
  std::vector<int> tokens;
  double reward = 0.0;
  double value = 0.0;
  double log_prob_old = 0.0;
  std::vector<double> token_log_probs_old;
  bool done = false;
  int env_steps = 1;
};

struct Trajectory {
  std::vector<Transition> records;
  double total_return = 0.0;
  bool success = false;
  bool truncated = false;  // ended by the horizon
  env::StageFlags flags;
  env::TaskSpec task;
  std::uint64_t episode_seed = 0;
  // V of the state after the last record; used only when truncated.
  double bootstrap_value = 0.0;

  int env_steps() const;
};

struct RolloutOptions {
  double temperature = 1.0;
  bool greedy = false;
  bool record_values = true;
  int n_envs = 16;
  env::EnvConfig env_config;
};

// Samples episodes of `task` until at least n_transitions decision records
// exist, finishing episodes already in flight. Episode i uses
// episode_seed_fn(i) at reset and its own sampling stream derived from
// (sample_seed, i). Deterministic in all inputs.
std::vector<Trajectory> collect_rollouts(const policy::Snapshot& snap, const env::TaskSpec& task,
                                         std::size_t n_transitions, const RolloutOptions& opt,
                                         const std::function<std::uint64_t(std::size_t)>& episode_seed_fn,
                                         std::uint64_t sample_seed);

// Runs exactly the given episodes (one per seed), batched n_envs at a time.
// sample_streams[i] seeds the sampler of episode i (ignored when greedy).
std::vector<Trajectory> run_episodes(const policy::Snapshot& snap, const env::TaskSpec& task,
                                     const std::vector<std::uint64_t>& episode_seeds,
                                     const std::vector<std::uint64_t>& sample_streams, const RolloutOptions& opt);

// Any callable controller over world states, run through the same driver
// (used to wrap the scripted expert and random baselines as policies).
using Controller = std::function<env::Action(const env::WorldState&, Rng&)>;
std::vector<Trajectory> run_controller(const Controller& controller, const env::TaskSpec& task,
                                       const std::vector<std::uint64_t>& episode_seeds, std::uint64_t sample_seed,
                                       const env::EnvConfig& config = {});

// Chunk-level rewards: sums of k consecutive step rewards; the last chunk
// may be partial.
std::vector<double> chunk_rewards(const std::vector<double>& step_rewards, int k);
// Groups k consecutive records: rewards and log-probs summed, value and
// observation of the first record, tokens concatenated.
Trajectory chunk_rewards(const Trajectory& trajectory, int k);

}  // namespace gridvla::algos
