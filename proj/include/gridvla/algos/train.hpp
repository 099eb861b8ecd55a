#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "gridvla/algos/updates.hpp"
#include "gridvla/env/demos.hpp"

namespace gridvla::algos {

// Step-indexed JSON-lines log. Each record gets wall_clock_s (seconds since
// construction) unless disabled, which makes the file a pure function of
// the run's inputs.
class MetricsLog {
 public:
  MetricsLog() = default;  // discards records
  explicit MetricsLog(const std::filesystem::path& path, bool wall_clock = true);

  void write(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::optional<std::ofstream> file_;
  bool wall_clock_ = true;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::vector<nlohmann::json> records_;
};

// Called with the current parameters and counters when a checkpoint is due.
using CheckpointFn = std::function<void(const nn::ParameterSet&, long env_steps, long grad_steps)>;

struct EvalPoint {
  long env_steps = 0;
  long grad_steps = 0;
  double success = 0.0;
  double mean_return = 0.0;
};

// Greedy success on `task` over episodes with reset seeds derived from
// eval_seed.
EvalPoint greedy_eval(const policy::Snapshot& snap, const env::TaskSpec& task, int episodes, std::uint64_t eval_seed,
                      int n_envs = 16);

struct SftOptions {
  long steps = 2000;
  int batch_size = 64;
  double learning_rate = 2e-3;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  long eval_every = 0;  // gradient steps; 0 disables periodic evaluation
  int eval_episodes = 64;
  std::uint64_t eval_seed = 0;
  long log_every = 50;
  long checkpoint_every = 0;
};

struct TrainResult {
  std::vector<EvalPoint> evals;
  long env_steps = 0;
  long grad_steps = 0;
  double final_loss = 0.0;
  // First evaluation whose success reached the threshold.
  std::optional<long> env_steps_to_threshold;
};

// Decision-point training pairs of a demo set. With chunk_size k > 1 the
// targets of step t are the tokens of steps t..t+k-1 of the same episode,
// padded with the open-gripper no-op.
struct SftExample {
  const env::Observation* observation;
  std::vector<int> tokens;
};
std::vector<SftExample> sft_examples(const env::DemoDataset& demos, const policy::PolicyConfig& cfg);

// Minimizes sft_loss over shuffled minibatches for opt.steps steps. With 0
// steps the parameters are untouched.
TrainResult train_sft(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const env::DemoDataset& demos,
                      const SftOptions& opt, MetricsLog& log, const CheckpointFn& checkpoint = {});

// The SFT phase that initializes RL runs.
inline TrainResult warmup(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const env::DemoDataset& demos,
                          const SftOptions& opt, MetricsLog& log) {
  return train_sft(params, cfg, demos, opt, log);
}

struct RlOptions {
  long max_env_steps = 200000;
  std::uint64_t seed = 0;
  long eval_every = 10000;  // env steps; 0 disables periodic evaluation
  int eval_episodes = 64;
  std::uint64_t eval_seed = 0;
  double success_threshold = 0.9;
  bool stop_at_threshold = false;
  long checkpoint_every = 0;  // env steps
  // TPO: preference pairs per optimizer step.
  int tpo_pairs_per_step = 8;
};

// Training task episodes use reset seeds derived from (opt.seed, i).
TrainResult run_ppo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                    const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log,
                    const CheckpointFn& checkpoint = {});
TrainResult run_grpo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                     const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log,
                     const CheckpointFn& checkpoint = {});
// The reference policy is the parameters at entry.
TrainResult run_tpo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                    const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log,
                    const CheckpointFn& checkpoint = {});

}  // namespace gridvla::algos
