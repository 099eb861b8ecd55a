#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "gridvla/algos/config.hpp"
#include "gridvla/env/gridpick.hpp"
#include "gridvla/policy/config.hpp"

namespace gridvla::cli {

struct DataSection {
  std::string variant = "Training";
  int demo_count = 140;
  double filter_threshold = 0.01;
  std::string demos;  // existing dataset directory; empty collects one
};

struct SftSection {
  long steps = 2000;
  int batch_size = 64;
  double learning_rate = 2e-3;
  double grad_clip_norm = 1.0;
  long eval_every = 500;
  int eval_episodes = 64;
  long log_every = 50;
};

struct RlSection {
  // May contain "{seed}", replaced by run.seed.
  std::string init_checkpoint;
  std::string variant = "Training";
  long eval_every = 10000;
  int eval_episodes = 64;
  double success_threshold = 0.9;
  bool stop_at_threshold = false;
  int tpo_pairs_per_step = 8;
};

struct EvalSection {
  std::string checkpoint;           // empty evaluates a freshly initialized policy
  std::vector<std::string> suite;   // empty = all 16 variants
  int episodes = 64;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int n_envs = 16;
};

struct RunSection {
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 0;
  long max_env_steps = 200000;
  long checkpoint_every = 0;
  std::string out_dir;
  int workers = 1;
  bool wall_clock = false;
  std::optional<double> min_success;  // exit 3 when the headline success is lower
};

struct SweepSection {
  std::vector<int> demo_counts{35, 140, 560, 2240};
};

struct AblationSection {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> value_heads{"first_token_h0", "last_token_hn", "concat_all", "separate_backbone"};
  std::vector<int> epochs{1, 2, 4};
  std::vector<double> temperatures{0.5, 1.0, 1.5};
};

struct ExperimentConfig {
  env::EnvConfig env;
  policy::PolicyConfig policy;
  algos::AlgoConfig algo;
  DataSection data;
  SftSection sft;
  RlSection rl;
  EvalSection eval;
  RunSection run;
  SweepSection sweep;
  AblationSection ablation;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys keep defaults. Unknown keys and wrongly typed values raise
// ConfigError naming the dotted path.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value". The value is parsed as JSON when possible and taken
// as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace gridvla::cli
