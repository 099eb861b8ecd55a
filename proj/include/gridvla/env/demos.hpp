#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gridvla/env/gridpick.hpp"
#include "gridvla/policy/codec.hpp"

namespace gridvla::env {

struct DemoStep {
  Observation observation;
  Action action;
  std::vector<int> tokens;
};

struct DemoEpisode {
  TaskSpec task;
  std::uint64_t episode_seed = 0;
  std::vector<DemoStep> steps;  // kept transitions only
  std::size_t dropped = 0;
};

struct FilterStats {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t discarded_episodes = 0;
};

struct DemoDataset {
  std::vector<DemoEpisode> episodes;
  FilterStats filter_stats;
  policy::ActionCodec codec;
  EnvConfig env_config;

  std::size_t transitions() const;
  // The first n episodes; filter counts cover only those episodes.
  DemoDataset prefix(std::size_t n) const;
};

// Episode seed i of a collection run.
std::uint64_t demo_episode_seed(std::uint64_t seed, std::size_t i);

// True when the transition neither moves the gripper by at least threshold
// nor changes the gripper state.
bool is_idle(const Action& a, bool gripper_closed, double threshold);

// Rolls out the scripted expert on n_episodes seeded episodes, dropping idle
// transitions. Episodes the expert fails are discarded and counted.
DemoDataset collect_demos(const TaskSpec& task, int n_episodes, double pos_filter_threshold,
                          const policy::ActionCodec& codec, std::uint64_t seed = 0, const EnvConfig& config = {});

// Writes <dir>/demos.json (manifest) and <dir>/demos.bin (little-endian arrays).
void save_demos(const std::filesystem::path& dir, const DemoDataset& data);
DemoDataset load_demos(const std::filesystem::path& dir);

}  // namespace gridvla::env
