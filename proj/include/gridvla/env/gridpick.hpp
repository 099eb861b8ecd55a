#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "gridvla/common/rng.hpp"
#include "gridvla/env/assets.hpp"
#include "gridvla/env/task.hpp"

namespace gridvla::env {

inline constexpr int kChannels = 6;
inline constexpr int kMaxInstructionTokens = 24;
inline constexpr int kHoldStepsRequired = 5;

// Channel layout of rendered images.
enum Channel : int {
  kBackground0 = 0,
  kBackground1 = 1,
  kObject0 = 2,
  kObject1 = 3,
  kReceptacle = 4,
  kGripper = 5,
};

struct EnvConfig {
  int grid_w = 8;
  int grid_h = 8;
  int horizon = 40;
  // Inner spawn rectangle; the held-out frame is the one-cell ring around it.
  int spawn_x0 = 2;
  int spawn_y0 = 3;
  int spawn_w = 4;
  int spawn_h = 3;
  int move_scale = 1;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

struct Action {
  double dx = 0.0;
  double dy = 0.0;
  double gripper = -1.0;  // > 0 closes
};

struct StageFlags {
  bool grasped_once = false;
  bool held_5 = false;
  bool placed = false;
};

struct ObjectInstance {
  ObjectAsset asset;
  Cell cell;
};

struct ReceptacleInstance {
  ReceptacleAsset asset;
  Cell cell;
};

// Full simulator state. objects[0] and receptacles[0] are the instruction's
// target object and receptacle.
struct WorldState {
  EnvConfig config;
  TaskSpec task;
  std::uint64_t episode_seed = 0;
  Cell gripper;
  bool gripper_closed = false;
  std::optional<int> held_object;
  std::vector<ObjectInstance> objects;
  std::vector<ReceptacleInstance> receptacles;
  TableAppearance table;
  int texture_id = 0;
  std::vector<int> instruction;  // unpadded
  int step_count = 0;
  int hold_streak = 0;   // consecutive steps holding the target object
  int carry_steps = 0;   // consecutive steps holding any object (rendered)
  StageFlags stage_flags;
  bool done = false;
  bool success = false;
};

struct Observation {
  int height = 0;
  int width = 0;
  std::vector<double> image;     // (height, width, kChannels) row-major
  std::vector<int> instruction;  // kMaxInstructionTokens, kPadToken padded

  double pixel(int y, int x, int c) const {
    return image[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  int instruction_length() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  bool truncated = false;  // ended by the horizon rather than by success
  StageFlags info;
};

nlohmann::json to_json(const EnvConfig& c);
// Missing keys keep their defaults; unknown keys raise ConfigError.
EnvConfig env_config_from_json(const nlohmann::json& j);

std::vector<Cell> spawn_cells(const EnvConfig& config, SpawnRegion region);
Cell start_cell(const EnvConfig& config);

// Samples the initial state from a PRNG keyed by (task.seed, episode_seed).
// Throws ConfigError when the spawn region cannot hold every entity.
std::pair<WorldState, Observation> reset(const TaskSpec& task, std::uint64_t episode_seed,
                                         const EnvConfig& config = {});

// Advances the episode by one action. Throws ContractError after done or for
// non-finite or out-of-range action components.
StepResult step(WorldState& state, const Action& action);

inline double blend_pixel(double base, double texture, double alpha) { return (1.0 - alpha) * base + alpha * texture; }

// Renders the base image, blending the overlay when present:
// out = (1 - alpha) * base + alpha * texture at a step-random offset.
Observation render_observation(const WorldState& state, const std::optional<PerturbationSpec>& overlay,
                               Rng& step_rng);
// Renders with the task's overlay and the state's per-step PRNG stream.
Observation observe(const WorldState& state);

// Instruction for a template with $O / $R substituted, as vocabulary ids.
std::vector<int> render_instruction(const std::string& tpl, const std::vector<int>& object_name,
                                    const std::vector<int>& receptacle_name);

}  // namespace gridvla::env
