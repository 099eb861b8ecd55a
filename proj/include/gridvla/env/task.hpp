#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace gridvla::env {

enum class Variant {
  Training,
  UnseenTable,
  DynamicTextureWeak,
  DynamicTextureStrong,
  DynamicNoiseWeak,
  DynamicNoiseStrong,
  UnseenObjects,
  UnseenReceptacles,
  UnseenInstruction,
  MultiObjectSeen,
  MultiObjectUnseen,
  DistractiveReceptacle,
  MultiReceptacleUnseen,
  UnseenPosition,
  UnseenRobotInitPose,
  MidEpisodeReposition,
};

enum class Axis { InDistribution, Vision, Semantics, Execution };

enum class Split { Train, Heldout };
enum class SpawnRegion { Rectangle, Frame };
enum class TemplateSet { Default, Heldout16 };
enum class RobotInit { Fixed, Random };
enum class OverlayKind { ForegroundTexture, WholeImageNoise };

struct PerturbationSpec {
  OverlayKind kind = OverlayKind::ForegroundTexture;
  double alpha = 0.3;
  // Stream id mixed into the per-step PRNG that shifts the texture.
  std::uint64_t offset_stream = 0;
};

struct TaskSpec {
  Variant variant = Variant::Training;
  Split object_split = Split::Train;
  Split receptacle_split = Split::Train;
  // Split for receptacles beyond the target; unset when n_receptacles == 1.
  std::optional<Split> distractor_receptacle_split;
  Split table_split = Split::Train;
  SpawnRegion spawn_region = SpawnRegion::Rectangle;
  int n_objects = 1;
  int n_receptacles = 1;
  std::optional<PerturbationSpec> overlay;
  TemplateSet instruction_template_set = TemplateSet::Default;
  RobotInit robot_init = RobotInit::Fixed;
  std::optional<int> reposition_step;
  std::uint64_t seed = 0;
};

// Configuration of a variant; all fields except seed are fixed by it.
TaskSpec make_task(Variant variant, std::uint64_t seed = 0);

// Training plus the fifteen evaluation settings, in report order.
std::vector<TaskSpec> make_suite();

const std::vector<Variant>& all_variants();
std::string variant_name(Variant v);         // e.g. "UnseenObjects"
std::string variant_label(Variant v);        // short report label, e.g. "Obj."
Variant parse_variant(std::string_view name);  // throws ConfigError
Axis axis_of(Variant v);
std::string axis_name(Axis a);

nlohmann::json to_json(const TaskSpec& t);

}  // namespace gridvla::env
