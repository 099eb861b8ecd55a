#include "gridvla/env/task.hpp"

#include <array>

#include "gridvla/common/error.hpp"

namespace gridvla::env {
namespace {

struct VariantInfo {
  Variant variant;
  const char* name;
  const char* label;
  Axis axis;
};

constexpr std::array<VariantInfo, 16> kVariants = {{
    {Variant::Training, "Training", "IND", Axis::InDistribution},
    {Variant::UnseenTable, "UnseenTable", "Table", Axis::Vision},
    {Variant::DynamicTextureWeak, "DynamicTextureWeak", "Texture-w", Axis::Vision},
    {Variant::DynamicTextureStrong, "DynamicTextureStrong", "Texture-s", Axis::Vision},
    {Variant::DynamicNoiseWeak, "DynamicNoiseWeak", "Noise-w", Axis::Vision},
    {Variant::DynamicNoiseStrong, "DynamicNoiseStrong", "Noise-s", Axis::Vision},
    {Variant::UnseenObjects, "UnseenObjects", "Obj.", Axis::Semantics},
    {Variant::UnseenReceptacles, "UnseenReceptacles", "Recep.", Axis::Semantics},
    {Variant::UnseenInstruction, "UnseenInstruction", "Instruct", Axis::Semantics},
    {Variant::MultiObjectSeen, "MultiObjectSeen", "M-Obj. (IND)", Axis::Semantics},
    {Variant::MultiObjectUnseen, "MultiObjectUnseen", "M-Obj. (OOD)", Axis::Semantics},
    {Variant::DistractiveReceptacle, "DistractiveReceptacle", "Disturb Recep.", Axis::Semantics},
    {Variant::MultiReceptacleUnseen, "MultiReceptacleUnseen", "M-Recep.", Axis::Semantics},
    {Variant::UnseenPosition, "UnseenPosition", "Obj. Pos.", Axis::Execution},
    {Variant::UnseenRobotInitPose, "UnseenRobotInitPose", "Robot Pose", Axis::Execution},
    {Variant::MidEpisodeReposition, "MidEpisodeReposition", "Obj. Rep.", Axis::Execution},
}};

const VariantInfo& info(Variant v) {
  for (const auto& i : kVariants) {
    if (i.variant == v) return i;
  }
  throw ContractError("unknown variant");
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "heldout"; }

}  // namespace

TaskSpec make_task(Variant variant, std::uint64_t seed) {
  TaskSpec t;
  t.variant = variant;
  t.seed = seed;
  switch (variant) {
    case Variant::Training:
      break;
    case Variant::UnseenTable:
      t.table_split = Split::Heldout;
      break;
    case Variant::DynamicTextureWeak:
      t.overlay = PerturbationSpec{OverlayKind::ForegroundTexture, 0.3, 1};
      break;
    case Variant::DynamicTextureStrong:
      t.overlay = PerturbationSpec{OverlayKind::ForegroundTexture, 0.5, 1};
      break;
    case Variant::DynamicNoiseWeak:
      t.overlay = PerturbationSpec{OverlayKind::WholeImageNoise, 0.3, 2};
      break;
    case Variant::DynamicNoiseStrong:
      t.overlay = PerturbationSpec{OverlayKind::WholeImageNoise, 0.5, 2};
      break;
    case Variant::UnseenObjects:
      t.object_split = Split::Heldout;
      break;
    case Variant::UnseenReceptacles:
      t.receptacle_split = Split::Heldout;
      break;
    case Variant::UnseenInstruction:
      t.instruction_template_set = TemplateSet::Heldout16;
      break;
    case Variant::MultiObjectSeen:
      t.n_objects = 2;
      break;
    case Variant::MultiObjectUnseen:
      t.n_objects = 2;
      t.object_split = Split::Heldout;
      break;
    case Variant::DistractiveReceptacle:
      t.n_receptacles = 2;
      t.distractor_receptacle_split = Split::Heldout;
      break;
    case Variant::MultiReceptacleUnseen:
      t.n_receptacles = 2;
      t.receptacle_split = Split::Heldout;
      t.distractor_receptacle_split = Split::Heldout;
      break;
    case Variant::UnseenPosition:
      t.spawn_region = SpawnRegion::Frame;
      break;
    case Variant::UnseenRobotInitPose:
      t.robot_init = RobotInit::Random;
      break;
    case Variant::MidEpisodeReposition:
      t.reposition_step = 5;
      break;
  }
  return t;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> vs = [] {
    std::vector<Variant> out;
    for (const auto& i : kVariants) out.push_back(i.variant);
    return out;
  }();
  return vs;
}

std::vector<TaskSpec> make_suite() {
  std::vector<TaskSpec> suite;
  std::uint64_t seed = 0;
  for (Variant v : all_variants()) suite.push_back(make_task(v, seed++));
  return suite;
}

std::string variant_name(Variant v) { return info(v).name; }
std::string variant_label(Variant v) { return info(v).label; }
Axis axis_of(Variant v) { return info(v).axis; }

Variant parse_variant(std::string_view name) {
  for (const auto& i : kVariants) {
    if (name == i.name) return i.variant;
  }
  throw ConfigError("unknown task variant '" + std::string(name) + "'");
}

std::string axis_name(Axis a) {
  switch (a) {
    case Axis::InDistribution: return "IND";
    case Axis::Vision: return "Vision";
    case Axis::Semantics: return "Semantics";
    case Axis::Execution: return "Execution";
  }
  return "?";
}

nlohmann::json to_json(const TaskSpec& t) {
  nlohmann::json j;
  j["variant"] = variant_name(t.variant);
  j["object_split"] = split_name(t.object_split);
  j["receptacle_split"] = split_name(t.receptacle_split);
  j["distractor_receptacle_split"] =
      t.distractor_receptacle_split ? nlohmann::json(split_name(*t.distractor_receptacle_split)) : nlohmann::json();
  j["table_split"] = split_name(t.table_split);
  j["spawn_region"] = t.spawn_region == SpawnRegion::Rectangle ? "rectangle" : "frame";
  j["n_objects"] = t.n_objects;
  j["n_receptacles"] = t.n_receptacles;
  if (t.overlay) {
    j["overlay"] = {{"kind", t.overlay->kind == OverlayKind::ForegroundTexture ? "foreground_texture"
                                                                               : "whole_image_noise"},
                    {"alpha", t.overlay->alpha},
                    {"offset_stream", t.overlay->offset_stream}};
  } else {
    j["overlay"] = nullptr;
  }
  j["instruction_template_set"] = t.instruction_template_set == TemplateSet::Default ? "default" : "heldout16";
  j["robot_init"] = t.robot_init == RobotInit::Fixed ? "fixed" : "random";
  j["reposition_step"] = t.reposition_step ? nlohmann::json(*t.reposition_step) : nlohmann::json();
  j["seed"] = t.seed;
  return j;
}

}  // namespace gridvla::env
