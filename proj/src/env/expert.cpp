#include "gridvla/env/expert.hpp"

#include "gridvla/common/error.hpp"

namespace gridvla::env {
namespace {

constexpr double kClose = 1.0;
constexpr double kOpen = -1.0;

Action toward(Cell from, Cell to, double grip) {
  if (from.x != to.x) return {from.x < to.x ? 1.0 : -1.0, 0.0, grip};
  if (from.y != to.y) return {0.0, from.y < to.y ? 1.0 : -1.0, grip};
  return {0.0, 0.0, grip};
}

}  // namespace

Action scripted_expert(const WorldState& s) {
  if (s.done) throw ContractError("scripted_expert called on a finished episode");
  const Cell target = s.objects[0].cell;
  const Cell goal = s.receptacles[0].cell;

  if (s.held_object && *s.held_object != 0) return {0.0, 0.0, kOpen};
  if (!s.held_object) {
    if (s.gripper_closed) return {0.0, 0.0, kOpen};
    if (s.gripper == target) return {0.0, 0.0, kClose};
    return toward(s.gripper, target, kOpen);
  }

  // Settle for one step right after the grasp.
  if (s.hold_streak == 1) return {0.0, 0.0, kClose};

  const int d = manhattan(s.gripper, goal);
  if (s.hold_streak + d + 1 >= kHoldStepsRequired) {
    if (d == 0) return {0.0, 0.0, kOpen};
    return toward(s.gripper, goal, kClose);
  }
  static constexpr Cell kDetours[] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  for (Cell step : kDetours) {
    const Cell next{s.gripper.x + step.x, s.gripper.y + step.y};
    if (next.x < 0 || next.y < 0 || next.x >= s.config.grid_w || next.y >= s.config.grid_h) continue;
    if (manhattan(next, goal) > d) return {static_cast<double>(step.x), static_cast<double>(step.y), kClose};
  }
  return {0.0, 0.0, kClose};
}

}  // namespace gridvla::env
