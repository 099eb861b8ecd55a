#pragma once

#include "gridvla/env/gridpick.hpp"

namespace gridvla::env {

// Greedy scripted controller: reach the target object x-first, grasp, carry
// it to the target receptacle and release once the hold is long enough.
// Detours away from the receptacle when the direct path is too short.
Action scripted_expert(const WorldState& state);

}  // namespace gridvla::env
