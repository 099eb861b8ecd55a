#include "gridvla/env/gridpick.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gridvla/common/error.hpp"

namespace gridvla::env {
namespace {

constexpr std::uint64_t kResetStream = 0x1001;
constexpr std::uint64_t kRenderStream = 0x2002;
constexpr std::uint64_t kRepositionStream = 0x3003;

template <typename T>
std::vector<T> sample_distinct(const std::vector<T>& pool, int n, Rng& rng, std::vector<int>* excluded_ids = nullptr) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (excluded_ids && std::find(excluded_ids->begin(), excluded_ids->end(), pool[i].asset_id) != excluded_ids->end()) {
      continue;
    }
    idx.push_back(i);
  }
  if (static_cast<int>(idx.size()) < n) throw ConfigError("asset pool too small for the requested entity count");
  std::vector<T> out;
  for (int k = 0; k < n; ++k) {
    const std::size_t j = k + rng.below(idx.size() - k);
    std::swap(idx[k], idx[j]);
    out.push_back(pool[idx[k]]);
  }
  return out;
}

bool in_grid(const EnvConfig& c, Cell p) { return p.x >= 0 && p.y >= 0 && p.x < c.grid_w && p.y < c.grid_h; }

bool occupied_by_entity(const WorldState& s, Cell p) {
  for (const auto& o : s.objects) {
    if (o.cell == p) return true;
  }
  for (const auto& r : s.receptacles) {
    if (r.cell == p) return true;
  }
  return false;
}

void reposition_target(WorldState& s) {
  Rng rng(derive_seed(s.task.seed, s.episode_seed, kRepositionStream));
  if (s.held_object == 0) {
    s.held_object.reset();
    s.hold_streak = 0;
    s.carry_steps = 0;
  }
  std::vector<Cell> free;
  for (Cell c : spawn_cells(s.config, s.task.spawn_region)) {
    if (!occupied_by_entity(s, c) && !(c == s.gripper)) free.push_back(c);
  }
  if (free.empty()) return;
  s.objects[0].cell = free[rng.below(free.size())];
}

}  // namespace

nlohmann::json to_json(const EnvConfig& c) {
  return {{"grid_w", c.grid_w},     {"grid_h", c.grid_h},   {"horizon", c.horizon},
          {"spawn_x0", c.spawn_x0}, {"spawn_y0", c.spawn_y0}, {"spawn_w", c.spawn_w},
          {"spawn_h", c.spawn_h},   {"move_scale", c.move_scale}};
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  if (!j.is_object()) throw ConfigError("env config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer()) throw ConfigError("env." + key + " must be an integer");
    const int v = value.get<int>();
    if (key == "grid_w") c.grid_w = v;
    else if (key == "grid_h") c.grid_h = v;
    else if (key == "horizon") c.horizon = v;
    else if (key == "spawn_x0") c.spawn_x0 = v;
    else if (key == "spawn_y0") c.spawn_y0 = v;
    else if (key == "spawn_w") c.spawn_w = v;
    else if (key == "spawn_h") c.spawn_h = v;
    else if (key == "move_scale") c.move_scale = v;
    else throw ConfigError("unknown env key '" + key + "'");
  }
  if (c.grid_w < 2 || c.grid_h < 2) throw ConfigError("grid must be at least 2x2");
  if (c.horizon < 1) throw ConfigError("env.horizon must be positive");
  if (c.spawn_x0 < 0 || c.spawn_y0 < 0 || c.spawn_w < 1 || c.spawn_h < 1 || c.spawn_x0 + c.spawn_w > c.grid_w ||
      c.spawn_y0 + c.spawn_h > c.grid_h) {
    throw ConfigError("spawn rectangle must lie inside the grid");
  }
  if (c.move_scale < 1) throw ConfigError("env.move_scale must be positive");
  return c;
}

int Observation::instruction_length() const {
  return static_cast<int>(std::count_if(instruction.begin(), instruction.end(), [](int t) { return t != kPadToken; }));
}

std::vector<Cell> spawn_cells(const EnvConfig& c, SpawnRegion region) {
  std::vector<Cell> out;
  if (region == SpawnRegion::Rectangle) {
    for (int y = c.spawn_y0; y < c.spawn_y0 + c.spawn_h; ++y) {
      for (int x = c.spawn_x0; x < c.spawn_x0 + c.spawn_w; ++x) out.push_back({x, y});
    }
  } else {
    for (int y = c.spawn_y0 - 1; y <= c.spawn_y0 + c.spawn_h; ++y) {
      for (int x = c.spawn_x0 - 1; x <= c.spawn_x0 + c.spawn_w; ++x) {
        const bool inner = x >= c.spawn_x0 && x < c.spawn_x0 + c.spawn_w && y >= c.spawn_y0 && y < c.spawn_y0 + c.spawn_h;
        if (!inner && in_grid(c, {x, y})) out.push_back({x, y});
      }
    }
  }
  return out;
}

Cell start_cell(const EnvConfig& c) { return {c.grid_w / 2, 0}; }

std::vector<int> render_instruction(const std::string& tpl, const std::vector<int>& object_name,
                                    const std::vector<int>& receptacle_name) {
  const auto& vocab = catalog().vocab;
  std::vector<int> out;
  for (const auto& w : tokenize_words(tpl)) {
    if (w == "$O") {
      out.insert(out.end(), object_name.begin(), object_name.end());
    } else if (w == "$R") {
      out.insert(out.end(), receptacle_name.begin(), receptacle_name.end());
    } else {
      out.push_back(vocab.id(w));
    }
  }
  return out;
}

std::pair<WorldState, Observation> reset(const TaskSpec& task, std::uint64_t episode_seed, const EnvConfig& config) {
  const auto& cat = catalog();
  if (task.n_objects < 1 || task.n_receptacles < 1) throw ConfigError("a task needs at least one object and receptacle");
  if (task.n_receptacles > 1 && !task.distractor_receptacle_split) {
    throw ConfigError("extra receptacles require a distractor split");
  }
  Rng rng(derive_seed(task.seed, episode_seed, kResetStream));
  WorldState s;
  s.config = config;
  s.task = task;
  s.episode_seed = episode_seed;

  const auto& tables = task.table_split == Split::Train ? cat.train_tables : cat.heldout_tables;
  s.table = tables[rng.below(tables.size())];
  if (task.overlay) s.texture_id = rng.below_int(static_cast<int>(cat.textures.size()));

  const auto& object_pool = task.object_split == Split::Train ? cat.train_objects : cat.heldout_objects;
  auto objects = sample_distinct(object_pool, task.n_objects, rng);
  const auto& target_pool = task.receptacle_split == Split::Train ? cat.train_receptacles : cat.heldout_receptacles;
  auto receptacles = sample_distinct(target_pool, 1, rng);
  if (task.n_receptacles > 1) {
    const auto& pool =
        *task.distractor_receptacle_split == Split::Train ? cat.train_receptacles : cat.heldout_receptacles;
    std::vector<int> used = {receptacles[0].asset_id};
    auto extra = sample_distinct(pool, task.n_receptacles - 1, rng, &used);
    receptacles.insert(receptacles.end(), extra.begin(), extra.end());
  }

  auto cells = spawn_cells(config, task.spawn_region);
  const int needed = task.n_objects + task.n_receptacles;
  if (static_cast<int>(cells.size()) < needed) {
    throw ConfigError("spawn region has " + std::to_string(cells.size()) + " cells but " + std::to_string(needed) +
                      " entities must be placed");
  }
  for (int k = 0; k < needed; ++k) {
    const std::size_t j = k + rng.below(cells.size() - k);
    std::swap(cells[k], cells[j]);
  }
  int next = 0;
  for (auto& o : objects) s.objects.push_back({o, cells[next++]});
  for (auto& r : receptacles) s.receptacles.push_back({r, cells[next++]});

  if (task.robot_init == RobotInit::Fixed) {
    s.gripper = start_cell(config);
  } else {
    std::vector<Cell> free;
    for (int y = 0; y < config.grid_h; ++y) {
      for (int x = 0; x < config.grid_w; ++x) {
        if (!occupied_by_entity(s, {x, y})) free.push_back({x, y});
      }
    }
    s.gripper = free[rng.below(free.size())];
  }

  const std::string& tpl = task.instruction_template_set == TemplateSet::Default
                               ? cat.default_template
                               : cat.heldout_templates[rng.below(cat.heldout_templates.size())];
  s.instruction = render_instruction(tpl, s.objects[0].asset.name_tokens, s.receptacles[0].asset.name_tokens);
  if (static_cast<int>(s.instruction.size()) > kMaxInstructionTokens) {
    throw ConfigError("instruction exceeds " + std::to_string(kMaxInstructionTokens) + " tokens");
  }
  Observation obs = observe(s);
  return {std::move(s), std::move(obs)};
}

StepResult step(WorldState& s, const Action& a) {
  if (s.done) throw ContractError("step() called on a finished episode");
  for (double v : {a.dx, a.dy, a.gripper}) {
    if (!std::isfinite(v)) throw ContractError("action components must be finite");
    if (v < -1.0 || v > 1.0) throw ContractError("action components must lie in [-1, 1]");
  }
  const EnvConfig& c = s.config;
  StepResult r;

  const int mx = static_cast<int>(std::lround(a.dx * c.move_scale));
  const int my = static_cast<int>(std::lround(a.dy * c.move_scale));
  s.gripper.x = std::clamp(s.gripper.x + mx, 0, c.grid_w - 1);
  s.gripper.y = std::clamp(s.gripper.y + my, 0, c.grid_h - 1);
  if (s.held_object) s.objects[*s.held_object].cell = s.gripper;

  const bool close = a.gripper > 0.0;
  if (close && !s.gripper_closed) {
    s.gripper_closed = true;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      if (s.objects[i].cell == s.gripper) {
        s.held_object = static_cast<int>(i);
        s.carry_steps = 0;
        s.hold_streak = 0;
        if (i == 0 && !s.stage_flags.grasped_once) {
          s.stage_flags.grasped_once = true;
          r.reward += 0.1;
        }
        break;
      }
    }
  }

  // The current step counts as a holding step whenever an object is held at
  // this point, including the step that releases it.
  if (s.held_object) {
    s.carry_steps += 1;
    s.hold_streak = *s.held_object == 0 ? s.hold_streak + 1 : 0;
  } else {
    s.carry_steps = 0;
    s.hold_streak = 0;
  }
  if (s.hold_streak >= kHoldStepsRequired && !s.stage_flags.held_5) {
    s.stage_flags.held_5 = true;
    r.reward += 0.1;
  }

  if (!close && s.gripper_closed) {
    s.gripper_closed = false;
    if (s.held_object) {
      const bool on_target = s.receptacles[0].cell == s.gripper;
      if (*s.held_object == 0 && on_target && s.hold_streak >= kHoldStepsRequired) {
        s.stage_flags.placed = true;
        s.success = true;
        s.done = true;
        r.reward += 1.0;
      }
      s.held_object.reset();
      s.hold_streak = 0;
      s.carry_steps = 0;
    }
  }

  s.step_count += 1;
  if (!s.done && s.task.reposition_step && s.step_count == *s.task.reposition_step) reposition_target(s);
  if (!s.done && s.step_count >= c.horizon) {
    s.done = true;
    r.truncated = true;
  }

  r.observation = observe(s);
  r.done = s.done;
  r.success = s.success;
  r.info = s.stage_flags;
  return r;
}

Observation render_observation(const WorldState& s, const std::optional<PerturbationSpec>& overlay, Rng& step_rng) {
  const EnvConfig& c = s.config;
  Observation o;
  o.height = c.grid_h;
  o.width = c.grid_w;
  o.image.assign(static_cast<std::size_t>(c.grid_h) * c.grid_w * kChannels, 0.0);
  std::vector<std::uint8_t> foreground(static_cast<std::size_t>(c.grid_h) * c.grid_w, 0);
  auto px = [&](Cell p, int ch) -> double& {
    return o.image[(static_cast<std::size_t>(p.y) * c.grid_w + p.x) * kChannels + ch];
  };
  auto mark = [&](Cell p) { foreground[static_cast<std::size_t>(p.y) * c.grid_w + p.x] = 1; };

  for (int y = 0; y < c.grid_h; ++y) {
    for (int x = 0; x < c.grid_w; ++x) {
      px({x, y}, kBackground0) = s.table.at(0, x, y);
      px({x, y}, kBackground1) = s.table.at(1, x, y);
    }
  }
  for (const auto& r : s.receptacles) {
    px(r.cell, kReceptacle) = r.asset.feature;
    mark(r.cell);
  }
  for (const auto& ob : s.objects) {
    px(ob.cell, kObject0) = ob.asset.feature[0];
    px(ob.cell, kObject1) = ob.asset.feature[1];
    mark(ob.cell);
  }
  // Gripper intensity encodes open/closed and how long the load has been carried.
  px(s.gripper, kGripper) =
      s.gripper_closed ? 0.4 + 0.1 * std::min(s.carry_steps, kHoldStepsRequired) : 1.0;
  mark(s.gripper);

  if (overlay) {
    const double alpha = overlay->alpha;
    const Texture& tex = catalog().textures[static_cast<std::size_t>(s.texture_id)];
    // Fresh crop offset and resize factor for every step.
    const double ox = step_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double oy = step_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double zoom = step_rng.uniform(0.7, 1.3);
    for (int y = 0; y < c.grid_h; ++y) {
      for (int x = 0; x < c.grid_w; ++x) {
        if (overlay->kind == OverlayKind::ForegroundTexture &&
            !foreground[static_cast<std::size_t>(y) * c.grid_w + x]) {
          continue;
        }
        for (int ch = 0; ch < kChannels; ++ch) {
          const double t = tex.at(ch, zoom * x + ox, zoom * y + oy);
          double& v = px({x, y}, ch);
          v = blend_pixel(v, t, alpha);
        }
      }
    }
  }

  o.instruction.assign(kMaxInstructionTokens, kPadToken);
  std::copy(s.instruction.begin(), s.instruction.end(), o.instruction.begin());
  return o;
}

Observation observe(const WorldState& s) {
  const std::uint64_t stream = s.task.overlay ? s.task.overlay->offset_stream : 0;
  Rng step_rng(derive_seed(derive_seed(s.task.seed, s.episode_seed, kRenderStream), stream,
                           static_cast<std::uint64_t>(s.step_count)));
  return render_observation(s, s.task.overlay, step_rng);
}

}  // namespace gridvla::env
