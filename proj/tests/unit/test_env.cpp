#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "gridvla/common/error.hpp"
#include "gridvla/env/demos.hpp"
#include "gridvla/env/expert.hpp"
#include "gridvla/env/gridpick.hpp"

using namespace gridvla;
using namespace gridvla::env;

namespace {

Action random_action(Rng& rng) {
  auto pick = [&] { return static_cast<double>(rng.below_int(3) - 1); };
  return {pick(), pick(), rng.uniform() < 0.5 ? -1.0 : 1.0};
}

// Expert with occasional random actions, to visit more of the state space.
Action mixed_action(const WorldState& s, Rng& rng, double eps) {
  return rng.uniform() < eps ? random_action(rng) : scripted_expert(s);
}

bool in_set(double v, std::initializer_list<double> allowed) {
  return std::any_of(allowed.begin(), allowed.end(), [&](double a) { return std::abs(v - a) < 1e-12; });
}

}  // namespace

TEST_CASE("suite composition") {
  const auto suite = make_suite();
  CHECK(suite.size() == 16);
  std::set<Variant> seen;
  for (const auto& t : suite) seen.insert(t.variant);
  CHECK(seen.size() == 16);
  CHECK(suite.front().variant == Variant::Training);
  CHECK(make_task(Variant::MidEpisodeReposition).reposition_step == 5);
  CHECK(make_task(Variant::DynamicNoiseStrong).overlay->alpha == 0.5);
  CHECK(make_task(Variant::DynamicNoiseWeak).overlay->alpha == 0.3);
  CHECK(make_task(Variant::DynamicTextureStrong).overlay->kind == OverlayKind::ForegroundTexture);
  CHECK(make_task(Variant::DynamicNoiseStrong).overlay->kind == OverlayKind::WholeImageNoise);
  CHECK(make_task(Variant::MultiObjectSeen).n_objects == 2);
  CHECK(make_task(Variant::MultiReceptacleUnseen).receptacle_split == Split::Heldout);
  CHECK(make_task(Variant::UnseenPosition).spawn_region == SpawnRegion::Frame);
  CHECK(to_json(make_task(Variant::UnseenTable, 3)) == to_json(make_task(Variant::UnseenTable, 3)));
  for (Variant v : all_variants()) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("NoSuchTask"), ConfigError);

  const auto& cat = catalog();
  CHECK(cat.train_objects.size() == 16);
  CHECK(cat.heldout_objects.size() == 9);
  CHECK(cat.heldout_receptacles.size() == 16);
  CHECK(cat.train_tables.size() == 16);
  CHECK(cat.heldout_tables.size() == 5);
  CHECK(cat.textures.size() == 16);
  CHECK(cat.heldout_templates.size() == 16);
}

TEST_CASE("reset examples") {
  const TaskSpec train = make_task(Variant::Training);
  auto [s1, o1] = reset(train, 7);
  auto [s2, o2] = reset(train, 7);
  CHECK(o1 == o2);
  CHECK(s1.gripper == Cell{4, 0});
  CHECK(s1.instruction.size() <= static_cast<std::size_t>(kMaxInstructionTokens));
  CHECK(o1.instruction.size() == static_cast<std::size_t>(kMaxInstructionTokens));

  auto [m, mo] = reset(make_task(Variant::MultiObjectSeen), 3);
  REQUIRE(m.objects.size() == 2);
  CHECK(m.objects[0].asset.asset_id != m.objects[1].asset.asset_id);
  CHECK(!(m.objects[0].cell == m.objects[1].cell));
  const auto& name = m.objects[0].asset.name_tokens;
  CHECK(std::search(m.instruction.begin(), m.instruction.end(), name.begin(), name.end()) != m.instruction.end());

  EnvConfig tiny;
  tiny.spawn_w = 1;
  tiny.spawn_h = 1;
  CHECK_THROWS_AS(reset(train, 0, tiny), ConfigError);
}

TEST_CASE("step reward examples") {
  const TaskSpec train = make_task(Variant::Training);
  auto [s, obs] = reset(train, 11);
  s.objects[0].cell = {2, 3};
  s.receptacles[0].cell = {5, 5};
  s.gripper = {2, 2};

  // No-op in an empty cell.
  StepResult r = step(s, {0, 0, -1});
  CHECK(r.reward == 0.0);
  CHECK(!r.done);

  r = step(s, {0, 1, 1});
  CHECK(r.reward == doctest::Approx(0.1));
  CHECK(r.info.grasped_once);
  CHECK(s.held_object == 0);

  // Hold streak 1 after the grasp; the 5th consecutive holding step pays.
  double rewards[4];
  for (double& x : rewards) x = step(s, {0, 0, 1}).reward;
  CHECK(rewards[0] == 0.0);
  CHECK(rewards[2] == 0.0);
  CHECK(rewards[3] == doctest::Approx(0.1));
  CHECK(s.stage_flags.held_5);

  s.gripper = {5, 5};
  s.objects[0].cell = s.gripper;
  r = step(s, {0, 0, -1});
  CHECK(r.reward == doctest::Approx(1.0));
  CHECK(r.success);
  CHECK(r.done);
  CHECK(!r.truncated);
  CHECK_THROWS_AS(step(s, {0, 0, -1}), ContractError);

  auto [s2, o2] = reset(train, 11);
  CHECK_THROWS_AS(step(s2, {1.5, 0, 0}), ContractError);
  CHECK_THROWS_AS(step(s2, {NAN, 0, 0}), ContractError);
}

TEST_CASE("placement without a sustained hold does not succeed") {
  auto [s, obs] = reset(make_task(Variant::Training), 2);
  s.objects[0].cell = {3, 4};
  s.receptacles[0].cell = {4, 4};
  s.gripper = {3, 4};
  step(s, {0, 0, 1});
  step(s, {1, 0, 1});
  const StepResult r = step(s, {0, 0, -1});
  CHECK(r.reward == 0.0);
  CHECK(!r.success);
  CHECK(s.objects[0].cell == Cell{4, 4});
  CHECK(!s.held_object);
}

TEST_CASE("horizon truncates") {
  auto [s, obs] = reset(make_task(Variant::Training), 5);
  StepResult r;
  int n = 0;
  while (!s.done) {
    r = step(s, {0, 0, -1});
    ++n;
  }
  CHECK(n == 40);
  CHECK(r.truncated);
  CHECK(!r.success);
}

TEST_CASE("render overlay examples and bounds") {
  CHECK(blend_pixel(0.4, 0.8, 0.3) == doctest::Approx(0.52).epsilon(1e-15));

  const TaskSpec base_task = make_task(Variant::Training, 4);
  TaskSpec textured = make_task(Variant::DynamicTextureStrong, 4);
  auto [s, base] = reset(base_task, 9);
  Rng rng(1);
  const Observation plain = render_observation(s, std::nullopt, rng);
  CHECK(plain == base);

  const Observation over = render_observation(s, textured.overlay, rng);
  std::set<std::pair<int, int>> fg;
  for (const auto& o : s.objects) fg.insert({o.cell.x, o.cell.y});
  for (const auto& r : s.receptacles) fg.insert({r.cell.x, r.cell.y});
  fg.insert({s.gripper.x, s.gripper.y});
  int changed_fg = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < kChannels; ++c) {
        if (fg.count({x, y})) {
          changed_fg += over.pixel(y, x, c) != plain.pixel(y, x, c);
        } else {
          CHECK(over.pixel(y, x, c) == plain.pixel(y, x, c));
        }
      }
    }
  }
  CHECK(changed_fg > 0);

  // Overlay textures shift between steps.
  auto [t, t0] = reset(textured, 9);
  const StepResult r1 = step(t, {0, 0, -1});
  CHECK(!(r1.observation == t0));

  for (Variant v : all_variants()) {
    const TaskSpec task = make_task(v, 1);
    for (std::uint64_t ep = 0; ep < 20; ++ep) {
      auto [st, o] = reset(task, ep);
      Rng arng(ep);
      for (;;) {
        for (double p : o.image) REQUIRE((p >= 0.0 && p <= 1.0));
        if (st.done) break;
        o = step(st, mixed_action(st, arng, 0.3)).observation;
      }
    }
  }
}

TEST_CASE("determinism under identical action sequences") {
  for (Variant v : {Variant::Training, Variant::DynamicNoiseStrong, Variant::MidEpisodeReposition,
                    Variant::UnseenRobotInitPose}) {
    const TaskSpec task = make_task(v, 2);
    for (std::uint64_t ep = 0; ep < 10; ++ep) {
      auto [a, oa] = reset(task, ep);
      auto [b, ob] = reset(task, ep);
      Rng ra(ep), rb(ep);
      REQUIRE(oa == ob);
      while (!a.done) {
        const StepResult x = step(a, mixed_action(a, ra, 0.5));
        const StepResult y = step(b, mixed_action(b, rb, 0.5));
        REQUIRE(x.observation == y.observation);
        REQUIRE(x.reward == y.reward);
        REQUIRE(x.done == y.done);
      }
    }
  }
}

TEST_CASE("reward accounting and stage monotonicity") {
  int successes = 0;
  for (Variant v : all_variants()) {
    const TaskSpec task = make_task(v, 0);
    for (std::uint64_t ep = 0; ep < 60; ++ep) {
      auto [s, o] = reset(task, ep);
      Rng rng(derive_seed(ep, 17));
      const double eps = 0.1 * static_cast<double>(ep % 6);
      double total = 0.0;
      StageFlags prev;
      while (!s.done) {
        const StepResult r = step(s, mixed_action(s, rng, eps));
        REQUIRE(in_set(r.reward, {0.0, 0.1, 1.0, 1.1}));
        REQUIRE((!prev.grasped_once || r.info.grasped_once));
        REQUIRE((!prev.held_5 || r.info.held_5));
        REQUIRE((!prev.placed || r.info.placed));
        REQUIRE((!r.info.held_5 || r.info.grasped_once));
        REQUIRE((!r.info.placed || r.info.held_5));
        REQUIRE((!s.held_object || s.gripper_closed));
        prev = r.info;
        total += r.reward;
      }
      REQUIRE(in_set(total, {0.0, 0.1, 0.2, 1.2}));
      if (s.success) {
        CHECK(std::abs(total - 1.2) < 1e-12);
        ++successes;
      }
    }
  }
  CHECK(successes > 0);
}

TEST_CASE("split disjointness") {
  const auto& cat = catalog();
  std::set<int> train_obj, train_rec, train_tab;
  for (const auto& o : cat.train_objects) train_obj.insert(o.asset_id);
  for (const auto& r : cat.train_receptacles) train_rec.insert(r.asset_id);
  for (const auto& t : cat.train_tables) train_tab.insert(t.asset_id);
  for (const auto& o : cat.heldout_objects) CHECK(train_obj.count(o.asset_id) == 0);
  for (const auto& r : cat.heldout_receptacles) CHECK(train_rec.count(r.asset_id) == 0);
  for (const auto& t : cat.heldout_tables) CHECK(train_tab.count(t.asset_id) == 0);
  for (const auto& o : cat.heldout_objects) {
    for (int tok : o.name_tokens) CHECK(tok >= cat.heldout_name_begin);
  }

  const TaskSpec train = make_task(Variant::Training);
  for (std::uint64_t ep = 0; ep < 500; ++ep) {
    auto [s, o] = reset(train, ep);
    for (const auto& ob : s.objects) REQUIRE(train_obj.count(ob.asset.asset_id) == 1);
    for (const auto& r : s.receptacles) REQUIRE(train_rec.count(r.asset.asset_id) == 1);
    REQUIRE(train_tab.count(s.table.asset_id) == 1);
    for (int tok : s.instruction) REQUIRE(tok < cat.heldout_name_begin);
  }
}

TEST_CASE("scripted expert examples") {
  auto [s, o] = reset(make_task(Variant::Training), 0);
  s.gripper = {2, 2};
  s.objects[0].cell = {5, 2};
  s.receptacles[0].cell = {3, 4};
  Action a = scripted_expert(s);
  CHECK(a.dx == 1.0);
  CHECK(a.dy == 0.0);
  CHECK(a.gripper <= 0.0);

  s.gripper = s.objects[0].cell;
  a = scripted_expert(s);
  CHECK(a.dx == 0.0);
  CHECK(a.dy == 0.0);
  CHECK(a.gripper > 0.0);

  s.gripper_closed = true;
  s.held_object = 0;
  s.hold_streak = 6;
  s.gripper = s.receptacles[0].cell;
  s.objects[0].cell = s.gripper;
  a = scripted_expert(s);
  CHECK(a.dx == 0.0);
  CHECK(a.dy == 0.0);
  CHECK(a.gripper <= 0.0);
}

TEST_CASE("expert solves every training episode") {
  const TaskSpec train = make_task(Variant::Training);
  int solved = 0;
  for (std::uint64_t ep = 0; ep < 1000; ++ep) {
    auto [s, o] = reset(train, ep);
    while (!s.done) step(s, scripted_expert(s));
    solved += s.success;
  }
  CHECK(solved == 1000);
}

TEST_CASE("demo filtering") {
  CHECK(is_idle({0, 0, 1}, true, 0.01));
  CHECK(is_idle({0, 0, -1}, false, 0.01));
  CHECK(!is_idle({0, 0, 1}, false, 0.01));
  CHECK(!is_idle({1, 0, 1}, true, 0.01));
  CHECK(!is_idle({0.005, 0.0, 1}, false, 0.01));
  CHECK(is_idle({0.005, 0.0, 1}, true, 0.01));

  const policy::ActionCodec codec;
  const TaskSpec train = make_task(Variant::Training);
  const DemoDataset d = collect_demos(train, 140, 0.01, codec, 3);
  CHECK(d.episodes.size() == 140);
  CHECK(d.filter_stats.discarded_episodes == 0);
  CHECK(d.filter_stats.kept == d.transitions());
  CHECK(d.filter_stats.dropped >= 140);  // one settle step per episode

  // Every success needs the reach, the grasp, the carry and the release.
  std::size_t min_total = 0;
  for (const auto& e : d.episodes) {
    auto [s, o] = reset(e.task, e.episode_seed);
    const std::size_t min_len = manhattan(s.gripper, s.objects[0].cell) + 1 +
                                manhattan(s.objects[0].cell, s.receptacles[0].cell) + 1;
    CHECK(e.steps.size() >= min_len);
    min_total += min_len;
    REQUIRE(e.steps.front().observation == o);
    for (const auto& st : e.steps) {
      REQUIRE(st.tokens == codec.encode(st.action));
      REQUIRE(std::hypot(st.action.dx, st.action.dy) + std::abs(st.action.gripper) > 0.0);
    }
  }
  CHECK(d.transitions() >= min_total);

  const auto dir = std::filesystem::temp_directory_path() / "gridvla_test_demos";
  std::filesystem::remove_all(dir);
  save_demos(dir, d);
  const DemoDataset back = load_demos(dir);
  REQUIRE(back.episodes.size() == d.episodes.size());
  CHECK(back.filter_stats.kept == d.filter_stats.kept);
  CHECK(back.filter_stats.dropped == d.filter_stats.dropped);
  for (std::size_t i = 0; i < d.episodes.size(); ++i) {
    REQUIRE(back.episodes[i].steps.size() == d.episodes[i].steps.size());
    CHECK(back.episodes[i].episode_seed == d.episodes[i].episode_seed);
    for (std::size_t k = 0; k < d.episodes[i].steps.size(); ++k) {
      REQUIRE(back.episodes[i].steps[k].observation == d.episodes[i].steps[k].observation);
      REQUIRE(back.episodes[i].steps[k].tokens == d.episodes[i].steps[k].tokens);
    }
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_demos(dir), IoError);

  const DemoDataset p = d.prefix(35);
  CHECK(p.episodes.size() == 35);
  CHECK(p.filter_stats.kept == p.transitions());
}

TEST_CASE("expert on held-out variants") {
  for (Variant v : all_variants()) {
    const TaskSpec task = make_task(v, 0);
    int solved = 0;
    for (std::uint64_t ep = 0; ep < 100; ++ep) {
      auto [s, o] = reset(task, ep);
      while (!s.done) step(s, scripted_expert(s));
      solved += s.success;
    }
    INFO(variant_name(v));
    CHECK(solved == 100);
  }
}
