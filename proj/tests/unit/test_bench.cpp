#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gridvla/bench/report.hpp"
#include "gridvla/common/error.hpp"
#include "gridvla/env/expert.hpp"
#include "gridvla/env/gridpick.hpp"

using namespace gridvla;
using namespace gridvla::bench;

namespace {

env::Action random_action(const env::WorldState&, Rng& rng) {
  env::Action a;
  a.dx = static_cast<double>(rng.below(3)) - 1.0;
  a.dy = static_cast<double>(rng.below(3)) - 1.0;
  a.gripper = rng.below(2) ? 1.0 : -1.0;
  return a;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void check_ordering(const EvalReport& r) {
  for (const auto& u : r.units) {
    CHECK(u.success <= u.cont_grasp_acc);
    CHECK(u.cont_grasp_acc <= u.grasp_acc);
  }
}

}  // namespace

TEST_CASE("degradation") {
  CHECK(*degradation(0.8, 0.6) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(*degradation(0.5, 0.29) == doctest::Approx(-0.42).epsilon(1e-12));
  CHECK(*degradation(0.5, 0.5) == 0.0);
  CHECK(*degradation(0.4, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_FALSE(degradation(0.0, 0.3).has_value());
}

TEST_CASE("summaries from units") {
  std::vector<EvalUnit> units;
  auto unit = [](env::Variant v, std::uint64_t seed, double g, double c, double s) {
    EvalUnit u;
    u.variant = v;
    u.seed = seed;
    u.episodes = 10;
    u.grasp_acc = g;
    u.cont_grasp_acc = c;
    u.success = s;
    return u;
  };
  units.push_back(unit(env::Variant::Training, 0, 1.0, 0.9, 0.8));
  units.push_back(unit(env::Variant::Training, 1, 1.0, 0.9, 0.6));
  units.push_back(unit(env::Variant::UnseenObjects, 0, 0.8, 0.5, 0.3));
  units.push_back(unit(env::Variant::UnseenObjects, 1, 0.6, 0.5, 0.4));
  units.push_back(unit(env::Variant::UnseenTable, 0, 0.2, 0.1, 0.0));
  units.push_back(unit(env::Variant::UnseenTable, 1, 0.2, 0.1, 0.0));
  const EvalReport r = summarize(units);
  REQUIRE(r.variants.size() == 3);
  const auto& tr = r.variant(env::Variant::Training);
  CHECK(tr.success.mean == doctest::Approx(0.7));
  CHECK(tr.success.std == doctest::Approx(std::sqrt(0.02)));
  CHECK(tr.seeds == 2);
  CHECK(*tr.success_degradation == 0.0);
  const auto& obj = r.variant(env::Variant::UnseenObjects);
  CHECK(*obj.success_degradation == doctest::Approx(-0.5));
  CHECK(*obj.grasp_degradation == doctest::Approx(-0.3));
  const auto& sem = r.axis(env::Axis::Semantics);
  CHECK(sem.success == doctest::Approx(0.35));
  CHECK(*sem.success_degradation == doctest::Approx(-0.5));
  CHECK(*r.axis(env::Axis::Vision).success_degradation == doctest::Approx(-1.0));
}

TEST_CASE("expert and random baselines") {
  EvalOptions opt;
  opt.episodes_per_task = 32;
  const std::vector<env::Variant> suite{env::Variant::Training};
  const EvalReport ex =
      evaluate_controller([](const env::WorldState& s, Rng&) { return env::scripted_expert(s); }, suite, opt);
  CHECK(ex.variant(env::Variant::Training).success.mean == 1.0);
  const EvalReport rnd = evaluate_controller(random_action, full_suite(), opt);
  check_ordering(rnd);
  for (const auto& v : rnd.variants) CHECK(v.success.mean <= 0.05);
  CHECK(rnd.units.size() == full_suite().size() * 3);
}

TEST_CASE("snapshot report files are deterministic across worker counts") {
  policy::PolicyConfig cfg;
  const auto params = policy::init_params(cfg, 3);
  const policy::Snapshot snap(params, cfg);
  EvalOptions opt;
  opt.episodes_per_task = 4;
  opt.seeds = {0, 1};
  const std::vector<env::Variant> suite{env::Variant::Training, env::Variant::UnseenPosition,
                                        env::Variant::MidEpisodeReposition};
  const auto root = std::filesystem::temp_directory_path() / "gridvla_test_bench";
  std::filesystem::remove_all(root);
  opt.workers = 1;
  const EvalReport a = evaluate(snap, suite, opt);
  write_report(a, root / "a");
  opt.workers = 3;
  const EvalReport b = evaluate(snap, suite, opt);
  write_report(b, root / "b");
  check_ordering(a);
  for (const char* f : {"report.csv", "report.json", "report.md", "success.svg"}) {
    const auto x = slurp(root / "a" / f);
    CHECK(!x.empty());
    CHECK(x == slurp(root / "b" / f));
  }
  const std::string csv = slurp(root / "a" / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2);
  CHECK(csv.rfind("variant,seed,episodes,grasp_acc,cont_grasp_acc,success\n", 0) == 0);
  const std::string md = slurp(root / "a" / "report.md");
  const auto p0 = md.find(env::variant_label(env::Variant::Training));
  const auto p1 = md.find(env::variant_label(env::Variant::UnseenPosition));
  const auto p2 = md.find(env::variant_label(env::Variant::MidEpisodeReposition));
  CHECK(p0 < p1);
  CHECK(p1 < p2);
  std::filesystem::remove_all(root);
}

TEST_CASE("write_text names the failing path") {
  const std::filesystem::path bad = "/nonexistent_dir_gridvla/x.txt";
  try {
    write_text(bad, "x");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(bad.string()) != std::string::npos);
  }
}
