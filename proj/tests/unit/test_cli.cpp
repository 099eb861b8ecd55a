#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gridvla/bench/report.hpp"
#include "gridvla/cli/commands.hpp"
#include "gridvla/common/error.hpp"

using namespace gridvla;
using namespace gridvla::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gridvla_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.data.demo_count = 6;
  c.sft.steps = 30;
  c.sft.batch_size = 16;
  c.sft.eval_every = 0;
  c.sft.eval_episodes = 4;
  c.rl.eval_every = 400;
  c.rl.eval_episodes = 4;
  c.algo.rollout_transitions = 200;
  c.algo.n_envs = 4;
  c.run.max_env_steps = 600;
  c.eval.episodes = 3;
  c.eval.seeds = {0, 1};
  c.eval.suite = {"Training", "UnseenObjects"};
  return c;
}

int run_main(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return main_entry(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("git blob ids") {
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config round trip, overrides and schema errors") {
  const ExperimentConfig d;
  const nlohmann::json j = to_json(d);
  CHECK(to_json(experiment_config_from_json(j)) == j);
  CHECK(to_json(experiment_config_from_json(nlohmann::json::object())) == j);

  nlohmann::json doc = nlohmann::json::object();
  apply_override(doc, "algo.ppo_epochs=4");
  apply_override(doc, "rl.init_checkpoint=runs/sft/checkpoints/final.ckpt");
  apply_override(doc, "eval.seeds=[3,4]");
  apply_override(doc, "run.min_success=0.5");
  const ExperimentConfig c = experiment_config_from_json(doc);
  CHECK(c.algo.ppo_epochs == 4);
  CHECK(c.rl.init_checkpoint == "runs/sft/checkpoints/final.ckpt");
  CHECK(c.eval.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(*c.run.min_success == 0.5);

  auto bad = [](const std::string& assignment) {
    nlohmann::json x = nlohmann::json::object();
    apply_override(x, assignment);
    return experiment_config_from_json(x);
  };
  CHECK_THROWS_AS(bad("sft.stepz=3"), ConfigError);
  CHECK_THROWS_AS(bad("nosuch.key=3"), ConfigError);
  CHECK_THROWS_AS(bad("sft.steps=1.5"), ConfigError);
  CHECK_THROWS_AS(bad("eval.suite=[\"Nowhere\"]"), ConfigError);
  CHECK_THROWS_AS(bad("algo.clip_eps=-1"), ConfigError);
  CHECK_THROWS_AS(bad("run.seed=-2"), ConfigError);
  nlohmann::json x = nlohmann::json::object();
  CHECK_THROWS_AS(apply_override(x, "novalue"), ConfigError);
}

TEST_CASE("eval of a fresh random policy writes a report") {
  const fs::path out = scratch("eval");
  ExperimentConfig c = small_config();
  const CommandResult r = run_command("eval", c, out);
  for (const char* f : {"config.json", "manifest.json", "metrics.jsonl", "summary.json", "report.csv", "report.json",
                        "report.md", "success.svg"}) {
    CHECK(fs::is_regular_file(out / f));
  }
  CHECK(r.summary.at("mean_success").get<double>() <= 0.2);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("command") == "eval");
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("inputs")[0].at("sha1") == git_blob_sha1(slurp(out / "config.json")));
  fs::remove_all(out);
}

TEST_CASE("sft then ppo: artifacts, determinism and checkpoint round trip") {
  const fs::path root = scratch("pipeline");
  ExperimentConfig c = small_config();
  const CommandResult sft = run_command("sft", c, root / "sft");
  const std::string ckpt = sft.summary.at("checkpoint");
  CHECK(fs::is_regular_file(ckpt));

  c.rl.init_checkpoint = ckpt;
  run_command("ppo", c, root / "ppo_a");
  run_command("ppo", c, root / "ppo_b");
  const std::string log_a = slurp(root / "ppo_a" / "metrics.jsonl");
  CHECK(!log_a.empty());
  CHECK(log_a == slurp(root / "ppo_b" / "metrics.jsonl"));
  CHECK(slurp(root / "ppo_a" / "checkpoints" / "final.ckpt") == slurp(root / "ppo_b" / "checkpoints" / "final.ckpt"));
  const auto manifest = nlohmann::json::parse(slurp(root / "ppo_a" / "manifest.json"));
  CHECK(manifest.at("inputs").size() == 2);
  CHECK(manifest.at("inputs")[1].at("sha1") == git_blob_sha1(slurp(ckpt)));

  // Evaluating the in-memory policy and its reloaded checkpoint agree.
  const auto loaded = policy::load_policy(ckpt);
  bench::EvalOptions o;
  o.episodes_per_task = 3;
  o.seeds = {0, 1};
  const auto suite = std::vector<env::Variant>{env::Variant::Training, env::Variant::UnseenObjects};
  const auto direct = bench::evaluate(policy::Snapshot(loaded.params, loaded.config), suite, o);
  c.eval.checkpoint = ckpt;
  run_command("eval", c, root / "eval");
  const auto report = nlohmann::json::parse(slurp(root / "eval" / "report.json"));
  CHECK(report == bench::to_json(direct));

  for (const char* cmd : {"grpo", "tpo"}) {
    ExperimentConfig g = c;
    g.algo.group_size = 2;
    g.algo.n_groups = 4;
    const CommandResult r = run_command(cmd, g, root / cmd);
    CHECK(r.summary.at("env_steps").get<long>() >= 600);
  }
  fs::remove_all(root);
}

TEST_CASE("exit codes") {
  const fs::path out = scratch("exit");
  CHECK(run_main({"gridvla"}) == kUsage);
  CHECK(run_main({"gridvla", "bogus"}) == kUsage);
  CHECK(run_main({"gridvla", "eval", "--set", "sft.nope=1", "-o", out.string()}) == kUsage);
  CHECK(run_main({"gridvla", "ppo", "-o", out.string()}) == kUsage);
  CHECK(run_main({"gridvla", "ppo", "--set", "rl.init_checkpoint=/nonexistent.ckpt", "-o", out.string()}) ==
        kRuntime);
  const std::vector<std::string> small{"--set", "eval.episodes=2", "--set", "eval.seeds=[0]",
                                       "--set", "eval.suite=[\"Training\"]", "-o", out.string()};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), small.begin(), small.end());
    return head;
  };
  CHECK(run_main(with({"gridvla", "eval"})) == kOk);
  CHECK(run_main(with({"gridvla", "eval", "--set", "run.min_success=0.5"})) == kThreshold);
  fs::remove_all(out);
}

TEST_CASE("default out_dir comes from the environment") {
  const fs::path base = scratch("envdir");
  setenv("GRIDVLA_OUT_DIR", base.c_str(), 1);
  CHECK(run_main({"gridvla", "eval", "--set", "eval.episodes=1", "--set", "eval.seeds=[0]", "--set",
                  "eval.suite=[\"Training\"]"}) == kOk);
  unsetenv("GRIDVLA_OUT_DIR");
  CHECK(fs::is_regular_file(base / "eval" / "report.csv"));
  fs::remove_all(base);
}

TEST_CASE("sweep and ablation layouts") {
  const fs::path root = scratch("sweep");
  ExperimentConfig c = small_config();
  c.sft.steps = 5;
  c.sweep.demo_counts = {2, 4};
  const CommandResult s = run_command("sweep-sft-scale", c, root / "sweep");
  CHECK(s.summary.at("rows").size() == 2);
  for (const char* n : {"n_2", "n_4"}) {
    CHECK(fs::is_regular_file(root / "sweep" / n / "checkpoints" / "final.ckpt"));
    CHECK(fs::is_regular_file(root / "sweep" / n / "eval" / "report.csv"));
  }
  const std::string csv = slurp(root / "sweep" / "scaling.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  c.ablation.seeds = {0};
  c.run.max_env_steps = 200;
  c.rl.eval_every = 0;
  const CommandResult w = run_command("ablate-warmup", c, root / "warmup");
  CHECK(w.summary.at("arms").contains("warm"));
  CHECK(w.summary.at("arms").contains("scratch"));
  c.ablation.value_heads = {"first_token_h0", "separate_backbone"};
  const CommandResult v = run_command("ablate-value-head", c, root / "heads");
  CHECK(v.summary.at("rows").size() == 2);
  CHECK(fs::is_regular_file(root / "heads" / "ablation.csv"));
  fs::remove_all(root);
}
