#include "gridvla/cli/commands.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "gridvla/algos/train.hpp"
#include "gridvla/bench/report.hpp"
#include "gridvla/common/error.hpp"
#include "gridvla/env/demos.hpp"

namespace gridvla::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Context {
  fs::path out;
  algos::MetricsLog log;
  json inputs = json::array();
};

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void add_input(Context& ctx, const std::string& role, const fs::path& p) {
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  for (const auto& f : files) {
    ctx.inputs.push_back({{"role", role}, {"path", f.string()}, {"sha1", git_blob_sha1(read_bytes(f))}});
  }
}

void prepare_out_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create out_dir " + out.string() + ": " + ec.message() + " (set run.out_dir or --out-dir)");
  const fs::path probe = out / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("out_dir " + out.string() + " is not writable (set run.out_dir or --out-dir)");
  }
  fs::remove(probe, ec);
}

std::string expand_seed(std::string s, std::uint64_t seed) {
  const std::string key = "{seed}";
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key)) s.replace(pos, key.size(), std::to_string(seed));
  return s;
}

policy::LoadedPolicy load_checkpoint(Context& ctx, const std::string& role, const fs::path& p) {
  if (!fs::is_regular_file(p)) {
    throw IoError("unknown checkpoint '" + p.string() + "': no such file (train one with `gridvla sft` and pass its " +
                  "checkpoints/final.ckpt)");
  }
  add_input(ctx, role, p);
  return policy::load_policy(p);
}

env::TaskSpec task_of(const std::string& variant) { return env::make_task(env::parse_variant(variant)); }

env::DemoDataset demos_for(const ExperimentConfig& cfg, Context& ctx) {
  if (cfg.data.demos.empty()) {
    return env::collect_demos(task_of(cfg.data.variant), cfg.data.demo_count, cfg.data.filter_threshold,
                              cfg.policy.codec, cfg.run.seed, cfg.env);
  }
  const fs::path dir = cfg.data.demos;
  if (!fs::is_regular_file(dir / "demos.json")) {
    throw IoError("unknown demo dataset '" + dir.string() + "': expected demos.json (create one with `gridvla collect-demos`)");
  }
  add_input(ctx, "demos", dir);
  env::DemoDataset d = env::load_demos(dir);
  const auto want = static_cast<std::size_t>(cfg.data.demo_count);
  if (d.episodes.size() < want) {
    throw ConfigError("demo dataset " + dir.string() + " has " + std::to_string(d.episodes.size()) +
                      " episodes but data.demo_count is " + std::to_string(want));
  }
  if (d.episodes.size() > want) d = d.prefix(want);
  return d;
}

algos::CheckpointFn periodic_checkpoints(const ExperimentConfig& cfg, const fs::path& out, const char* counter) {
  if (cfg.run.checkpoint_every <= 0) return {};
  const policy::PolicyConfig pc = cfg.policy;
  const std::string name = counter;
  return [pc, out, name](const nn::ParameterSet& p, long env_steps, long grad_steps) {
    const long n = name == "env" ? env_steps : grad_steps;
    fs::create_directories(out / "checkpoints");
    policy::save_policy(out / "checkpoints" / (name + "_" + std::to_string(n) + ".ckpt"), p, pc,
                        {{"env_steps", env_steps}, {"grad_steps", grad_steps}});
  };
}

json eval_point_json(const algos::EvalPoint& p) {
  return {{"env_steps", p.env_steps}, {"grad_steps", p.grad_steps}, {"success", p.success}, {"mean_return", p.mean_return}};
}

// ---- commands ----

CommandResult cmd_collect_demos(const ExperimentConfig& cfg, Context& ctx) {
  const env::DemoDataset d = env::collect_demos(task_of(cfg.data.variant), cfg.data.demo_count,
                                                cfg.data.filter_threshold, cfg.policy.codec, cfg.run.seed, cfg.env);
  env::save_demos(ctx.out / "demos", d);
  json s = {{"episodes", d.episodes.size()},
            {"transitions", d.transitions()},
            {"kept", d.filter_stats.kept},
            {"dropped", d.filter_stats.dropped},
            {"discarded_episodes", d.filter_stats.discarded_episodes},
            {"demos", (ctx.out / "demos").string()}};
  ctx.log.write(s);
  return {s, std::nullopt};
}

CommandResult cmd_sft(const ExperimentConfig& cfg, Context& ctx) {
  const env::DemoDataset demos = demos_for(cfg, ctx);
  nn::ParameterSet params = policy::init_params(cfg.policy, cfg.run.seed);
  algos::SftOptions o;
  o.steps = cfg.sft.steps;
  o.batch_size = cfg.sft.batch_size;
  o.learning_rate = cfg.sft.learning_rate;
  o.grad_clip_norm = cfg.sft.grad_clip_norm;
  o.seed = cfg.run.seed;
  o.eval_every = cfg.sft.eval_every;
  o.eval_episodes = cfg.sft.eval_episodes;
  o.eval_seed = cfg.run.eval_seed;
  o.log_every = cfg.sft.log_every;
  o.checkpoint_every = cfg.run.checkpoint_every;
  const algos::TrainResult r =
      algos::train_sft(params, cfg.policy, demos, o, ctx.log, periodic_checkpoints(cfg, ctx.out, "step"));
  const fs::path ckpt = ctx.out / "checkpoints" / "final.ckpt";
  fs::create_directories(ckpt.parent_path());
  policy::save_policy(ckpt, params, cfg.policy, {{"command", "sft"}, {"grad_steps", r.grad_steps}});
  algos::EvalPoint last;
  if (!r.evals.empty() && r.evals.back().grad_steps == r.grad_steps) {
    last = r.evals.back();
  } else {
    last = algos::greedy_eval(policy::Snapshot(params, cfg.policy), task_of(cfg.rl.variant), cfg.sft.eval_episodes,
                              cfg.run.eval_seed);
    last.grad_steps = r.grad_steps;
  }
  json s = {{"demo_episodes", demos.episodes.size()},
            {"transitions", demos.transitions()},
            {"grad_steps", r.grad_steps},
            {"final_loss", r.final_loss},
            {"final_success", last.success},
            {"final_return", last.mean_return},
            {"checkpoint", ckpt.string()}};
  return {s, last.success};
}

CommandResult cmd_rl(const std::string& command, const ExperimentConfig& cfg, Context& ctx) {
  if (cfg.rl.init_checkpoint.empty()) {
    throw ConfigError(command + " needs rl.init_checkpoint (e.g. --set rl.init_checkpoint=<sft run>/checkpoints/final.ckpt)");
  }
  const fs::path init = expand_seed(cfg.rl.init_checkpoint, cfg.run.seed);
  policy::LoadedPolicy lp = load_checkpoint(ctx, "init_checkpoint", init);
  ExperimentConfig c = cfg;
  c.policy = lp.config;
  algos::RlOptions o;
  o.max_env_steps = cfg.run.max_env_steps;
  o.seed = cfg.run.seed;
  o.eval_every = cfg.rl.eval_every;
  o.eval_episodes = cfg.rl.eval_episodes;
  o.eval_seed = cfg.run.eval_seed;
  o.success_threshold = cfg.rl.success_threshold;
  o.stop_at_threshold = cfg.rl.stop_at_threshold;
  o.checkpoint_every = cfg.run.checkpoint_every;
  o.tpo_pairs_per_step = cfg.rl.tpo_pairs_per_step;
  const env::TaskSpec task = task_of(cfg.rl.variant);
  const auto ck = periodic_checkpoints(c, ctx.out, "env");
  algos::TrainResult r;
  if (command == "ppo") r = algos::run_ppo(lp.params, lp.config, cfg.algo, task, o, ctx.log, ck);
  else if (command == "grpo") r = algos::run_grpo(lp.params, lp.config, cfg.algo, task, o, ctx.log, ck);
  else r = algos::run_tpo(lp.params, lp.config, cfg.algo, task, o, ctx.log, ck);
  const fs::path ckpt = ctx.out / "checkpoints" / "final.ckpt";
  fs::create_directories(ckpt.parent_path());
  policy::save_policy(ckpt, lp.params, lp.config,
                      {{"command", command}, {"env_steps", r.env_steps}, {"grad_steps", r.grad_steps}});
  algos::EvalPoint last;
  if (!r.evals.empty()) {
    last = r.evals.back();
  } else {
    last = algos::greedy_eval(policy::Snapshot(lp.params, lp.config), task, cfg.rl.eval_episodes, cfg.run.eval_seed,
                              cfg.algo.n_envs);
  }
  // Mean training-rollout return over the last fifth of the budget.
  double tail = 0.0, tail_n = 0.0;
  for (const auto& rec : ctx.log.records()) {
    if (rec.contains("iteration") && rec.at("env_steps").get<double>() > 0.8 * static_cast<double>(o.max_env_steps)) {
      tail += rec.at("mean_return").get<double>();
      tail_n += 1.0;
    }
  }
  json evals = json::array();
  for (const auto& e : r.evals) evals.push_back(eval_point_json(e));
  json s = {{"env_steps", r.env_steps},
            {"grad_steps", r.grad_steps},
            {"final_success", last.success},
            {"final_return", last.mean_return},
            {"tail_train_return", tail_n > 0 ? json(tail / tail_n) : json(nullptr)},
            {"env_steps_to_threshold", r.env_steps_to_threshold ? json(*r.env_steps_to_threshold) : json(nullptr)},
            {"success_threshold", o.success_threshold},
            {"evals", evals},
            {"checkpoint", ckpt.string()}};
  return {s, last.success};
}

std::vector<env::Variant> suite_of(const EvalSection& e) {
  if (e.suite.empty()) return bench::full_suite();
  std::vector<env::Variant> v;
  for (const auto& n : e.suite) v.push_back(env::parse_variant(n));
  return v;
}

json report_summary(const bench::EvalReport& r) {
  json rows = json::object();
  double mean = 0.0;
  for (const auto& v : r.variants) {
    rows[env::variant_name(v.variant)] = v.success.mean;
    mean += v.success.mean;
  }
  json axes = json::object();
  for (const auto& a : r.axes) {
    axes[env::axis_name(a.axis)] = {{"success", a.success},
                                    {"success_degradation",
                                     a.success_degradation ? json(*a.success_degradation) : json(nullptr)}};
  }
  return {{"mean_success", r.variants.empty() ? 0.0 : mean / static_cast<double>(r.variants.size())},
          {"success", rows},
          {"axes", axes}};
}

CommandResult cmd_eval(const ExperimentConfig& cfg, Context& ctx) {
  nn::ParameterSet params;
  policy::PolicyConfig pc = cfg.policy;
  if (cfg.eval.checkpoint.empty()) {
    params = policy::init_params(pc, cfg.run.seed);
  } else {
    policy::LoadedPolicy lp = load_checkpoint(ctx, "checkpoint", expand_seed(cfg.eval.checkpoint, cfg.run.seed));
    params = std::move(lp.params);
    pc = lp.config;
  }
  bench::EvalOptions o;
  o.episodes_per_task = cfg.eval.episodes;
  o.seeds = cfg.eval.seeds;
  o.workers = cfg.run.workers;
  o.n_envs = cfg.eval.n_envs;
  o.env_config = cfg.env;
  const bench::EvalReport r = bench::evaluate(policy::Snapshot(params, pc), suite_of(cfg.eval), o);
  bench::write_report(r, ctx.out);
  for (const auto& u : r.units) {
    ctx.log.write({{"variant", env::variant_name(u.variant)},
                   {"seed", u.seed},
                   {"episodes", u.episodes},
                   {"grasp_acc", u.grasp_acc},
                   {"cont_grasp_acc", u.cont_grasp_acc},
                   {"success", u.success},
                   {"mean_return", u.mean_return}});
  }
  json s = report_summary(r);
  return {s, s.at("mean_success").get<double>()};
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const std::vector<json>& rows) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      const json& v = r.contains(header[i]) ? r.at(header[i]) : json(nullptr);
      os << (i ? "," : "");
      if (v.is_null()) {
        continue;
      } else if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v.get<double>());
        os << buf;
      } else if (v.is_string()) {
        os << v.get<std::string>();
      } else {
        os << v.dump();
      }
    }
    os << "\n";
  }
  bench::write_text(path, os.str());
}

CommandResult cmd_sweep(const ExperimentConfig& cfg, Context& ctx) {
  if (cfg.sweep.demo_counts.empty()) throw ConfigError("sweep.demo_counts must not be empty");
  ExperimentConfig base = cfg;
  if (base.data.demos.empty()) {
    const int most = *std::max_element(cfg.sweep.demo_counts.begin(), cfg.sweep.demo_counts.end());
    const env::DemoDataset all = env::collect_demos(task_of(cfg.data.variant), most, cfg.data.filter_threshold,
                                                    cfg.policy.codec, cfg.run.seed, cfg.env);
    env::save_demos(ctx.out / "demos", all);
    base.data.demos = (ctx.out / "demos").string();
  }
  std::vector<json> rows;
  for (int n : cfg.sweep.demo_counts) {
    ExperimentConfig c = base;
    c.data.demo_count = n;
    c.run.min_success.reset();
    const fs::path sub = ctx.out / ("n_" + std::to_string(n));
    const CommandResult sft = run_command("sft", c, sub);
    c.eval.checkpoint = sft.summary.at("checkpoint").get<std::string>();
    const CommandResult ev = run_command("eval", c, sub / "eval");
    const json& success = ev.summary.at("success");
    json row = {{"demo_count", n},
                {"transitions", sft.summary.at("transitions")},
                {"final_loss", sft.summary.at("final_loss")},
                {"training_success", success.contains("Training") ? success.at("Training") : json(nullptr)},
                {"mean_success", ev.summary.at("mean_success")}};
    for (const auto& [axis, a] : ev.summary.at("axes").items()) row[axis + "_success"] = a.at("success");
    ctx.log.write(row);
    rows.push_back(row);
  }
  write_csv(ctx.out / "scaling.csv",
            {"demo_count", "transitions", "final_loss", "training_success", "mean_success", "IND_success",
             "Vision_success", "Semantics_success", "Execution_success"},
            rows);
  return {{{"rows", rows}}, std::nullopt};
}

struct Arm {
  std::string name;
  enum Init { Warm, Scratch, Graft } init = Warm;
  std::function<void(ExperimentConfig&)> tweak;
};

nn::ParameterSet graft(const nn::ParameterSet& from, const policy::PolicyConfig& cfg, std::uint64_t seed) {
  nn::ParameterSet p = policy::init_params(cfg, seed);
  for (auto& [name, e] : p.entries()) {
    if (!from.contains(name)) continue;
    const nn::Tensor& src = from.value(name);
    if (src.shape() == e.value.shape()) std::copy(src.data().begin(), src.data().end(), e.value.data().begin());
  }
  return p;
}

CommandResult cmd_ablation(const ExperimentConfig& cfg, Context& ctx, const std::vector<Arm>& arms) {
  if (cfg.ablation.seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
  std::vector<json> rows;
  json per_arm = json::object();
  for (std::uint64_t seed : cfg.ablation.seeds) {
    ExperimentConfig cs = cfg;
    cs.run.seed = seed;
    cs.run.min_success.reset();
    std::optional<fs::path> warm;
    auto warm_checkpoint = [&]() -> fs::path {
      if (warm) return *warm;
      if (!cfg.rl.init_checkpoint.empty()) {
        warm = fs::path(expand_seed(cfg.rl.init_checkpoint, seed));
      } else {
        const CommandResult r = run_command("sft", cs, ctx.out / "warmup" / ("seed_" + std::to_string(seed)));
        warm = fs::path(r.summary.at("checkpoint").get<std::string>());
      }
      return *warm;
    };
    for (const Arm& arm : arms) {
      ExperimentConfig c = cs;
      if (arm.tweak) arm.tweak(c);
      const fs::path sub = ctx.out / arm.name / ("seed_" + std::to_string(seed));
      fs::create_directories(sub);
      if (arm.init == Arm::Warm) {
        c.rl.init_checkpoint = warm_checkpoint().string();
      } else {
        const fs::path init = sub / "init.ckpt";
        nn::ParameterSet p;
        if (arm.init == Arm::Scratch) {
          p = policy::init_params(c.policy, seed);
        } else {
          const fs::path w = warm_checkpoint();
          p = graft(load_checkpoint(ctx, "warm_checkpoint", w).params, c.policy, seed);
        }
        policy::save_policy(init, p, c.policy, {{"init", arm.init == Arm::Scratch ? "scratch" : "graft"}});
        c.rl.init_checkpoint = init.string();
      }
      const CommandResult r = run_command("ppo", c, sub);
      json row = {{"arm", arm.name}, {"seed", seed}};
      for (const char* k : {"env_steps", "grad_steps", "final_success", "final_return", "tail_train_return",
                            "env_steps_to_threshold"}) {
        row[k] = r.summary.at(k);
      }
      ctx.log.write(row);
      rows.push_back(row);
    }
  }
  for (const Arm& arm : arms) {
    double succ = 0, ret = 0, tail = 0, grads = 0, n = 0;
    json reach = json::array();
    for (const auto& r : rows) {
      if (r.at("arm") != arm.name) continue;
      succ += r.at("final_success").get<double>();
      ret += r.at("final_return").get<double>();
      tail += r.at("tail_train_return").is_null() ? 0.0 : r.at("tail_train_return").get<double>();
      grads += r.at("grad_steps").get<double>();
      reach.push_back(r.at("env_steps_to_threshold"));
      n += 1;
    }
    per_arm[arm.name] = {{"mean_final_success", succ / n},
                         {"mean_final_return", ret / n},
                         {"mean_tail_train_return", tail / n},
                         {"mean_grad_steps", grads / n},
                         {"env_steps_to_threshold", reach}};
  }
  write_csv(ctx.out / "ablation.csv",
            {"arm", "seed", "env_steps", "grad_steps", "final_success", "final_return", "tail_train_return",
             "env_steps_to_threshold"},
            rows);
  return {{{"arms", per_arm}, {"rows", rows}}, std::nullopt};
}

std::string number_label(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

CommandResult dispatch(const std::string& command, const ExperimentConfig& cfg, Context& ctx) {
  if (command == "collect-demos") return cmd_collect_demos(cfg, ctx);
  if (command == "sft") return cmd_sft(cfg, ctx);
  if (command == "ppo" || command == "grpo" || command == "tpo") return cmd_rl(command, cfg, ctx);
  if (command == "eval") return cmd_eval(cfg, ctx);
  if (command == "sweep-sft-scale") return cmd_sweep(cfg, ctx);
  std::vector<Arm> arms;
  if (command == "ablate-value-head") {
    for (const auto& h : cfg.ablation.value_heads) {
      const policy::ValueHead vh = policy::parse_value_head(h);
      arms.push_back({h, Arm::Graft, [vh](ExperimentConfig& c) { c.policy.value_head = vh; }});
    }
  } else if (command == "ablate-epochs") {
    for (int e : cfg.ablation.epochs) {
      arms.push_back({"epochs_" + std::to_string(e), Arm::Warm, [e](ExperimentConfig& c) { c.algo.ppo_epochs = e; }});
    }
  } else if (command == "ablate-temperature") {
    for (double t : cfg.ablation.temperatures) {
      arms.push_back(
          {"temperature_" + number_label(t), Arm::Warm, [t](ExperimentConfig& c) { c.algo.temperature = t; }});
    }
  } else if (command == "ablate-warmup") {
    arms.push_back({"warm", Arm::Warm, {}});
    arms.push_back({"scratch", Arm::Scratch, {}});
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  for (const Arm& a : arms) {
    ExperimentConfig c = cfg;
    if (a.tweak) a.tweak(c);
    c.algo.validate();
  }
  return cmd_ablation(cfg, ctx, arms);
}

json versions() {
  return {{"gridvla", kVersion},
          {"compiler", __VERSION__},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"openssl", OPENSSL_VERSION_TEXT}};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"collect-demos",     "sft",           "ppo",
                                              "grpo",              "tpo",           "eval",
                                              "sweep-sft-scale",   "ablate-value-head", "ablate-epochs",
                                              "ablate-temperature", "ablate-warmup"};
  return names;
}

std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* c = EVP_MD_CTX_new();
  if (!c || EVP_DigestInit_ex(c, EVP_sha1(), nullptr) != 1 || EVP_DigestUpdate(c, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(c, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(c, md, &len) != 1) {
    EVP_MD_CTX_free(c);
    throw IoError("SHA-1 digest failed");
  }
  EVP_MD_CTX_free(c);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

CommandResult run_command(const std::string& command, const ExperimentConfig& cfg, const fs::path& out_dir,
                          const std::vector<std::string>& argv) {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end()) {
    throw ConfigError("unknown command '" + command + "'");
  }
  prepare_out_dir(out_dir);
  const std::string config_text = to_json(cfg).dump(2) + "\n";
  bench::write_text(out_dir / "config.json", config_text);
  Context ctx{out_dir, algos::MetricsLog(out_dir / "metrics.jsonl", cfg.run.wall_clock)};
  ctx.inputs.push_back({{"role", "config"}, {"path", "config.json"}, {"sha1", git_blob_sha1(config_text)}});
  json manifest = {{"command", command}, {"argv", argv}, {"seed", cfg.run.seed}, {"versions", versions()}};
  auto finish_manifest = [&](const std::string& status) {
    std::string listing;
    for (const auto& in : ctx.inputs) {
      listing += in.at("sha1").get<std::string>() + " " + in.at("role").get<std::string>() + "\n";
    }
    manifest["inputs"] = ctx.inputs;
    manifest["inputs_sha1"] = git_blob_sha1(listing);
    manifest["status"] = status;
    bench::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  };
  try {
    CommandResult r = dispatch(command, cfg, ctx);
    bench::write_text(out_dir / "summary.json", r.summary.dump(2) + "\n");
    finish_manifest("complete");
    return r;
  } catch (const std::exception& e) {
    manifest["error"] = e.what();
    try {
      finish_manifest("failed");
    } catch (...) {
    }
    throw;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"gridvla: fine-tune tokenized-action policies with SFT and RL on GridPick"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  static const std::map<std::string, std::string> help{
      {"collect-demos", "roll out the scripted expert into a demo dataset"},
      {"sft", "behavior-clone a policy on expert demos"},
      {"ppo", "PPO fine-tuning from rl.init_checkpoint"},
      {"grpo", "GRPO fine-tuning from rl.init_checkpoint"},
      {"tpo", "trajectory preference fine-tuning from rl.init_checkpoint"},
      {"eval", "greedy evaluation of eval.checkpoint over the suite"},
      {"sweep-sft-scale", "SFT + eval at each sweep.demo_counts entry"},
      {"ablate-value-head", "PPO per value-head variant"},
      {"ablate-epochs", "PPO per ppo_epochs value"},
      {"ablate-temperature", "PPO per rollout temperature"},
      {"ablate-warmup", "PPO from the SFT warm-up vs from scratch"}};
  for (const auto& name : command_names()) {
    CLI::App* sc = app.add_subcommand(name, help.at(name));
    sc->add_option("-c,--config", config_path, "JSON config file");
    sc->add_option("-s,--set", overrides, "override a config key, e.g. algo.ppo_epochs=4")->allow_extra_args(false);
    sc->add_option("-o,--out-dir", out_dir, "output directory (default $GRIDVLA_OUT_DIR/<command> or runs/<command>)");
    sc->add_option("-w,--workers", workers, "evaluation worker threads; 1 is bit-exact deterministic");
    sc->add_option("--seed", seed, "run seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  ExperimentConfig cfg;
  try {
    json doc = config_path.empty() ? json::object() : read_json_file(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    if (workers) apply_override(doc, "run.workers=" + std::to_string(*workers));
    if (seed) apply_override(doc, "run.seed=" + std::to_string(*seed));
    if (!out_dir.empty()) doc["run"]["out_dir"] = out_dir;
    cfg = experiment_config_from_json(doc);
  } catch (const ConfigError& e) {
    std::cerr << "gridvla " << command << ": config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "gridvla " << command << ": " << e.what() << "\n";
    return kUsage;
  }
  fs::path out = cfg.run.out_dir;
  if (out.empty()) {
    const char* env_dir = std::getenv("GRIDVLA_OUT_DIR");
    out = (env_dir && *env_dir ? fs::path(env_dir) : fs::path("runs")) / command;
  }
  std::vector<std::string> args(argv, argv + argc);
  CommandResult r;
  try {
    r = run_command(command, cfg, out, args);
  } catch (const ConfigError& e) {
    std::cerr << "gridvla " << command << ": config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "gridvla " << command << ": error: " << e.what() << "\n";
    return kRuntime;
  }
  std::cout << r.summary.dump() << "\n";
  std::cout << "out_dir: " << out.string() << "\n";
  if (cfg.run.min_success && r.headline_success && *r.headline_success < *cfg.run.min_success) {
    std::cerr << "gridvla " << command << ": success " << *r.headline_success << " is below run.min_success "
              << *cfg.run.min_success << "\n";
    return kThreshold;
  }
  return kOk;
}

}  // namespace gridvla::cli
