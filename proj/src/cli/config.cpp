#include "gridvla/cli/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "gridvla/common/error.hpp"

namespace gridvla::cli {
namespace {

using nlohmann::json;

template <class T>
bool has_type(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else {
    return v.is_number();
  }
}

template <class T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "a non-negative integer";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else return "a number";
}

// Typed reads from one config section; unread keys are rejected by finish().
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (root.contains(name)) {
      j_ = root.at(name);
      if (!j_.is_object()) throw ConfigError(name + " must be an object");
    } else {
      j_ = json::object();
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!has_type<T>(v)) throw ConfigError(path(key) + " must be " + type_name<T>());
    out = v.get<T>();
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  template <class T>
  void get(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(path(key) + " must be an array");
    std::vector<T> r;
    for (const auto& e : v) {
      if (!has_type<T>(e)) throw ConfigError(path(key) + " entries must be " + type_name<T>());
      r.push_back(e.get<T>());
    }
    out = std::move(r);
  }

  void finish() const {
    for (const auto& [key, v] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const { return name_ + "." + key; }

  std::string name_;
  json j_;
  std::set<std::string> seen_;
};

const std::set<std::string> kSections{"env", "policy", "algo", "data", "sft", "rl", "eval", "run", "sweep", "ablation"};

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  json j;
  j["env"] = env::to_json(c.env);
  j["policy"] = policy::to_json(c.policy);
  j["algo"] = algos::to_json(c.algo);
  j["data"] = {{"variant", c.data.variant},
               {"demo_count", c.data.demo_count},
               {"filter_threshold", c.data.filter_threshold},
               {"demos", c.data.demos}};
  j["sft"] = {{"steps", c.sft.steps},
              {"batch_size", c.sft.batch_size},
              {"learning_rate", c.sft.learning_rate},
              {"grad_clip_norm", c.sft.grad_clip_norm},
              {"eval_every", c.sft.eval_every},
              {"eval_episodes", c.sft.eval_episodes},
              {"log_every", c.sft.log_every}};
  j["rl"] = {{"init_checkpoint", c.rl.init_checkpoint},
             {"variant", c.rl.variant},
             {"eval_every", c.rl.eval_every},
             {"eval_episodes", c.rl.eval_episodes},
             {"success_threshold", c.rl.success_threshold},
             {"stop_at_threshold", c.rl.stop_at_threshold},
             {"tpo_pairs_per_step", c.rl.tpo_pairs_per_step}};
  j["eval"] = {{"checkpoint", c.eval.checkpoint},
               {"suite", c.eval.suite},
               {"episodes", c.eval.episodes},
               {"seeds", c.eval.seeds},
               {"n_envs", c.eval.n_envs}};
  j["run"] = {{"seed", c.run.seed},
              {"eval_seed", c.run.eval_seed},
              {"max_env_steps", c.run.max_env_steps},
              {"checkpoint_every", c.run.checkpoint_every},
              {"out_dir", c.run.out_dir},
              {"workers", c.run.workers},
              {"wall_clock", c.run.wall_clock},
              {"min_success", c.run.min_success ? json(*c.run.min_success) : json(nullptr)}};
  j["sweep"] = {{"demo_counts", c.sweep.demo_counts}};
  j["ablation"] = {{"seeds", c.ablation.seeds},
                   {"value_heads", c.ablation.value_heads},
                   {"epochs", c.ablation.epochs},
                   {"temperatures", c.ablation.temperatures}};
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!kSections.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }
  ExperimentConfig c;
  if (j.contains("env")) c.env = env::env_config_from_json(j.at("env"));
  if (j.contains("policy")) c.policy = policy::policy_config_from_json(j.at("policy"));
  if (j.contains("algo")) c.algo = algos::algo_config_from_json(j.at("algo"));

  Section d(j, "data");
  d.get("variant", c.data.variant);
  d.get("demo_count", c.data.demo_count);
  d.get("filter_threshold", c.data.filter_threshold);
  d.get("demos", c.data.demos);
  d.finish();

  Section s(j, "sft");
  s.get("steps", c.sft.steps);
  s.get("batch_size", c.sft.batch_size);
  s.get("learning_rate", c.sft.learning_rate);
  s.get("grad_clip_norm", c.sft.grad_clip_norm);
  s.get("eval_every", c.sft.eval_every);
  s.get("eval_episodes", c.sft.eval_episodes);
  s.get("log_every", c.sft.log_every);
  s.finish();

  Section r(j, "rl");
  r.get("init_checkpoint", c.rl.init_checkpoint);
  r.get("variant", c.rl.variant);
  r.get("eval_every", c.rl.eval_every);
  r.get("eval_episodes", c.rl.eval_episodes);
  r.get("success_threshold", c.rl.success_threshold);
  r.get("stop_at_threshold", c.rl.stop_at_threshold);
  r.get("tpo_pairs_per_step", c.rl.tpo_pairs_per_step);
  r.finish();

  Section e(j, "eval");
  e.get("checkpoint", c.eval.checkpoint);
  e.get("suite", c.eval.suite);
  e.get("episodes", c.eval.episodes);
  e.get("seeds", c.eval.seeds);
  e.get("n_envs", c.eval.n_envs);
  e.finish();

  Section u(j, "run");
  u.get("seed", c.run.seed);
  u.get("eval_seed", c.run.eval_seed);
  u.get("max_env_steps", c.run.max_env_steps);
  u.get("checkpoint_every", c.run.checkpoint_every);
  u.get("out_dir", c.run.out_dir);
  u.get("workers", c.run.workers);
  u.get("wall_clock", c.run.wall_clock);
  u.get("min_success", c.run.min_success);
  u.finish();

  Section w(j, "sweep");
  w.get("demo_counts", c.sweep.demo_counts);
  w.finish();

  Section a(j, "ablation");
  a.get("seeds", c.ablation.seeds);
  a.get("value_heads", c.ablation.value_heads);
  a.get("epochs", c.ablation.epochs);
  a.get("temperatures", c.ablation.temperatures);
  a.finish();

  c.policy.validate();
  c.algo.validate();
  if (c.data.demo_count < 1) throw ConfigError("data.demo_count must be at least 1");
  if (c.sft.batch_size < 1) throw ConfigError("sft.batch_size must be at least 1");
  if (c.sft.steps < 0) throw ConfigError("sft.steps must not be negative");
  if (c.eval.episodes < 1) throw ConfigError("eval.episodes must be at least 1");
  if (c.eval.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (c.run.workers < 1) throw ConfigError("run.workers must be at least 1");
  if (c.run.max_env_steps < 1) throw ConfigError("run.max_env_steps must be at least 1");
  for (int n : c.sweep.demo_counts) {
    if (n < 1) throw ConfigError("sweep.demo_counts entries must be at least 1");
  }
  for (const auto& v : c.eval.suite) env::parse_variant(v);
  env::parse_variant(c.data.variant);
  env::parse_variant(c.rl.variant);
  for (const auto& h : c.ablation.value_heads) policy::parse_value_head(h);
  return c;
}

void apply_override(nlohmann::json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override path '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  return j;
}

}  // namespace gridvla::cli
