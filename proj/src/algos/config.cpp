#include "gridvla/algos/config.hpp"

#include <string>

#include "gridvla/common/error.hpp"

namespace gridvla::algos {

void AlgoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lam >= 0.0 && lam <= 1.0)) {
    throw ConfigError("gamma and lam must lie in [0, 1]");
  }
  if (!(clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
  if (ppo_epochs < 1) throw ConfigError("ppo_epochs must be at least 1");
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be at least 1");
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (n_groups < 1) throw ConfigError("n_groups must be at least 1");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (chunk_size < 1) throw ConfigError("chunk_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (rollout_transitions < 1) throw ConfigError("rollout_transitions must be at least 1");
  if (n_envs < 1) throw ConfigError("n_envs must be at least 1");
}

nlohmann::json to_json(const AlgoConfig& c) {
  return {{"gamma", c.gamma},
          {"lam", c.lam},
          {"clip_eps", c.clip_eps},
          {"ppo_epochs", c.ppo_epochs},
          {"minibatch_size", c.minibatch_size},
          {"value_loss_coef", c.value_loss_coef},
          {"entropy_coef", c.entropy_coef},
          {"group_size", c.group_size},
          {"n_groups", c.n_groups},
          {"beta", c.beta},
          {"temperature", c.temperature},
          {"chunk_size", c.chunk_size},
          {"per_dim_clip", c.per_dim_clip},
          {"normalize_advantages", c.normalize_advantages},
          {"learning_rate", c.learning_rate},
          {"lr_linear_decay", c.lr_linear_decay},
          {"grad_clip_norm", c.grad_clip_norm},
          {"rollout_transitions", c.rollout_transitions},
          {"n_envs", c.n_envs}};
}

AlgoConfig algo_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("algo config must be an object");
  AlgoConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "lam") c.lam = v.get<double>();
      else if (key == "clip_eps") c.clip_eps = v.get<double>();
      else if (key == "ppo_epochs") c.ppo_epochs = v.get<int>();
      else if (key == "minibatch_size") c.minibatch_size = v.get<int>();
      else if (key == "value_loss_coef") c.value_loss_coef = v.get<double>();
      else if (key == "entropy_coef") c.entropy_coef = v.get<double>();
      else if (key == "group_size") c.group_size = v.get<int>();
      else if (key == "n_groups") c.n_groups = v.get<int>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "chunk_size") c.chunk_size = v.get<int>();
      else if (key == "per_dim_clip") c.per_dim_clip = v.get<bool>();
      else if (key == "normalize_advantages") c.normalize_advantages = v.get<bool>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_linear_decay") c.lr_linear_decay = v.get<bool>();
      else if (key == "grad_clip_norm") c.grad_clip_norm = v.get<double>();
      else if (key == "rollout_transitions") c.rollout_transitions = v.get<int>();
      else if (key == "n_envs") c.n_envs = v.get<int>();
      else throw ConfigError("unknown algo key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad algo config value: ") + e.what());
  }
  c.validate();
  return c;
}

AlgoConfig chunked_defaults(int chunk_size) {
  AlgoConfig c;
  c.gamma = 0.96;
  c.lam = 0.85;
  c.clip_eps = 0.1;
  c.chunk_size = chunk_size;
  c.per_dim_clip = true;
  return c;
}

AlgoConfig orz_defaults() {
  AlgoConfig c;
  c.gamma = 1.0;
  c.lam = 1.0;
  return c;
}

}  // namespace gridvla::algos
