#include "gridvla/policy/config.hpp"

#include "gridvla/common/error.hpp"
#include "gridvla/env/assets.hpp"
#include "gridvla/env/gridpick.hpp"

namespace gridvla::policy {

std::string value_head_name(ValueHead v) {
  switch (v) {
    case ValueHead::FirstTokenH0: return "first_token_h0";
    case ValueHead::LastTokenHn: return "last_token_hn";
    case ValueHead::ConcatAll: return "concat_all";
    case ValueHead::SeparateBackbone: return "separate_backbone";
  }
  return "?";
}

ValueHead parse_value_head(std::string_view name) {
  for (ValueHead v : {ValueHead::FirstTokenH0, ValueHead::LastTokenHn, ValueHead::ConcatAll,
                      ValueHead::SeparateBackbone}) {
    if (value_head_name(v) == name) return v;
  }
  throw ConfigError("unknown value head variant '" + std::string(name) +
                    "' (expected first_token_h0, last_token_hn, concat_all or separate_backbone)");
}

int PolicyConfig::patch_dim() const { return patch_size * patch_size * env::kChannels; }

int PolicyConfig::resolved_vocab() const { return vocab_size > 0 ? vocab_size : env::catalog().vocab.size(); }

int PolicyConfig::action_slot() const { return n_patches() + env::kMaxInstructionTokens; }

void PolicyConfig::validate() const {
  codec.validate();
  if (embed_dim < 2 || n_layers < 1 || n_heads < 1 || ff_mult < 1) {
    throw ConfigError("policy dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) throw ConfigError("embed_dim must be divisible by n_heads");
  if (embed_dim % 2 != 0) throw ConfigError("embed_dim must be even (value head halves it)");
  if (patch_size < 1 || grid_w % patch_size != 0 || grid_h % patch_size != 0) {
    throw ConfigError("patch_size must divide the grid");
  }
  if (history_len != 1) throw ConfigError("history_len must be 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (chunk_size < 1) throw ConfigError("chunk_size must be at least 1");
}

nlohmann::json to_json(const PolicyConfig& c) {
  return {{"n_bins", c.codec.n_bins},
          {"action_lo", c.codec.lo},
          {"action_hi", c.codec.hi},
          {"embed_dim", c.embed_dim},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"ff_mult", c.ff_mult},
          {"patch_size", c.patch_size},
          {"history_len", c.history_len},
          {"temperature", c.temperature},
          {"value_head", value_head_name(c.value_head)},
          {"chunk_size", c.chunk_size},
          {"grid_w", c.grid_w},
          {"grid_h", c.grid_h},
          {"vocab_size", c.resolved_vocab()}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("policy config must be an object");
  PolicyConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_bins") c.codec.n_bins = v.get<int>();
      else if (key == "action_lo") c.codec.lo = v.get<std::vector<double>>();
      else if (key == "action_hi") c.codec.hi = v.get<std::vector<double>>();
      else if (key == "embed_dim") c.embed_dim = v.get<int>();
      else if (key == "n_layers") c.n_layers = v.get<int>();
      else if (key == "n_heads") c.n_heads = v.get<int>();
      else if (key == "ff_mult") c.ff_mult = v.get<int>();
      else if (key == "patch_size") c.patch_size = v.get<int>();
      else if (key == "history_len") c.history_len = v.get<int>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "value_head") c.value_head = parse_value_head(v.get<std::string>());
      else if (key == "chunk_size") c.chunk_size = v.get<int>();
      else if (key == "grid_w") c.grid_w = v.get<int>();
      else if (key == "grid_h") c.grid_h = v.get<int>();
      else if (key == "vocab_size") c.vocab_size = v.get<int>();
      else throw ConfigError("unknown policy key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad policy config value: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace gridvla::policy
