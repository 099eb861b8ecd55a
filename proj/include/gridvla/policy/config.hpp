#pragma once

#include <string>
#include <string_view>

#include "gridvla/policy/codec.hpp"
#include "json.hpp"

namespace gridvla::policy {

enum class ValueHead { FirstTokenH0, LastTokenHn, ConcatAll, SeparateBackbone };

std::string value_head_name(ValueHead v);
ValueHead parse_value_head(std::string_view name);  // throws ConfigError

struct PolicyConfig {
  ActionCodec codec;
  int embed_dim = 32;
  int n_layers = 2;
  int n_heads = 2;
  int ff_mult = 2;
  int patch_size = 2;
  int history_len = 1;
  double temperature = 1.0;
  ValueHead value_head = ValueHead::FirstTokenH0;
  int chunk_size = 1;
  // Grid the image encoder expects.
  int grid_w = 8;
  int grid_h = 8;
  int vocab_size = 0;  // instruction vocabulary; 0 = the asset catalog's

  int n_bins() const { return codec.n_bins; }
  int tokens_per_decision() const { return kActionDims * chunk_size; }
  int n_patches() const { return (grid_w / patch_size) * (grid_h / patch_size); }
  int patch_dim() const;
  int resolved_vocab() const;
  // Sequence slots: patches, instruction, <act>, action inputs.
  int action_slot() const;
  int max_positions() const { return action_slot() + tokens_per_decision(); }

  void validate() const;
};

nlohmann::json to_json(const PolicyConfig& c);
// Missing keys keep defaults; unknown keys raise ConfigError.
PolicyConfig policy_config_from_json(const nlohmann::json& j);

}  // namespace gridvla::policy
