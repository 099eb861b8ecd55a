#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridvla/common/rng.hpp"
#include "gridvla/env/gridpick.hpp"
#include "gridvla/nn/graph.hpp"
#include "gridvla/nn/parameter_set.hpp"
#include "gridvla/policy/config.hpp"

namespace gridvla::policy {

inline const std::string kCriticPrefix = "critic.";

// Fresh actor-critic parameters. The last value-head layer starts at zero.
nn::ParameterSet init_params(const PolicyConfig& cfg, std::uint64_t seed);

// Attaches low-rank adapters to every backbone and action-head linear weight
// and freezes the base parameters. The value head stays fully trainable.
void enable_lora(nn::ParameterSet& params, std::size_t rank, double scale, std::uint64_t seed);

// Row-major patch features of an observation, [n_patches, patch_dim].
std::vector<double> extract_patches(const env::Observation& obs, const PolicyConfig& cfg);

// Differentiable batched forward over decision points. tokens[b] holds the
// full action-token vector; position k is predicted from tokens < k.
struct ForwardResult {
  nn::Var logits;            // [B*n, n_bins], before temperature
  nn::Var hidden;            // [B*n, d], final-layer states at the predicting positions
  nn::Var token_log_probs;   // [B*n] under softmax(logits / temperature)
  nn::Var log_probs;         // [B]
  std::optional<nn::Var> values;  // [B]
};

ForwardResult forward(nn::Graph& g, nn::ParameterSet& params, const PolicyConfig& cfg,
                      const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens,
                      bool with_value, double temperature);

// Mean per-position entropy of softmax(logits / temperature), as a graph scalar.
nn::Var mean_entropy(const ForwardResult& f, double temperature);

// Scalar conveniences over a single decision point.
double log_prob(const env::Observation& obs, const std::vector<int>& tokens, nn::ParameterSet& params,
                const PolicyConfig& cfg);
double value(const env::Observation& obs, nn::ParameterSet& params, const PolicyConfig& cfg);

// Immutable inference view of a ParameterSet; the tape-free decoder below
// reuses the training kernels so both paths agree to rounding.
class Snapshot {
 public:
  Snapshot(const nn::ParameterSet& params, const PolicyConfig& cfg);

  const PolicyConfig& config() const { return cfg_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  PolicyConfig cfg_;
  nn::ParameterSet params_;
};

struct ActOptions {
  bool greedy = false;
  double temperature = 1.0;
  bool with_value = true;
};

struct ActResult {
  std::vector<int> tokens;
  double log_prob = 0.0;  // under softmax(logits / temperature); 0 in greedy mode
  std::vector<double> token_log_probs;
  double value = 0.0;
};

// Decodes the action tokens of each observation autoregressively, caching
// per-layer keys and values of the prefix. rngs[b] drives sample b.
std::vector<ActResult> act(const Snapshot& snap, const std::vector<const env::Observation*>& obs,
                           std::vector<Rng>* rngs, const ActOptions& opt);

// Policy checkpoints: nn-core format with {"policy": config, ...extra} metadata.
void save_policy(const std::filesystem::path& path, const nn::ParameterSet& params, const PolicyConfig& cfg,
                 const nlohmann::json& extra = nlohmann::json::object());
struct LoadedPolicy {
  nn::ParameterSet params;
  PolicyConfig config;
  nlohmann::json metadata;
};
LoadedPolicy load_policy(const std::filesystem::path& path);

}  // namespace gridvla::policy
