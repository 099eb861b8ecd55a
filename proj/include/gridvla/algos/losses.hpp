#pragma once

#include <cstdint>
#include <vector>

#include "gridvla/algos/config.hpp"
#include "gridvla/algos/rollout.hpp"
#include "gridvla/nn/graph.hpp"
#include "gridvla/policy/model.hpp"

namespace gridvla::algos {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value
};

// Generalized advantage estimation with V_T = bootstrap_value (pass 0 after
// termination). With gamma = lam = 1 the returns are the plain reward-to-go.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double bootstrap_value,
                      double gamma, double lam);

// (r - mean) / max(std, 1e-8) with the population standard deviation.
std::vector<double> grpo_advantage(const std::vector<double>& group_rewards);

struct PreferencePair {
  std::size_t preferred;  // indices into the trajectory list
  std::size_t rejected;
  double margin;
};

// Buckets trajectories by task variant, shuffles each bucket with a PRNG
// keyed by pairing_seed, pairs neighbours and keeps strictly ordered pairs.
std::vector<PreferencePair> build_preferences(const std::vector<Trajectory>& trajectories,
                                              std::uint64_t pairing_seed);

// Mean over decision points of -log pi(expert tokens | observation).
nn::Var sft_loss(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg,
                 const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens);

struct PpoTerms {
  nn::Var loss;       // -surrogate + c_v * value_loss - c_e * entropy
  nn::Var surrogate;  // mean of min(rho A, clip(rho) A)
  std::optional<nn::Var> value_loss;
  nn::Var entropy;
  std::vector<double> ratios;  // per decision (per token with per_dim_clip)
};

// Clipped surrogate on one minibatch. With per_dim_clip the ratio and clip
// are applied per action token and the surrogate averages over tokens.
PpoTerms ppo_terms(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                   const std::vector<const Transition*>& batch, const std::vector<double>& advantages,
                   const std::vector<double>& returns, bool train_value);

// Sum over records of log pi(tokens | observation) at the given temperature.
double trajectory_log_prob(const policy::Snapshot& snap, const Trajectory& t, double temperature);
nn::Var trajectory_log_prob(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg,
                            const Trajectory& t, double temperature);

// -log sigma(beta * ((log pi(w) - ref_w) - (log pi(l) - ref_l))).
nn::Var tpo_loss(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg, const Trajectory& preferred,
                 const Trajectory& rejected, double ref_preferred, double ref_rejected, double beta,
                 double temperature = 1.0);

}  // namespace gridvla::algos
