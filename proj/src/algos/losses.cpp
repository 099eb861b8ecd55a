#include "gridvla/algos/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gridvla/common/error.hpp"
#include "gridvla/nn/ops.hpp"

namespace gridvla::algos {

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double bootstrap_value,
                      double gamma, double lam) {
  if (rewards.empty() || rewards.size() != values.size()) {
    throw ContractError("compute_gae: rewards and values must be non-empty and of equal length");
  }
  for (double v : rewards) {
    if (!std::isfinite(v)) throw NumericError("compute_gae: non-finite reward");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("compute_gae: non-finite value");
  }
  if (!std::isfinite(bootstrap_value)) throw NumericError("compute_gae: non-finite bootstrap value");
  const std::size_t T = rewards.size();
  GaeResult r;
  r.advantages.assign(T, 0.0);
  r.returns.assign(T, 0.0);
  // lambda-return recursion G_t = r_t + gamma ((1 - lam) V_{t+1} + lam G_{t+1});
  // A_t = G_t - V_t equals the sum of discounted TD errors.
  double next_value = bootstrap_value;
  double next_return = bootstrap_value;
  for (std::size_t i = T; i-- > 0;) {
    const double g = rewards[i] + gamma * ((1.0 - lam) * next_value + lam * next_return);
    r.returns[i] = g;
    r.advantages[i] = g - values[i];
    next_value = values[i];
    next_return = g;
  }
  return r;
}

std::vector<double> grpo_advantage(const std::vector<double>& group_rewards) {
  if (group_rewards.size() < 2) throw ContractError("grpo_advantage needs a group of at least 2");
  const auto [lo, hi] = std::minmax_element(group_rewards.begin(), group_rewards.end());
  if (*lo == *hi) return std::vector<double>(group_rewards.size(), 0.0);
  const double n = static_cast<double>(group_rewards.size());
  const double mean = std::accumulate(group_rewards.begin(), group_rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : group_rewards) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  std::vector<double> out;
  out.reserve(group_rewards.size());
  for (double r : group_rewards) out.push_back((r - mean) / sd);
  return out;
}

std::vector<PreferencePair> build_preferences(const std::vector<Trajectory>& trajectories,
                                              std::uint64_t pairing_seed) {
  std::map<env::Variant, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < trajectories.size(); ++i) buckets[trajectories[i].task.variant].push_back(i);
  Rng rng(derive_seed(pairing_seed, 0x7a1e));
  std::vector<PreferencePair> out;
  for (auto& [variant, idx] : buckets) {
    for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
    for (std::size_t k = 0; k + 1 < idx.size(); k += 2) {
      const Trajectory& a = trajectories[idx[k]];
      const Trajectory& b = trajectories[idx[k + 1]];
      if (a.total_return == b.total_return) continue;
      const bool a_wins = a.total_return > b.total_return;
      out.push_back({a_wins ? idx[k] : idx[k + 1], a_wins ? idx[k + 1] : idx[k],
                     std::abs(a.total_return - b.total_return)});
    }
  }
  return out;
}

nn::Var sft_loss(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg,
                 const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens) {
  if (obs.empty()) throw ContractError("sft_loss: empty batch");
  const auto f = policy::forward(g, params, cfg, obs, tokens, false, 1.0);
  return nn::neg(nn::mean(f.log_probs));
}

PpoTerms ppo_terms(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                   const std::vector<const Transition*>& batch, const std::vector<double>& advantages,
                   const std::vector<double>& returns, bool train_value) {
  if (batch.empty()) throw ContractError("ppo_terms: empty minibatch");
  std::vector<const env::Observation*> obs;
  std::vector<std::vector<int>> tokens;
  for (const auto* t : batch) {
    obs.push_back(&t->observation);
    tokens.push_back(t->tokens);
  }
  const auto f = policy::forward(g, params, cfg, obs, tokens, train_value, algo.temperature);
  const std::size_t B = batch.size();
  const std::size_t n = static_cast<std::size_t>(cfg.tokens_per_decision());

  PpoTerms out;
  nn::Var new_lp;
  std::vector<double> old_lp, adv;
  if (algo.per_dim_clip) {
    new_lp = f.token_log_probs;
    for (std::size_t b = 0; b < B; ++b) {
      if (batch[b]->token_log_probs_old.size() != n) {
        throw ContractError("per-dimension clipping needs per-token behaviour log-probs");
      }
      for (std::size_t k = 0; k < n; ++k) {
        old_lp.push_back(batch[b]->token_log_probs_old[k]);
        adv.push_back(advantages[b]);
      }
    }
  } else {
    new_lp = f.log_probs;
    for (std::size_t b = 0; b < B; ++b) {
      old_lp.push_back(batch[b]->log_prob_old);
      adv.push_back(advantages[b]);
    }
  }
  const std::size_t m = old_lp.size();
  nn::Var ratio = nn::exp(nn::sub(new_lp, g.constant(nn::Tensor(nn::Shape{m}, old_lp))));
  nn::Var a = g.constant(nn::Tensor(nn::Shape{m}, adv));
  nn::Var unclipped = nn::mul(ratio, a);
  nn::Var clipped = nn::mul(nn::clamp(ratio, 1.0 - algo.clip_eps, 1.0 + algo.clip_eps), a);
  out.surrogate = nn::mean(nn::minimum(unclipped, clipped));
  out.ratios.assign(ratio.value().data().begin(), ratio.value().data().end());
  out.entropy = policy::mean_entropy(f, algo.temperature);
  out.loss = nn::sub(nn::scale(out.entropy, -algo.entropy_coef), out.surrogate);
  if (train_value) {
    nn::Var target = g.constant(nn::Tensor(nn::Shape{B}, returns));
    out.value_loss = nn::mean(nn::square(nn::sub(*f.values, target)));
    out.loss = nn::add(out.loss, nn::scale(*out.value_loss, algo.value_loss_coef));
  }
  return out;
}

double trajectory_log_prob(const policy::Snapshot& snap, const Trajectory& t, double temperature) {
  nn::ParameterSet params = snap.params();
  nn::Graph g;
  return trajectory_log_prob(g, params, snap.config(), t, temperature).value().item();
}

nn::Var trajectory_log_prob(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg,
                            const Trajectory& t, double temperature) {
  if (t.records.empty()) throw ContractError("trajectory_log_prob: empty trajectory");
  std::vector<const env::Observation*> obs;
  std::vector<std::vector<int>> tokens;
  for (const auto& r : t.records) {
    obs.push_back(&r.observation);
    tokens.push_back(r.tokens);
  }
  return nn::sum(policy::forward(g, params, cfg, obs, tokens, false, temperature).log_probs);
}

nn::Var tpo_loss(nn::Graph& g, nn::ParameterSet& params, const policy::PolicyConfig& cfg, const Trajectory& preferred,
                 const Trajectory& rejected, double ref_preferred, double ref_rejected, double beta,
                 double temperature) {
  nn::Var lw = trajectory_log_prob(g, params, cfg, preferred, temperature);
  nn::Var ll = trajectory_log_prob(g, params, cfg, rejected, temperature);
  nn::Var margin = nn::add_scalar(nn::sub(lw, ll), ref_rejected - ref_preferred);
  return nn::neg(nn::log_sigmoid(nn::scale(margin, beta)));
}

}  // namespace gridvla::algos
