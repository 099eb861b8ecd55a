#include "gridvla/algos/updates.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gridvla/common/error.hpp"
#include "gridvla/nn/ops.hpp"

namespace gridvla::algos {
namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = n; k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
  return idx;
}

void require_finite(double v, const char* what, std::size_t minibatch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + " is not finite in minibatch " + std::to_string(minibatch));
  }
}

}  // namespace

RolloutBatch make_ppo_batch(const std::vector<Trajectory>& trajectories, const AlgoConfig& algo) {
  RolloutBatch b;
  for (const auto& t : trajectories) {
    if (t.records.empty()) continue;
    std::vector<double> r, v;
    for (const auto& rec : t.records) {
      r.push_back(rec.reward);
      v.push_back(rec.value);
    }
    const double boot = t.truncated ? t.bootstrap_value : 0.0;
    const GaeResult g = compute_gae(r, v, boot, algo.gamma, algo.lam);
    for (std::size_t i = 0; i < t.records.size(); ++i) {
      b.transitions.push_back(&t.records[i]);
      b.advantages.push_back(g.advantages[i]);
      b.returns.push_back(g.returns[i]);
    }
  }
  if (algo.normalize_advantages) normalize_advantages(b);
  return b;
}

void normalize_advantages(RolloutBatch& batch) {
  const double n = static_cast<double>(batch.advantages.size());
  if (n == 0) return;
  const double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  batch.raw_advantage_mean = mean;
  batch.raw_advantage_std = sd;
  if (sd <= 1e-8) {
    for (double& a : batch.advantages) a -= mean;
    return;
  }
  for (double& a : batch.advantages) a = (a - mean) / sd;
}

RolloutBatch make_grpo_batch(const std::vector<std::vector<Trajectory>>& groups) {
  RolloutBatch b;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    if (group.size() < 2) throw ContractError("GRPO group " + std::to_string(gi) + " has fewer than 2 trajectories");
    std::vector<double> rewards;
    for (const auto& t : group) {
      if (t.episode_seed != group[0].episode_seed || t.task.variant != group[0].task.variant ||
          t.task.seed != group[0].task.seed) {
        throw ContractError("GRPO group " + std::to_string(gi) + " mixes initial states");
      }
      rewards.push_back(t.total_return);
    }
    const auto adv = grpo_advantage(rewards);
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (const auto& rec : group[i].records) {
        b.transitions.push_back(&rec);
        b.advantages.push_back(adv[i]);
        b.returns.push_back(0.0);
      }
    }
  }
  return b;
}

nn::OptimizerState make_optimizer(const AlgoConfig& algo) {
  nn::OptimizerState s;
  s.learning_rate = algo.learning_rate;
  if (algo.grad_clip_norm > 0.0) {
    s.grad_clip_norm = algo.grad_clip_norm;
  } else {
    s.grad_clip_norm.reset();
  }
  return s;
}

UpdateStats ppo_update(const RolloutBatch& batch, nn::ParameterSet& params, nn::OptimizerState& opt,
                       const policy::PolicyConfig& cfg, const AlgoConfig& algo, std::uint64_t shuffle_seed,
                       bool train_value) {
  if (batch.transitions.empty()) throw ContractError("ppo_update: empty batch");
  UpdateStats st;
  Rng rng(derive_seed(shuffle_seed, 0x5f0f));
  const std::size_t N = batch.transitions.size();
  const std::size_t mb = static_cast<std::size_t>(algo.minibatch_size);
  double ratio_count = 0.0;
  double clipped = 0.0;
  double kl = 0.0;
  double weight = 0.0;
  std::size_t minibatch = 0;
  for (int e = 0; e < algo.ppo_epochs; ++e) {
    const auto order = shuffled(N, rng);
    for (std::size_t s = 0; s < N; s += mb, ++minibatch) {
      const std::size_t end = std::min(N, s + mb);
      std::vector<const Transition*> part;
      std::vector<double> adv, ret;
      for (std::size_t i = s; i < end; ++i) {
        part.push_back(batch.transitions[order[i]]);
        adv.push_back(batch.advantages[order[i]]);
        ret.push_back(batch.returns[order[i]]);
      }
      nn::Graph g;
      const PpoTerms t = ppo_terms(g, params, cfg, algo, part, adv, ret, train_value);
      require_finite(t.loss.value().item(), "PPO loss", minibatch);
      params.zero_grad();
      g.backward(t.loss);
      const nn::AdamStats a = nn::adam_step(params, opt);
      const double w = static_cast<double>(part.size());
      st.policy_loss += -t.surrogate.value().item() * w;
      if (t.value_loss) st.value_loss += t.value_loss->value().item() * w;
      st.entropy += t.entropy.value().item() * w;
      st.grad_norm += a.grad_norm * w;
      weight += w;
      for (double r : t.ratios) {
        clipped += std::abs(r - 1.0) > algo.clip_eps ? 1.0 : 0.0;
        kl += (r - 1.0) - std::log(r);
        ratio_count += 1.0;
      }
      st.grad_steps += 1;
    }
    st.epochs += 1;
  }
  st.policy_loss /= weight;
  st.value_loss /= weight;
  st.entropy /= weight;
  st.grad_norm /= weight;
  st.clip_fraction = clipped / ratio_count;
  st.approx_kl = kl / ratio_count;
  return st;
}

UpdateStats grpo_update(const std::vector<std::vector<Trajectory>>& groups, nn::ParameterSet& params,
                        nn::OptimizerState& opt, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                        std::uint64_t shuffle_seed) {
  const RolloutBatch b = make_grpo_batch(groups);
  return ppo_update(b, params, opt, cfg, algo, shuffle_seed, false);
}

UpdateStats tpo_update(const std::vector<Trajectory>& trajectories, const std::vector<PreferencePair>& pairs,
                       const std::vector<double>& ref_log_probs, nn::ParameterSet& params, nn::OptimizerState& opt,
                       const policy::PolicyConfig& cfg, const AlgoConfig& algo, std::size_t pairs_per_step,
                       std::uint64_t shuffle_seed) {
  UpdateStats st;
  if (pairs.empty()) return st;
  if (pairs_per_step < 1) throw ContractError("tpo_update: pairs_per_step must be positive");
  Rng rng(derive_seed(shuffle_seed, 0x7f0));
  double weight = 0.0;
  std::size_t minibatch = 0;
  for (int e = 0; e < algo.ppo_epochs; ++e) {
    const auto order = shuffled(pairs.size(), rng);
    for (std::size_t s = 0; s < pairs.size(); s += pairs_per_step, ++minibatch) {
      const std::size_t end = std::min(pairs.size(), s + pairs_per_step);
      nn::Graph g;
      std::optional<nn::Var> total;
      for (std::size_t i = s; i < end; ++i) {
        const PreferencePair& p = pairs[order[i]];
        nn::Var l = tpo_loss(g, params, cfg, trajectories[p.preferred], trajectories[p.rejected],
                             ref_log_probs[p.preferred], ref_log_probs[p.rejected], algo.beta, algo.temperature);
        total = total ? nn::add(*total, l) : l;
      }
      nn::Var loss = nn::scale(*total, 1.0 / static_cast<double>(end - s));
      require_finite(loss.value().item(), "TPO loss", minibatch);
      params.zero_grad();
      g.backward(loss);
      const nn::AdamStats a = nn::adam_step(params, opt);
      const double w = static_cast<double>(end - s);
      st.policy_loss += loss.value().item() * w;
      st.grad_norm += a.grad_norm * w;
      weight += w;
      st.grad_steps += 1;
    }
    st.epochs += 1;
  }
  st.policy_loss /= weight;
  st.grad_norm /= weight;
  return st;
}

double sft_step(nn::ParameterSet& params, nn::OptimizerState& opt, const policy::PolicyConfig& cfg,
                const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens) {
  nn::Graph g;
  nn::Var loss = sft_loss(g, params, cfg, obs, tokens);
  const double v = loss.value().item();
  if (!std::isfinite(v)) throw NumericError("SFT loss is not finite");
  params.zero_grad();
  g.backward(loss);
  nn::adam_step(params, opt);
  return v;
}

}  // namespace gridvla::algos
