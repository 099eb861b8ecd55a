#pragma once

#include <vector>

#include "gridvla/algos/rollout.hpp"
#include "gridvla/env/task.hpp"
#include "gridvla/policy/model.hpp"

namespace gridvla::testing {

// At most 2000 parameters: gradient checks run on this.
inline policy::PolicyConfig tiny_config() {
  policy::PolicyConfig c;
  c.codec.n_bins = 4;
  c.embed_dim = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ff_mult = 2;
  c.vocab_size = 16;
  return c;
}

// Reset observation; with vocab_limit > 0 instruction ids are folded into
// [2, vocab_limit).
inline env::Observation observation(env::Variant v, std::uint64_t ep, int vocab_limit = 0) {
  auto [s, o] = env::reset(env::make_task(v), ep);
  if (vocab_limit > 0) {
    for (int& t : o.instruction) {
      if (t != env::kPadToken) t = 2 + t % (vocab_limit - 2);
    }
  }
  return o;
}

// Trajectory over the given observations and tokens with behaviour
// log-probs taken from `snap`.
inline algos::Trajectory make_trajectory(const policy::Snapshot& snap, const std::vector<env::Observation>& obs,
                                         const std::vector<std::vector<int>>& tokens,
                                         const std::vector<double>& rewards) {
  algos::Trajectory t;
  nn::ParameterSet ps = snap.params();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    algos::Transition r;
    r.observation = obs[i];
    r.tokens = tokens[i];
    r.reward = rewards[i];
    r.log_prob_old = policy::log_prob(obs[i], tokens[i], ps, snap.config());
    nn::Graph g;
    const auto f = policy::forward(g, ps, snap.config(), {&obs[i]}, {tokens[i]}, false, 1.0);
    for (double v : f.token_log_probs.value().data()) r.token_log_probs_old.push_back(v);
    r.done = i + 1 == obs.size();
    t.total_return += rewards[i];
    t.records.push_back(std::move(r));
  }
  return t;
}

}  // namespace gridvla::testing
