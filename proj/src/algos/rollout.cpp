#include "gridvla/algos/rollout.hpp"

#include "gridvla/common/error.hpp"

namespace gridvla::algos {
namespace {

constexpr std::uint64_t kSampleStream = 0x5a3b1e;

struct Slot {
  bool active = false;
  std::size_t index = 0;
  env::WorldState state;
  env::Observation obs;
  Trajectory traj;
  Rng rng;
};

// Drives batched episodes. `next_seed(i, &seed)` returns false when no
// episode i should be started.
std::vector<Trajectory> drive(const policy::Snapshot& snap, const env::TaskSpec& task, const RolloutOptions& opt,
                              const std::function<bool(std::size_t, std::size_t, std::uint64_t*)>& next_seed,
                              const std::function<std::uint64_t(std::size_t)>& stream_of) {
  if (opt.n_envs < 1) throw ContractError("rollouts need at least one environment slot");
  const policy::PolicyConfig& cfg = snap.config();
  const int k = cfg.chunk_size;
  std::vector<Slot> slots(static_cast<std::size_t>(opt.n_envs));
  std::vector<Trajectory> finished;
  std::vector<std::size_t> finished_index;
  std::size_t started = 0;
  std::size_t records = 0;
  bool exhausted = false;

  auto start = [&](Slot& s) {
    std::uint64_t seed = 0;
    if (exhausted || !next_seed(started, records, &seed)) {
      exhausted = true;
      s.active = false;
      return;
    }
    s.active = true;
    s.index = started++;
    auto [st, ob] = env::reset(task, seed, opt.env_config);
    s.state = std::move(st);
    s.obs = std::move(ob);
    s.traj = Trajectory{};
    s.traj.task = task;
    s.traj.episode_seed = seed;
    s.rng = Rng(stream_of(s.index));
  };
  for (auto& s : slots) start(s);

  std::vector<std::pair<std::size_t, env::Observation>> bootstrap;
  policy::ActOptions act_opt;
  act_opt.greedy = opt.greedy;
  act_opt.temperature = opt.temperature;
  act_opt.with_value = opt.record_values;
  for (;;) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].active) live.push_back(i);
    }
    if (live.empty()) break;
    std::vector<const env::Observation*> obs;
    std::vector<Rng> rngs;
    for (std::size_t i : live) {
      obs.push_back(&slots[i].obs);
      rngs.push_back(slots[i].rng);
    }
    const auto res = policy::act(snap, obs, opt.greedy ? nullptr : &rngs, act_opt);
    for (std::size_t j = 0; j < live.size(); ++j) {
      Slot& s = slots[live[j]];
      if (!opt.greedy) s.rng = rngs[j];
      Transition t;
      t.observation = s.obs;
      t.tokens = res[j].tokens;
      t.value = res[j].value;
      t.log_prob_old = res[j].log_prob;
      t.token_log_probs_old = res[j].token_log_probs;
      t.env_steps = 0;
      env::StepResult r;
      for (int c = 0; c < k; ++c) {
        const env::Action a = cfg.codec.decode(res[j].tokens.data() + c * policy::kActionDims);
        r = env::step(s.state, a);
        t.reward += r.reward;
        t.env_steps += 1;
        if (r.done) break;
      }
      t.done = r.done;
      s.traj.total_return += t.reward;
      s.traj.records.push_back(std::move(t));
      ++records;
      s.obs = std::move(r.observation);
      if (r.done) {
        s.traj.success = r.success;
        s.traj.truncated = r.truncated;
        s.traj.flags = r.info;
        if (r.truncated && opt.record_values) bootstrap.emplace_back(finished.size(), s.obs);
        finished_index.push_back(s.index);
        finished.push_back(std::move(s.traj));
        start(s);
      }
    }
  }

  if (!bootstrap.empty()) {
    policy::ActOptions vopt;
    vopt.greedy = true;
    std::vector<const env::Observation*> obs;
    for (const auto& [i, o] : bootstrap) obs.push_back(&o);
    const auto res = policy::act(snap, obs, nullptr, vopt);
    for (std::size_t j = 0; j < bootstrap.size(); ++j) finished[bootstrap[j].first].bootstrap_value = res[j].value;
  }

  // Order by episode index so results do not depend on slot scheduling.
  std::vector<Trajectory> out(finished.size());
  for (std::size_t i = 0; i < finished.size(); ++i) out[finished_index[i]] = std::move(finished[i]);
  return out;
}

}  // namespace

int Trajectory::env_steps() const {
  int n = 0;
  for (const auto& r : records) n += r.env_steps;
  return n;
}

std::vector<Trajectory> collect_rollouts(const policy::Snapshot& snap, const env::TaskSpec& task,
                                         std::size_t n_transitions, const RolloutOptions& opt,
                                         const std::function<std::uint64_t(std::size_t)>& episode_seed_fn,
                                         std::uint64_t sample_seed) {
  if (n_transitions < 1) throw ContractError("collect_rollouts needs n_transitions >= 1");
  // Episodes are started while the records already collected fall short.
  // Slots that cannot start stay idle, so the batch finishes the in-flight
  // episodes only.
  return drive(
      snap, task, opt,
      [&](std::size_t i, std::size_t records, std::uint64_t* seed) {
        if (records >= n_transitions) return false;
        *seed = episode_seed_fn(i);
        return true;
      },
      [&](std::size_t i) { return derive_seed(sample_seed, kSampleStream, i); });
}

std::vector<Trajectory> run_episodes(const policy::Snapshot& snap, const env::TaskSpec& task,
                                     const std::vector<std::uint64_t>& episode_seeds,
                                     const std::vector<std::uint64_t>& sample_streams, const RolloutOptions& opt) {
  if (!opt.greedy && sample_streams.size() != episode_seeds.size()) {
    throw ContractError("run_episodes: one sample stream per episode required");
  }
  return drive(
      snap, task, opt,
      [&](std::size_t i, std::size_t, std::uint64_t* seed) {
        if (i >= episode_seeds.size()) return false;
        *seed = episode_seeds[i];
        return true;
      },
      [&](std::size_t i) { return opt.greedy ? 0 : sample_streams[i]; });
}

std::vector<Trajectory> run_controller(const Controller& controller, const env::TaskSpec& task,
                                       const std::vector<std::uint64_t>& episode_seeds, std::uint64_t sample_seed,
                                       const env::EnvConfig& config) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < episode_seeds.size(); ++i) {
    auto [s, o] = env::reset(task, episode_seeds[i], config);
    Rng rng(derive_seed(sample_seed, kSampleStream, i));
    Trajectory tr;
    tr.task = task;
    tr.episode_seed = episode_seeds[i];
    while (!s.done) {
      Transition t;
      t.observation = o;
      const env::StepResult r = env::step(s, controller(s, rng));
      t.reward = r.reward;
      t.done = r.done;
      tr.total_return += r.reward;
      tr.records.push_back(std::move(t));
      o = r.observation;
      if (r.done) {
        tr.success = r.success;
        tr.truncated = r.truncated;
        tr.flags = r.info;
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<double> chunk_rewards(const std::vector<double>& step_rewards, int k) {
  if (k < 1) throw ContractError("chunk size must be at least 1");
  std::vector<double> out;
  for (std::size_t i = 0; i < step_rewards.size(); i += static_cast<std::size_t>(k)) {
    double s = 0.0;
    for (std::size_t j = i; j < std::min(step_rewards.size(), i + static_cast<std::size_t>(k)); ++j) {
      s += step_rewards[j];
    }
    out.push_back(s);
  }
  return out;
}

Trajectory chunk_rewards(const Trajectory& trajectory, int k) {
  if (k < 1) throw ContractError("chunk size must be at least 1");
  if (k == 1) return trajectory;
  Trajectory out = trajectory;
  out.records.clear();
  const auto& rec = trajectory.records;
  for (std::size_t i = 0; i < rec.size(); i += static_cast<std::size_t>(k)) {
    Transition t = rec[i];
    t.reward = 0.0;
    t.log_prob_old = 0.0;
    t.env_steps = 0;
    t.tokens.clear();
    t.token_log_probs_old.clear();
    for (std::size_t j = i; j < std::min(rec.size(), i + static_cast<std::size_t>(k)); ++j) {
      t.reward += rec[j].reward;
      t.log_prob_old += rec[j].log_prob_old;
      t.env_steps += rec[j].env_steps;
      t.tokens.insert(t.tokens.end(), rec[j].tokens.begin(), rec[j].tokens.end());
      t.token_log_probs_old.insert(t.token_log_probs_old.end(), rec[j].token_log_probs_old.begin(),
                                   rec[j].token_log_probs_old.end());
      t.done = rec[j].done;
    }
    out.records.push_back(std::move(t));
  }
  return out;
}

}  // namespace gridvla::algos
