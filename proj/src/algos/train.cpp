#include "gridvla/algos/train.hpp"

#include <cmath>
#include <numeric>

#include "gridvla/common/error.hpp"

namespace gridvla::algos {
namespace {

constexpr std::uint64_t kTrainEpisodes = 0x7a11;
constexpr std::uint64_t kSampleStream = 0x5a3b;
constexpr std::uint64_t kShuffleStream = 0x5f0f;
constexpr std::uint64_t kEvalEpisodes = 0x7e57;
constexpr std::uint64_t kSftStream = 0x5f7;

nlohmann::json stats_json(const UpdateStats& s) {
  return {{"policy_loss", s.policy_loss}, {"value_loss", s.value_loss}, {"entropy", s.entropy},
          {"clip_fraction", s.clip_fraction}, {"approx_kl", s.approx_kl}, {"grad_norm", s.grad_norm}};
}

void check_chunking(const policy::PolicyConfig& cfg, const AlgoConfig& algo) {
  cfg.validate();
  algo.validate();
  if (cfg.chunk_size != algo.chunk_size) {
    throw ConfigError("policy.chunk_size (" + std::to_string(cfg.chunk_size) + ") and algo.chunk_size (" +
                      std::to_string(algo.chunk_size) + ") differ");
  }
}

// Bookkeeping shared by the RL drivers.
class RlLoop {
 public:
  RlLoop(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
         const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log, const CheckpointFn& checkpoint)
      : params_(params), cfg_(cfg), algo_(algo), task_(task), opt_(opt), log_(log), checkpoint_(checkpoint),
        adam_(make_optimizer(algo)) {
    if (opt.max_env_steps < 0) throw ConfigError("max_env_steps must be non-negative");
    if (opt.eval_every > 0) evaluate();
  }

  bool running() const {
    if (result_.env_steps >= opt_.max_env_steps) return false;
    return !(opt_.stop_at_threshold && result_.env_steps_to_threshold);
  }

  long iteration() const { return iter_; }
  nn::OptimizerState& adam() { return adam_; }
  std::uint64_t stream(std::uint64_t kind) const { return derive_seed(opt_.seed, kind, iter_); }
  std::uint64_t next_episode_seed(std::size_t i) const {
    return derive_seed(opt_.seed, kTrainEpisodes, episodes_ + i);
  }

  policy::Snapshot snapshot() const { return policy::Snapshot(params_, cfg_); }

  RolloutOptions rollout_options(bool values) const {
    RolloutOptions ro;
    ro.temperature = algo_.temperature;
    ro.record_values = values;
    ro.n_envs = algo_.n_envs;
    return ro;
  }

  void finish_iteration(const std::vector<Trajectory>& trajs, const UpdateStats& st, nlohmann::json extra = {}) {
    episodes_ += trajs.size();
    double ret = 0.0, succ = 0.0;
    for (const auto& t : trajs) {
      result_.env_steps += t.env_steps();
      ret += t.total_return;
      succ += t.success ? 1.0 : 0.0;
    }
    result_.grad_steps += st.grad_steps;
    if (algo_.lr_linear_decay && opt_.max_env_steps > 0) {
      const double left = 1.0 - static_cast<double>(result_.env_steps) / static_cast<double>(opt_.max_env_steps);
      adam_.learning_rate = algo_.learning_rate * std::max(0.0, left);
    }
    const double n = std::max<double>(1.0, static_cast<double>(trajs.size()));
    nlohmann::json rec = {{"iteration", iter_},
                          {"env_steps", result_.env_steps},
                          {"grad_steps", result_.grad_steps},
                          {"episodes", trajs.size()},
                          {"mean_return", ret / n},
                          {"success_rate", succ / n}};
    rec.update(stats_json(st));
    if (extra.is_object()) rec.update(extra);
    ++iter_;
    if (opt_.eval_every > 0 && result_.env_steps >= next_eval_) {
      rec["eval_success"] = evaluate().success;
    }
    log_.write(rec);
    if (checkpoint_ && opt_.checkpoint_every > 0 && result_.env_steps >= next_ckpt_) {
      checkpoint_(params_, result_.env_steps, result_.grad_steps);
      next_ckpt_ = (result_.env_steps / opt_.checkpoint_every + 1) * opt_.checkpoint_every;
    }
  }

  TrainResult finish() {
    if (opt_.eval_every > 0 && (result_.evals.empty() || result_.evals.back().env_steps != result_.env_steps)) {
      evaluate();
    }
    if (checkpoint_) checkpoint_(params_, result_.env_steps, result_.grad_steps);
    return result_;
  }

 private:
  EvalPoint evaluate() {
    EvalPoint p = greedy_eval(snapshot(), task_, opt_.eval_episodes, opt_.eval_seed, algo_.n_envs);
    p.env_steps = result_.env_steps;
    p.grad_steps = result_.grad_steps;
    result_.evals.push_back(p);
    if (!result_.env_steps_to_threshold && p.success >= opt_.success_threshold) {
      result_.env_steps_to_threshold = p.env_steps;
    }
    next_eval_ = (result_.env_steps / opt_.eval_every + 1) * opt_.eval_every;
    return p;
  }

  nn::ParameterSet& params_;
  const policy::PolicyConfig& cfg_;
  const AlgoConfig& algo_;
  const env::TaskSpec& task_;
  const RlOptions& opt_;
  MetricsLog& log_;
  const CheckpointFn& checkpoint_;
  nn::OptimizerState adam_;
  TrainResult result_;
  long iter_ = 0;
  std::size_t episodes_ = 0;
  long next_eval_ = 0;
  long next_ckpt_ = 0;
};

}  // namespace

MetricsLog::MetricsLog(const std::filesystem::path& path, bool wall_clock) : wall_clock_(wall_clock) {
  file_.emplace(path, std::ios::trunc);
  if (!*file_) throw IoError("cannot open metrics log " + path.string());
}

void MetricsLog::write(nlohmann::json record) {
  if (wall_clock_) {
    record["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  if (file_) {
    *file_ << record.dump() << '\n';
    file_->flush();
  }
  records_.push_back(std::move(record));
}

EvalPoint greedy_eval(const policy::Snapshot& snap, const env::TaskSpec& task, int episodes, std::uint64_t eval_seed,
                      int n_envs) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < episodes; ++i) seeds.push_back(derive_seed(eval_seed, kEvalEpisodes, i));
  RolloutOptions ro;
  ro.greedy = true;
  ro.record_values = false;
  ro.n_envs = n_envs;
  const auto trajs = run_episodes(snap, task, seeds, {}, ro);
  EvalPoint p;
  for (const auto& t : trajs) {
    p.success += t.success ? 1.0 : 0.0;
    p.mean_return += t.total_return;
  }
  p.success /= episodes;
  p.mean_return /= episodes;
  return p;
}

std::vector<SftExample> sft_examples(const env::DemoDataset& demos, const policy::PolicyConfig& cfg) {
  const int k = cfg.chunk_size;
  const env::Action noop{0.0, 0.0, -1.0};
  const std::vector<int> pad = cfg.codec.encode(noop);
  std::vector<SftExample> out;
  for (const auto& ep : demos.episodes) {
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      SftExample ex{&ep.steps[t].observation, {}};
      for (int c = 0; c < k; ++c) {
        const std::size_t s = t + static_cast<std::size_t>(c);
        const std::vector<int> toks = s < ep.steps.size() ? cfg.codec.encode(ep.steps[s].action) : pad;
        ex.tokens.insert(ex.tokens.end(), toks.begin(), toks.end());
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

TrainResult train_sft(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const env::DemoDataset& demos,
                      const SftOptions& opt, MetricsLog& log, const CheckpointFn& checkpoint) {
  cfg.validate();
  if (opt.steps < 0) throw ConfigError("sft steps must be non-negative");
  if (opt.batch_size < 1) throw ConfigError("sft batch_size must be positive");
  TrainResult result;
  if (opt.steps == 0) return result;
  const auto examples = sft_examples(demos, cfg);
  if (examples.empty()) throw ContractError("SFT needs a non-empty demonstration set");

  nn::OptimizerState adam;
  adam.learning_rate = opt.learning_rate;
  if (opt.grad_clip_norm > 0.0) {
    adam.grad_clip_norm = opt.grad_clip_norm;
  } else {
    adam.grad_clip_norm.reset();
  }
  Rng rng(derive_seed(opt.seed, kSftStream));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const env::TaskSpec train_task = env::make_task(env::Variant::Training);
  double loss_acc = 0.0;
  long loss_n = 0;
  for (long step = 1; step <= opt.steps; ++step) {
    std::vector<const env::Observation*> obs;
    std::vector<std::vector<int>> tokens;
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size), examples.size());
    while (obs.size() < bs) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const SftExample& ex = examples[order[cursor++]];
      obs.push_back(ex.observation);
      tokens.push_back(ex.tokens);
    }
    const double loss = sft_step(params, adam, cfg, obs, tokens);
    result.final_loss = loss;
    result.grad_steps = step;
    loss_acc += loss;
    ++loss_n;
    const bool eval_now = opt.eval_every > 0 && (step % opt.eval_every == 0 || step == opt.steps);
    const bool log_now = (opt.log_every > 0 && step % opt.log_every == 0) || step == opt.steps || eval_now;
    if (log_now) {
      nlohmann::json rec = {{"grad_steps", step}, {"env_steps", 0}, {"sft_loss", loss_acc / loss_n}};
      loss_acc = 0.0;
      loss_n = 0;
      if (eval_now) {
        EvalPoint p = greedy_eval(policy::Snapshot(params, cfg), train_task, opt.eval_episodes, opt.eval_seed);
        p.grad_steps = step;
        result.evals.push_back(p);
        rec["eval_success"] = p.success;
        rec["mean_return"] = p.mean_return;
      }
      log.write(rec);
    }
    if (checkpoint && opt.checkpoint_every > 0 && step % opt.checkpoint_every == 0) checkpoint(params, 0, step);
  }
  if (checkpoint) checkpoint(params, 0, result.grad_steps);
  return result;
}

TrainResult run_ppo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                    const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log, const CheckpointFn& checkpoint) {
  check_chunking(cfg, algo);
  RlLoop loop(params, cfg, algo, task, opt, log, checkpoint);
  while (loop.running()) {
    const policy::Snapshot snap = loop.snapshot();
    const auto trajs = collect_rollouts(
        snap, task, static_cast<std::size_t>(algo.rollout_transitions), loop.rollout_options(true),
        [&](std::size_t i) { return loop.next_episode_seed(i); }, loop.stream(kSampleStream));
    const RolloutBatch batch = make_ppo_batch(trajs, algo);
    const UpdateStats st = ppo_update(batch, params, loop.adam(), cfg, algo, loop.stream(kShuffleStream), true);
    loop.finish_iteration(trajs, st);
  }
  return loop.finish();
}

TrainResult run_grpo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                     const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log,
                     const CheckpointFn& checkpoint) {
  check_chunking(cfg, algo);
  RlLoop loop(params, cfg, algo, task, opt, log, checkpoint);
  const std::size_t G = static_cast<std::size_t>(algo.group_size);
  const std::size_t n_groups = static_cast<std::size_t>(algo.n_groups);
  while (loop.running()) {
    const policy::Snapshot snap = loop.snapshot();
    std::vector<std::uint64_t> seeds, streams;
    const std::uint64_t sample = loop.stream(kSampleStream);
    for (std::size_t g = 0; g < n_groups; ++g) {
      const std::uint64_t s = loop.next_episode_seed(g * G);
      for (std::size_t i = 0; i < G; ++i) {
        seeds.push_back(s);
        streams.push_back(derive_seed(sample, g, i));
      }
    }
    auto trajs = run_episodes(snap, task, seeds, streams, loop.rollout_options(false));
    std::vector<std::vector<Trajectory>> groups(n_groups);
    for (std::size_t j = 0; j < trajs.size(); ++j) groups[j / G].push_back(trajs[j]);
    std::size_t informative = 0;
    for (const auto& grp : groups) {
      for (const auto& t : grp) {
        if (t.total_return != grp.front().total_return) {
          ++informative;
          break;
        }
      }
    }
    const UpdateStats st = grpo_update(groups, params, loop.adam(), cfg, algo, loop.stream(kShuffleStream));
    loop.finish_iteration(trajs, st, {{"informative_groups", informative}});
  }
  return loop.finish();
}

TrainResult run_tpo(nn::ParameterSet& params, const policy::PolicyConfig& cfg, const AlgoConfig& algo,
                    const env::TaskSpec& task, const RlOptions& opt, MetricsLog& log,
                    const CheckpointFn& checkpoint) {
  check_chunking(cfg, algo);
  if (opt.tpo_pairs_per_step < 1) throw ConfigError("tpo_pairs_per_step must be positive");
  const policy::Snapshot reference(params, cfg);
  RlLoop loop(params, cfg, algo, task, opt, log, checkpoint);
  while (loop.running()) {
    const policy::Snapshot snap = loop.snapshot();
    const auto trajs = collect_rollouts(
        snap, task, static_cast<std::size_t>(algo.rollout_transitions), loop.rollout_options(false),
        [&](std::size_t i) { return loop.next_episode_seed(i); }, loop.stream(kSampleStream));
    const auto pairs = build_preferences(trajs, loop.stream(kShuffleStream));
    std::vector<double> ref(trajs.size(), 0.0);
    for (const auto& p : pairs) {
      for (std::size_t i : {p.preferred, p.rejected}) {
        ref[i] = trajectory_log_prob(reference, trajs[i], algo.temperature);
      }
    }
    const UpdateStats st = tpo_update(trajs, pairs, ref, params, loop.adam(), cfg, algo,
                                      static_cast<std::size_t>(opt.tpo_pairs_per_step), loop.stream(kShuffleStream));
    loop.finish_iteration(trajs, st, {{"pairs", pairs.size()}});
  }
  return loop.finish();
}

}  // namespace gridvla::algos
