#include "gridvla/bench/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "gridvla/common/error.hpp"

namespace gridvla::bench {
namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;

MetricSummary summarize_metric(const std::vector<double>& xs) {
  MetricSummary m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return m;
}

EvalUnit score(env::Variant v, std::uint64_t seed, const std::vector<algos::Trajectory>& trajs) {
  EvalUnit u;
  u.variant = v;
  u.seed = seed;
  u.episodes = static_cast<int>(trajs.size());
  for (const auto& t : trajs) {
    u.grasp_acc += t.flags.grasped_once ? 1.0 : 0.0;
    u.cont_grasp_acc += t.flags.held_5 ? 1.0 : 0.0;
    u.success += t.flags.placed ? 1.0 : 0.0;
    u.mean_return += t.total_return;
  }
  const double n = static_cast<double>(trajs.size());
  u.grasp_acc /= n;
  u.cont_grasp_acc /= n;
  u.success /= n;
  u.mean_return /= n;
  return u;
}

}  // namespace

const VariantSummary& EvalReport::variant(env::Variant v) const {
  for (const auto& s : variants) {
    if (s.variant == v) return s;
  }
  throw ContractError("report has no row for " + env::variant_name(v));
}

const AxisSummary& EvalReport::axis(env::Axis a) const {
  for (const auto& s : axes) {
    if (s.axis == a) return s;
  }
  throw ContractError("report has no " + env::axis_name(a) + " axis");
}

std::uint64_t eval_episode_seed(std::uint64_t s, std::size_t i) { return derive_seed(s, kEvalStream, i); }

std::optional<double> degradation(double ind_metric, double ood_metric) {
  if (!(ind_metric > 0.0)) return std::nullopt;
  return (ood_metric - ind_metric) / ind_metric;
}

std::vector<env::Variant> full_suite() { return env::all_variants(); }

std::vector<env::Variant> axis_members(env::Axis a) {
  std::vector<env::Variant> out;
  for (env::Variant v : env::all_variants()) {
    if (env::axis_of(v) == a) out.push_back(v);
  }
  return out;
}

EvalReport evaluate(const EpisodeRunner& runner, const std::vector<env::Variant>& suite, const EvalOptions& opt) {
  if (opt.episodes_per_task < 1) throw ContractError("evaluate needs episodes_per_task >= 1");
  if (opt.seeds.empty()) throw ContractError("evaluate needs at least one seed");
  if (suite.empty()) throw ContractError("evaluate needs a non-empty suite");
  const std::size_t n_units = suite.size() * opt.seeds.size();
  std::vector<EvalUnit> units(n_units);
  auto run_unit = [&](std::size_t u) {
    const env::Variant v = suite[u / opt.seeds.size()];
    const std::uint64_t seed = opt.seeds[u % opt.seeds.size()];
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < opt.episodes_per_task; ++i) seeds.push_back(eval_episode_seed(seed, i));
    units[u] = score(v, seed, runner(env::make_task(v, seed), seeds));
  };

  const std::size_t workers = std::min<std::size_t>(std::max(opt.workers, 1), n_units);
  if (workers == 1) {
    for (std::size_t u = 0; u < n_units; ++u) run_unit(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t u; (u = next.fetch_add(1)) < n_units;) {
          try {
            run_unit(u);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  return summarize(std::move(units));
}

EvalReport evaluate(const policy::Snapshot& snap, const std::vector<env::Variant>& suite, const EvalOptions& opt) {
  algos::RolloutOptions ro;
  ro.greedy = true;
  ro.record_values = false;
  ro.n_envs = opt.n_envs;
  ro.env_config = opt.env_config;
  return evaluate(
      [&](const env::TaskSpec& task, const std::vector<std::uint64_t>& seeds) {
        return algos::run_episodes(snap, task, seeds, {}, ro);
      },
      suite, opt);
}

EvalReport evaluate_controller(const algos::Controller& controller, const std::vector<env::Variant>& suite,
                               const EvalOptions& opt) {
  return evaluate(
      [&](const env::TaskSpec& task, const std::vector<std::uint64_t>& seeds) {
        return algos::run_controller(controller, task, seeds, task.seed, opt.env_config);
      },
      suite, opt);
}

EvalReport summarize(std::vector<EvalUnit> units) {
  EvalReport r;
  r.units = std::move(units);
  for (std::size_t i = 0; i < r.units.size();) {
    const env::Variant v = r.units[i].variant;
    std::vector<double> g, c, s;
    VariantSummary row;
    row.variant = v;
    row.axis = env::axis_of(v);
    row.episodes = r.units[i].episodes;
    for (; i < r.units.size() && r.units[i].variant == v; ++i) {
      g.push_back(r.units[i].grasp_acc);
      c.push_back(r.units[i].cont_grasp_acc);
      s.push_back(r.units[i].success);
    }
    row.seeds = static_cast<int>(s.size());
    row.grasp_acc = summarize_metric(g);
    row.cont_grasp_acc = summarize_metric(c);
    row.success = summarize_metric(s);
    r.variants.push_back(row);
  }

  const VariantSummary* ind = nullptr;
  for (const auto& row : r.variants) {
    if (row.variant == env::Variant::Training) ind = &row;
  }
  if (ind != nullptr) {
    const VariantSummary base = *ind;
    for (auto& row : r.variants) {
      row.grasp_degradation = degradation(base.grasp_acc.mean, row.grasp_acc.mean);
      row.cont_grasp_degradation = degradation(base.cont_grasp_acc.mean, row.cont_grasp_acc.mean);
      row.success_degradation = degradation(base.success.mean, row.success.mean);
    }
  }

  for (env::Axis a : {env::Axis::InDistribution, env::Axis::Vision, env::Axis::Semantics, env::Axis::Execution}) {
    AxisSummary ax;
    ax.axis = a;
    double deg = 0.0;
    int n_deg = 0;
    for (const auto& row : r.variants) {
      if (row.axis != a) continue;
      ax.members.push_back(row.variant);
      ax.grasp_acc += row.grasp_acc.mean;
      ax.cont_grasp_acc += row.cont_grasp_acc.mean;
      ax.success += row.success.mean;
      if (row.success_degradation) {
        deg += *row.success_degradation;
        ++n_deg;
      }
    }
    if (ax.members.empty()) continue;
    const double n = static_cast<double>(ax.members.size());
    ax.grasp_acc /= n;
    ax.cont_grasp_acc /= n;
    ax.success /= n;
    if (n_deg > 0) ax.success_degradation = deg / n_deg;
    r.axes.push_back(ax);
  }
  return r;
}

}  // namespace gridvla::bench
