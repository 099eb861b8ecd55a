#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "gridvla/algos/train.hpp"
#include "gridvla/common/error.hpp"
#include "gridvla/env/expert.hpp"
#include "gridvla/nn/gradcheck.hpp"
#include "gridvla/nn/ops.hpp"

using namespace gridvla;
using namespace gridvla::algos;
using gridvla::testing::make_trajectory;
using gridvla::testing::observation;
using gridvla::testing::tiny_config;

namespace {

std::map<std::string, std::vector<double>> grads_of(nn::ParameterSet& ps, const nn::LossBuilder& loss) {
  ps.zero_grad();
  nn::Graph g;
  g.backward(loss(g, ps));
  std::map<std::string, std::vector<double>> out;
  for (auto& s : ps.slots()) {
    if (!s.trainable) continue;
    const auto gr = s.tensor->grad();
    out[s.key].assign(gr.begin(), gr.end());
  }
  ps.drop_grads();
  return out;
}

double sum_log_prob(nn::ParameterSet& ps, const policy::PolicyConfig& cfg, const std::vector<Transition>& ts) {
  double s = 0.0;
  for (const auto& t : ts) s += policy::log_prob(t.observation, t.tokens, ps, cfg);
  return s;
}

struct TinySetup {
  policy::PolicyConfig cfg = tiny_config();
  nn::ParameterSet ps = policy::init_params(cfg, 5);
  std::vector<env::Observation> obs;
  TinySetup() {
    for (std::uint64_t i = 0; i < 4; ++i) {
      obs.push_back(observation(i % 2 ? env::Variant::UnseenInstruction : env::Variant::Training, i, 16));
    }
    // Non-trivial value head so value gradients are exercised.
    for (auto& w : ps.value("value.l3.w").data()) w = 0.3;
  }
};

}  // namespace

TEST_CASE("compute_gae examples") {
  const auto r = compute_gae({1.0}, {0.5}, 0.0, 0.99, 0.95);
  CHECK(r.advantages[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.returns[0] == doctest::Approx(1.0).epsilon(1e-15));

  // Truncation bootstraps: delta = 0 + 0.5 * 2 - 1.
  const auto b = compute_gae({0.0}, {1.0}, 2.0, 0.5, 0.9);
  CHECK(b.advantages[0] == doctest::Approx(0.0).epsilon(1e-15));

  CHECK_THROWS_AS(compute_gae({}, {}, 0.0, 0.9, 0.9), ContractError);
  CHECK_THROWS_AS(compute_gae({1.0, 2.0}, {1.0}, 0.0, 0.9, 0.9), ContractError);
  CHECK_THROWS_AS(compute_gae({std::nan("")}, {1.0}, 0.0, 0.9, 0.9), NumericError);
  CHECK_THROWS_AS(compute_gae({0.0}, {INFINITY}, 0.0, 0.9, 0.9), NumericError);
}

TEST_CASE("compute_gae matches the direct discounted sum of TD errors") {
  Rng rng(11);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int T = 1 + rng.below_int(50);
    const double gamma = rng.uniform(), lam = rng.uniform();
    std::vector<double> r(T), v(T);
    for (int t = 0; t < T; ++t) {
      r[t] = rng.uniform(-1.0, 1.5);
      v[t] = rng.uniform(-2.0, 2.0);
    }
    const double boot = rng.uniform() < 0.5 ? 0.0 : rng.uniform(-2.0, 2.0);
    const auto got = compute_gae(r, v, boot, gamma, lam);
    for (int t = 0; t < T; ++t) {
      double a = 0.0;
      for (int l = 0; t + l < T; ++l) {
        const double next = t + l + 1 < T ? v[t + l + 1] : boot;
        a += std::pow(gamma * lam, l) * (r[t + l] + gamma * next - v[t + l]);
      }
      worst = std::max(worst, std::abs(a - got.advantages[t]));
      worst = std::max(worst, std::abs(a + v[t] - got.returns[t]));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("gamma = lambda = 1 reduces to reward-to-go minus baseline") {
  Rng rng(12);
  for (int inst = 0; inst < 200; ++inst) {
    const int T = 1 + rng.below_int(40);
    std::vector<double> r(T), v(T);
    for (int t = 0; t < T; ++t) {
      r[t] = rng.below_int(3) == 0 ? 0.1 * rng.below_int(12) : 0.0;
      v[t] = rng.uniform(-1.0, 1.0);
    }
    const auto got = compute_gae(r, v, 0.0, 1.0, 1.0);
    double togo = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      togo = r[t] + togo;
      REQUIRE(got.returns[t] == togo);
      REQUIRE(got.advantages[t] == togo - v[t]);
    }
  }
}

TEST_CASE("grpo_advantage") {
  const auto a = grpo_advantage({1, 1, 0, 0});
  for (int i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(i < 2 ? 1.0 : -1.0).epsilon(1e-12));
  for (double x : grpo_advantage({0.2, 0.2, 0.2})) CHECK(x == 0.0);
  CHECK_THROWS_AS(grpo_advantage({1.0}), ContractError);

  Rng rng(3);
  for (int inst = 0; inst < 500; ++inst) {
    std::vector<double> r(2 + rng.below_int(10));
    for (double& x : r) x = 0.1 * rng.below_int(13);
    bool constant = true;
    for (double x : r) constant = constant && x == r[0];
    if (constant) continue;
    const auto adv = grpo_advantage(r);
    double m = 0.0, s = 0.0;
    for (double x : adv) m += x;
    m /= adv.size();
    for (double x : adv) s += (x - m) * (x - m);
    REQUIRE(std::abs(m) <= 1e-12);
    REQUIRE(std::abs(std::sqrt(s / adv.size()) - 1.0) <= 1e-9);
  }
}

TEST_CASE("chunk_rewards") {
  CHECK(chunk_rewards({0.0, 0.1, 0.0, 0.0}, 4) == std::vector<double>{0.1});
  CHECK(chunk_rewards({0.0, 0.1, 1.0}, 1) == std::vector<double>{0.0, 0.1, 1.0});
  CHECK(chunk_rewards({1, 2, 3, 4, 5}, 2) == std::vector<double>{3, 7, 5});
  CHECK_THROWS_AS(chunk_rewards({1.0}, 0), ContractError);

  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  const auto t = make_trajectory(snap, s.obs, {{0, 1, 2}, {1, 1, 1}, {3, 0, 2}, {2, 2, 0}}, {0, 0.1, 0, 1});
  const auto one = chunk_rewards(t, 1);
  REQUIRE(one.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(one.records[i].tokens == t.records[i].tokens);
  const auto three = chunk_rewards(t, 3);
  REQUIRE(three.records.size() == 2);
  CHECK(three.records[0].reward == doctest::Approx(0.1));
  CHECK(three.records[1].reward == 1.0);
  CHECK(three.records[0].tokens.size() == 9);
  CHECK(three.records[0].log_prob_old ==
        doctest::Approx(t.records[0].log_prob_old + t.records[1].log_prob_old + t.records[2].log_prob_old));
  CHECK(three.records[1].done);
  CHECK(!three.records[0].done);
}

TEST_CASE("build_preferences") {
  std::vector<Trajectory> ts(2);
  ts[0].total_return = 1.2;
  ts[1].total_return = 0.1;
  auto p = build_preferences(ts, 0);
  REQUIRE(p.size() == 1);
  CHECK(p[0].preferred == 0);
  CHECK(p[0].rejected == 1);
  CHECK(p[0].margin == doctest::Approx(1.1));

  for (auto& t : ts) t.total_return = 0.2;
  CHECK(build_preferences(ts, 0).empty());

  Rng rng(9);
  std::vector<Trajectory> mixed(100);
  const double levels[] = {0.0, 0.1, 0.2, 1.2};
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    mixed[i].total_return = levels[rng.below(4)];
    mixed[i].task = env::make_task(i % 3 == 0 ? env::Variant::UnseenObjects : env::Variant::Training);
  }
  const auto a = build_preferences(mixed, 42), b = build_preferences(mixed, 42);
  REQUIRE(a.size() == b.size());
  CHECK(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].preferred == b[i].preferred);
    CHECK(a[i].rejected == b[i].rejected);
    CHECK(mixed[a[i].preferred].total_return > mixed[a[i].rejected].total_return);
    CHECK(mixed[a[i].preferred].task.variant == mixed[a[i].rejected].task.variant);
  }
}

TEST_CASE("sft_loss examples") {
  policy::PolicyConfig cfg;
  auto ps = policy::init_params(cfg, 1);
  for (auto& w : ps.value("lm_head.w").data()) w = 0.0;
  for (auto& w : ps.value("lm_head.b").data()) w = 0.0;
  const auto o1 = observation(env::Variant::Training, 0), o2 = observation(env::Variant::Training, 1);
  nn::Graph g;
  const double uniform = sft_loss(g, ps, cfg, {&o1, &o2}, {{0, 5, 15}, {7, 7, 7}}).value().item();
  CHECK(uniform == doctest::Approx(3.0 * std::log(16.0)).epsilon(1e-12));
  nn::Graph g2;
  CHECK_THROWS_AS(sft_loss(g2, ps, cfg, {}, {}), ContractError);
}

TEST_CASE("sft overfits ten transitions") {
  policy::PolicyConfig cfg;
  auto ps = policy::init_params(cfg, 2);
  const auto demos = env::collect_demos(env::make_task(env::Variant::Training), 2, 0.01, cfg.codec, 3);
  std::vector<const env::Observation*> obs;
  std::vector<std::vector<int>> tokens;
  for (const auto& ep : demos.episodes) {
    for (const auto& st : ep.steps) {
      if (obs.size() < 10) {
        obs.push_back(&st.observation);
        tokens.push_back(st.tokens);
      }
    }
  }
  REQUIRE(obs.size() == 10);
  nn::OptimizerState opt;
  opt.learning_rate = 5e-3;
  std::vector<double> losses;
  for (int i = 0; i < 100; ++i) losses.push_back(sft_step(ps, opt, cfg, obs, tokens));
  nn::Graph g;
  const double final_loss = sft_loss(g, ps, cfg, obs, tokens).value().item();
  CHECK(final_loss < 0.01);
  // Adam steps jitter; the trend over windows of ten steps is monotone.
  for (std::size_t w = 1; w < 10; ++w) {
    double prev = 0.0, cur = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      prev += losses[(w - 1) * 10 + i];
      cur += losses[w * 10 + i];
    }
    CHECK(cur < prev);
  }
}

TEST_CASE("sft examples pad chunk targets with the open no-op") {
  policy::PolicyConfig cfg;
  cfg.chunk_size = 3;
  const auto demos = env::collect_demos(env::make_task(env::Variant::Training), 1, 0.01, cfg.codec, 0);
  const auto ex = sft_examples(demos, cfg);
  const auto& steps = demos.episodes[0].steps;
  REQUIRE(ex.size() == steps.size());
  const auto pad = cfg.codec.encode(env::Action{0.0, 0.0, -1.0});
  for (std::size_t t = 0; t < ex.size(); ++t) {
    REQUIRE(ex[t].tokens.size() == 9);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::vector<int> want = t + c < steps.size() ? steps[t + c].tokens : pad;
      CHECK(std::vector<int>(ex[t].tokens.begin() + 3 * c, ex[t].tokens.begin() + 3 * c + 3) == want);
    }
  }
}

TEST_CASE("warmup with a zero step budget leaves parameters unchanged") {
  policy::PolicyConfig cfg;
  auto ps = policy::init_params(cfg, 4);
  const auto before = policy::Snapshot(ps, cfg);
  const auto demos = env::collect_demos(env::make_task(env::Variant::Training), 2, 0.01, cfg.codec, 0);
  SftOptions o;
  o.steps = 0;
  MetricsLog log;
  const auto r = warmup(ps, cfg, demos, o, log);
  CHECK(r.grad_steps == 0);
  for (const auto& [name, e] : ps.entries()) {
    const auto a = e.value.data(), b = before.params().value(name).data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("ppo surrogate arithmetic") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  auto t = make_trajectory(snap, {s.obs[0]}, {{1, 2, 3}}, {0.0});
  AlgoConfig algo;
  algo.entropy_coef = 0.0;
  const Transition* tr = &t.records[0];

  SUBCASE("on-policy ratio is one") {
    nn::Graph g;
    const auto p = ppo_terms(g, s.ps, s.cfg, algo, {tr}, {0.7}, {0.0}, false);
    CHECK(p.ratios[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.surrogate.value().item() == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("clip arithmetic") {
    t.records[0].log_prob_old -= std::log(1.3);
    nn::Graph g;
    const auto p = ppo_terms(g, s.ps, s.cfg, algo, {tr}, {2.0}, {0.0}, false);
    CHECK(p.ratios[0] == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(p.surrogate.value().item() == doctest::Approx(2.4).epsilon(1e-12));
    nn::Graph g2;
    const auto q = ppo_terms(g2, s.ps, s.cfg, algo, {tr}, {-2.0}, {0.0}, false);
    CHECK(q.surrogate.value().item() == doctest::Approx(-2.6).epsilon(1e-12));
  }
  SUBCASE("per-dimension clipping") {
    algo.per_dim_clip = true;
    algo.clip_eps = 0.1;
    t.records[0].token_log_probs_old[0] -= std::log(1.3);
    nn::Graph g;
    const auto p = ppo_terms(g, s.ps, s.cfg, algo, {tr}, {1.0}, {0.0}, false);
    REQUIRE(p.ratios.size() == 3);
    CHECK(p.ratios[0] == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(p.ratios[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.surrogate.value().item() == doctest::Approx((1.1 + 1.0 + 1.0) / 3.0).epsilon(1e-12));
  }
  SUBCASE("value loss and entropy terms") {
    algo.entropy_coef = 0.01;
    nn::Graph g;
    const auto p = ppo_terms(g, s.ps, s.cfg, algo, {tr}, {0.5}, {1.5}, true);
    const double v = policy::value(s.obs[0], s.ps, s.cfg);
    REQUIRE(p.value_loss);
    CHECK(p.value_loss->value().item() == doctest::Approx((v - 1.5) * (v - 1.5)).epsilon(1e-12));
    CHECK(p.loss.value().item() == doctest::Approx(-0.5 + 0.5 * (v - 1.5) * (v - 1.5) -
                                                   0.01 * p.entropy.value().item())
                                       .epsilon(1e-12));
  }
}

TEST_CASE("loss gradients match finite differences") {
  TinySetup s;
  REQUIRE(s.ps.parameter_count() <= 2000);
  const policy::Snapshot snap(s.ps, s.cfg);
  auto w = make_trajectory(snap, {s.obs[0], s.obs[1]}, {{1, 2, 3}, {0, 0, 1}}, {0.1, 1.1});
  auto l = make_trajectory(snap, {s.obs[2], s.obs[3]}, {{3, 3, 0}, {2, 1, 0}}, {0.0, 0.0});

  SUBCASE("sft") {
    auto loss = [&](nn::Graph& g, nn::ParameterSet& p) {
      return sft_loss(g, p, s.cfg, {&s.obs[0], &s.obs[1], &s.obs[2]}, {{1, 2, 3}, {0, 0, 1}, {3, 2, 1}});
    };
    CHECK(nn::finite_diff_check(loss, s.ps, 1e-5, 400, 1).max_rel_error <= 1e-4);
  }
  SUBCASE("ppo surrogate inside the clip band") {
    AlgoConfig algo;
    w.records[0].log_prob_old -= std::log(1.05);
    w.records[1].log_prob_old -= std::log(0.97);
    auto loss = [&](nn::Graph& g, nn::ParameterSet& p) {
      return ppo_terms(g, p, s.cfg, algo, {&w.records[0], &w.records[1]}, {0.8, -1.3}, {0.4, -0.2}, true).loss;
    };
    CHECK(nn::finite_diff_check(loss, s.ps, 1e-5, 400, 2).max_rel_error <= 1e-4);
  }
  SUBCASE("tpo") {
    auto loss = [&](nn::Graph& g, nn::ParameterSet& p) { return tpo_loss(g, p, s.cfg, w, l, -3.0, -4.5, 0.7); };
    CHECK(nn::finite_diff_check(loss, s.ps, 1e-5, 400, 3).max_rel_error <= 1e-4);
  }
}

TEST_CASE("single in-band transition: surrogate gradient is A grad log pi") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  auto t = make_trajectory(snap, {s.obs[1]}, {{2, 0, 3}}, {0.0});
  AlgoConfig algo;
  algo.entropy_coef = 0.0;
  const double A = 1.7;
  const auto gs = grads_of(s.ps, [&](nn::Graph& g, nn::ParameterSet& p) {
    return nn::neg(ppo_terms(g, p, s.cfg, algo, {&t.records[0]}, {A}, {0.0}, false).surrogate);
  });
  const auto gl = grads_of(s.ps, [&](nn::Graph& g, nn::ParameterSet& p) {
    return nn::sum(policy::forward(g, p, s.cfg, {&s.obs[1]}, {{2, 0, 3}}, false, 1.0).log_probs);
  });
  double worst = 0.0;
  for (const auto& [k, v] : gs) {
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(-v[i] - A * gl.at(k)[i]));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("tpo anchors") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  const auto w = make_trajectory(snap, {s.obs[0], s.obs[1]}, {{1, 2, 3}, {0, 0, 1}}, {0.1, 1.1});
  const auto l = make_trajectory(snap, {s.obs[2]}, {{3, 3, 0}}, {0.0});
  const double rw = trajectory_log_prob(snap, w, 1.0), rl = trajectory_log_prob(snap, l, 1.0);
  const double beta = 0.4;
  {
    nn::Graph g;
    CHECK(std::abs(tpo_loss(g, s.ps, s.cfg, w, l, rw, rl, beta).value().item() - std::log(2.0)) <= 1e-9);
  }
  {
    // Log-ratio difference of 2 at beta 1.
    nn::Graph g;
    const double v = tpo_loss(g, s.ps, s.cfg, w, l, rw - 2.0, rl, 1.0).value().item();
    CHECK(std::abs(v - 0.126928011042973) <= 1e-9);
  }
  // At theta = ref the gradient is -(beta / 2) grad(log pi(w) - log pi(l)).
  const auto gt = grads_of(s.ps, [&](nn::Graph& g, nn::ParameterSet& p) {
    return tpo_loss(g, p, s.cfg, w, l, rw, rl, beta);
  });
  const auto gd = grads_of(s.ps, [&](nn::Graph& g, nn::ParameterSet& p) {
    return nn::sub(trajectory_log_prob(g, p, s.cfg, w, 1.0), trajectory_log_prob(g, p, s.cfg, l, 1.0));
  });
  double worst = 0.0;
  for (const auto& [k, v] : gt) {
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(v[i] + beta / 2 * gd.at(k)[i]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("one update step moves log-probs the right way") {
  TinySetup s;
  AlgoConfig algo;
  algo.entropy_coef = 0.0;
  algo.learning_rate = 1e-2;
  algo.minibatch_size = 64;

  SUBCASE("ppo with positive advantages") {
    const policy::Snapshot snap(s.ps, s.cfg);
    auto t = make_trajectory(snap, s.obs, {{0, 1, 2}, {3, 3, 1}, {2, 0, 0}, {1, 2, 3}}, {0, 0, 0, 0});
    RolloutBatch b;
    for (const auto& r : t.records) {
      b.transitions.push_back(&r);
      b.advantages.push_back(1.0);
      b.returns.push_back(0.0);
    }
    const double before = sum_log_prob(s.ps, s.cfg, t.records);
    auto opt = make_optimizer(algo);
    ppo_update(b, s.ps, opt, s.cfg, algo, 0);
    CHECK(sum_log_prob(s.ps, s.cfg, t.records) > before);
  }
  SUBCASE("grpo raises the successful trajectory") {
    const policy::Snapshot snap(s.ps, s.cfg);
    auto good = make_trajectory(snap, {s.obs[0], s.obs[1]}, {{0, 1, 2}, {3, 3, 1}}, {0.1, 1.1});
    auto bad = make_trajectory(snap, {s.obs[0], s.obs[2]}, {{3, 0, 0}, {0, 2, 2}}, {0.0, 0.0});
    good.task = bad.task = env::make_task(env::Variant::Training, 0);
    good.episode_seed = bad.episode_seed = 0;
    const double before = sum_log_prob(s.ps, s.cfg, good.records);
    auto opt = make_optimizer(algo);
    grpo_update({{good, bad}}, s.ps, opt, s.cfg, algo, 0);
    CHECK(sum_log_prob(s.ps, s.cfg, good.records) > before);
  }
  SUBCASE("tpo widens the preference margin") {
    const policy::Snapshot snap(s.ps, s.cfg);
    std::vector<Trajectory> ts{make_trajectory(snap, {s.obs[0], s.obs[1]}, {{0, 1, 2}, {3, 3, 1}}, {0.1, 1.1}),
                               make_trajectory(snap, {s.obs[2], s.obs[3]}, {{3, 0, 0}, {0, 2, 2}}, {0.0, 0.0})};
    const std::vector<double> ref{trajectory_log_prob(snap, ts[0], 1.0), trajectory_log_prob(snap, ts[1], 1.0)};
    auto opt = make_optimizer(algo);
    const std::vector<PreferencePair> pairs{PreferencePair{0, 1, 1.2}};
    tpo_update(ts, pairs, ref, s.ps, opt, s.cfg, algo, 8, 0);
    const policy::Snapshot after(s.ps, s.cfg);
    CHECK(trajectory_log_prob(after, ts[0], 1.0) - trajectory_log_prob(after, ts[1], 1.0) > ref[0] - ref[1]);
  }
}

TEST_CASE("grpo batches") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  auto a = make_trajectory(snap, {s.obs[0]}, {{0, 1, 2}}, {0.0});
  auto b = make_trajectory(snap, {s.obs[0]}, {{1, 1, 2}}, {0.0});
  a.task = b.task = env::make_task(env::Variant::Training, 0);
  a.episode_seed = b.episode_seed = 7;

  SUBCASE("all-fail groups give no surrogate gradient") {
    const std::vector<std::vector<Trajectory>> groups{{a, b}};
    const auto batch = make_grpo_batch(groups);
    for (double x : batch.advantages) CHECK(x == 0.0);
    AlgoConfig algo;
    algo.entropy_coef = 0.0;
    const auto gs = grads_of(s.ps, [&](nn::Graph& g, nn::ParameterSet& p) {
      return ppo_terms(g, p, s.cfg, algo, batch.transitions, batch.advantages, batch.returns, false).loss;
    });
    for (const auto& [k, v] : gs) {
      for (double x : v) REQUIRE(x == 0.0);
    }
  }
  SUBCASE("mismatched initial states are rejected") {
    b.episode_seed = 8;
    CHECK_THROWS_AS(make_grpo_batch({{a, b}}), ContractError);
  }
  SUBCASE("default group shape") {
    AlgoConfig algo;
    CHECK(algo.group_size * algo.n_groups == 256);
  }
}

TEST_CASE("rollouts record behaviour log-probs and are deterministic") {
  policy::PolicyConfig cfg;
  const auto ps = policy::init_params(cfg, 8);
  const policy::Snapshot snap(ps, cfg);
  const auto task = env::make_task(env::Variant::Training);
  RolloutOptions ro;
  ro.n_envs = 5;
  ro.temperature = 1.3;
  auto seeds = [](std::size_t i) { return 1000 + i; };
  const auto a = collect_rollouts(snap, task, 100, ro, seeds, 4);
  const auto b = collect_rollouts(snap, task, 100, ro, seeds, 4);
  std::size_t n = 0;
  double worst = 0.0;
  nn::ParameterSet copy = ps;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].episode_seed == 1000 + i);
    REQUIRE(a[i].records.size() == b[i].records.size());
    double ret = 0.0;
    for (std::size_t j = 0; j < a[i].records.size(); ++j) {
      const auto& r = a[i].records[j];
      CHECK(r.tokens == b[i].records[j].tokens);
      CHECK(r.log_prob_old == b[i].records[j].log_prob_old);
      CHECK(r.value == b[i].records[j].value);
      CHECK(r.done == (j + 1 == a[i].records.size()));
      nn::Graph g;
      const auto f = policy::forward(g, copy, cfg, {&r.observation}, {r.tokens}, true, ro.temperature);
      worst = std::max(worst, std::abs(f.log_probs.value().item() - r.log_prob_old));
      worst = std::max(worst, std::abs(f.values->value().item() - r.value));
      ret += r.reward;
      ++n;
    }
    CHECK(ret == doctest::Approx(a[i].total_return).epsilon(1e-12));
  }
  CHECK(worst <= 1e-12);
  CHECK(n >= 100);
  // Stops starting episodes once enough records exist.
  std::size_t without_last = n - a.back().records.size();
  CHECK(without_last < 100 + 5 * 40);
  CHECK_THROWS_AS(collect_rollouts(snap, task, 0, ro, seeds, 4), ContractError);
}

TEST_CASE("truncated rollouts carry a bootstrap value") {
  policy::PolicyConfig cfg;
  auto ps = policy::init_params(cfg, 9);
  for (auto& w : ps.value("value.l3.w").data()) w = 0.5;
  for (auto& w : ps.value("value.l3.b").data()) w = 0.25;
  const policy::Snapshot snap(ps, cfg);
  RolloutOptions ro;
  ro.n_envs = 4;
  const auto ts = run_episodes(snap, env::make_task(env::Variant::Training), {1, 2, 3}, {11, 12, 13}, ro);
  for (const auto& t : ts) {
    if (!t.truncated) continue;
    CHECK(t.records.size() == 40);
    CHECK(t.bootstrap_value != 0.0);
  }
}

TEST_CASE("batch advantage normalization") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  std::vector<Trajectory> ts;
  Rng rng(5);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> r{0.0, rng.uniform() < 0.5 ? 0.1 : 0.0, rng.uniform() < 0.5 ? 1.1 : 0.0};
    auto t = make_trajectory(snap, {s.obs[0], s.obs[1], s.obs[2]}, {{0, 1, 2}, {1, 1, 1}, {2, 0, 1}}, r);
    for (auto& rec : t.records) rec.value = rng.uniform(-0.5, 0.5);
    t.truncated = i % 2 == 0;
    t.bootstrap_value = 0.3;
    ts.push_back(t);
  }
  AlgoConfig algo;
  const auto b = make_ppo_batch(ts, algo);
  REQUIRE(b.advantages.size() == 18);
  double m = 0.0, v = 0.0;
  for (double a : b.advantages) m += a;
  m /= 18;
  for (double a : b.advantages) v += (a - m) * (a - m);
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(std::sqrt(v / 18) - 1.0) < 1e-6);
  // Returns stay unnormalized GAE targets; truncated runs bootstrap.
  const auto& t0 = ts[0];
  const auto g0 = compute_gae({t0.records[0].reward, t0.records[1].reward, t0.records[2].reward},
                              {t0.records[0].value, t0.records[1].value, t0.records[2].value}, 0.3, algo.gamma,
                              algo.lam);
  CHECK(b.returns[2] == doctest::Approx(g0.returns[2]).epsilon(1e-15));
}

TEST_CASE("epoch accounting and numeric failures") {
  TinySetup s;
  const policy::Snapshot snap(s.ps, s.cfg);
  std::vector<Trajectory> ts;
  for (int i = 0; i < 10; ++i) {
    ts.push_back(make_trajectory(snap, s.obs, {{0, 1, 2}, {1, 1, 1}, {2, 0, 1}, {3, 3, 3}}, {0, 0.1, 0, 1.1 * (i % 2)}));
    for (auto& r : ts.back().records) r.value = 0.1 * i;
  }
  AlgoConfig algo;
  algo.minibatch_size = 16;
  const auto batch = make_ppo_batch(ts, algo);  // 40 transitions
  for (int E : {1, 2, 4}) {
    algo.ppo_epochs = E;
    auto ps = s.ps;
    auto opt = make_optimizer(algo);
    const auto st = ppo_update(batch, ps, opt, s.cfg, algo, 3);
    CHECK(st.epochs == E);
    CHECK(st.grad_steps == 3L * E);
    CHECK(opt.step == 3L * E);
  }
  auto ps = s.ps;
  ps.value("lm_head.b").data()[0] = std::nan("");
  auto opt = make_optimizer(algo);
  try {
    ppo_update(batch, ps, opt, s.cfg, algo, 3);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("minibatch 0") != std::string::npos);
  }
}

TEST_CASE("metrics log") {
  const auto dir = std::filesystem::temp_directory_path() / "gridvla_test_metrics";
  std::filesystem::create_directories(dir);
  {
    MetricsLog log(dir / "m.jsonl", false);
    log.write({{"env_steps", 10}, {"success_rate", 0.5}});
    log.write({{"env_steps", 20}});
  }
  std::ifstream f(dir / "m.jsonl");
  std::string line;
  std::getline(f, line);
  CHECK(line == R"({"env_steps":10,"success_rate":0.5})");
  MetricsLog timed;
  timed.write({{"env_steps", 1}});
  CHECK(timed.records()[0].contains("wall_clock_s"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("expert controller through the rollout driver") {
  const auto ts = run_controller([](const env::WorldState& s, Rng&) { return env::scripted_expert(s); },
                                 env::make_task(env::Variant::Training), {1, 2, 3, 4}, 0);
  for (const auto& t : ts) {
    CHECK(t.success);
    CHECK(t.total_return == doctest::Approx(1.2));
  }
}
