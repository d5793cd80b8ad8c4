#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtk/errors.hpp"
#include "mtk/policies.hpp"

using namespace mtk;

namespace {

constexpr double kRadius = 10.0;

SyntheticSpec small_spec(std::size_t n_tasks = 3, double dev = 0.4) {
  SyntheticSpec s;
  s.dim = 3;
  s.n_tasks = n_tasks;
  s.dev_delta = dev;
  s.pool_size = 300;
  s.sphere_radius = kRadius;
  return s;
}

// Normalized linear kernel k(x,x) = 1 on the sphere; the norm bound scales by the radius.
ProblemConstants constants(const Environment& env, std::size_t horizon) {
  ProblemConstants pc;
  pc.n_tasks = env.n_tasks();
  pc.bound_B = kRadius;
  pc.eps = true_epsilon(env);
  pc.delta = 0.1;
  pc.base = BaseKernel::linear(env.dim(), 1.0 / (kRadius * kRadius));
  pc.horizon = horizon;
  return pc;
}

std::vector<std::size_t> actions(const RunTrace& t) {
  std::vector<std::size_t> a;
  for (const auto& r : t.steps) a.push_back(r.action);
  return a;
}

// Pool of signed unit axis vectors: every norm is exactly one.
Environment axis_env(std::size_t n_tasks, std::size_t dim) {
  PointMatrix pool(static_cast<Eigen::Index>(2 * dim), static_cast<Eigen::Index>(dim));
  pool.setZero();
  for (std::size_t k = 0; k < dim; ++k) {
    pool(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(k)) = 1.0;
    pool(static_cast<Eigen::Index>(2 * k + 1), static_cast<Eigen::Index>(k)) = -1.0;
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_tasks), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n_tasks; ++i) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i % dim)) = 0.5;
  return Environment::linear(w, pool, 1.0);
}

ProblemConstants axis_constants(const Environment& env) {
  ProblemConstants pc;
  pc.n_tasks = env.n_tasks();
  pc.bound_B = 1.0;
  pc.eps = true_epsilon(env);
  pc.base = BaseKernel::linear(env.dim());
  pc.horizon = 50;
  return pc;
}

}  // namespace

TEST_CASE("policy kind names round trip") {
  for (auto k : {PolicyKind::kMtUcb, PolicyKind::kIndependent, PolicyKind::kPooled, PolicyKind::kAdaMtUcb,
                 PolicyKind::kMtAl, PolicyKind::kUniformAl, PolicyKind::kAeLsviAl}) {
    CHECK(policy_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(policy_kind_from_string("thompson"), ConfigError);
  CHECK(is_active_kind(PolicyKind::kUniformAl));
  CHECK_FALSE(is_active_kind(PolicyKind::kPooled));
}

TEST_CASE("config validation") {
  const auto env = axis_env(2, 3);
  auto c = preset_improved(axis_constants(env), 1.0);
  c.kind = PolicyKind::kAdaMtUcb;
  c.eps_grid = {0.2, 0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.eps_grid = {0.0, 0.1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.eps_grid = {0.1, 0.2};
  c.concentration_c = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.concentration_c = 1.0;
  CHECK_NOTHROW(c.validate());

  auto bad = preset_improved(axis_constants(env), 1.0);
  bad.width.delta = 0.0;
  CHECK_THROWS_AS(MtUcb(bad, env), ConfigError);
  auto wrong_dim = preset_improved(axis_constants(env), 1.0);
  wrong_dim.base = BaseKernel::linear(5);
  CHECK_THROWS_AS(MtUcb(wrong_dim, env), ConfigError);
}

TEST_CASE("mt-ucb on an empty history picks index 0 among equal-norm points") {
  const auto env = axis_env(2, 3);
  const MtUcb p(preset_improved(axis_constants(env), 1.0), env);
  for (std::size_t i = 0; i < 2; ++i) CHECK(p.act(i).index == 0);
}

TEST_CASE("mt-ucb action matches a brute-force pool scan") {
  const auto env = generate_synthetic(small_spec(), 11);
  for (double b : {0.0, 0.3, 4.0}) {
    MtUcb p(preset_improved(constants(env, 40), b), env);
    Stream rng(3, StreamPurpose::kTest);
    for (std::size_t t = 1; t <= 25; ++t) {
      const auto task = static_cast<std::size_t>(rng.below(env.n_tasks()));
      const Decision d = p.act(task);
      std::size_t best = 0;
      double best_v = -1e300;
      for (std::size_t k = 0; k < env.pool_size(task); ++k) {
        const double v = p.ucb(task, k);
        if (v > best_v) best_v = v, best = k;
      }
      REQUIRE(d.index == best);
      CHECK(d.ucb == doctest::Approx(best_v).epsilon(1e-12));
      // One large positive reward steers the next pick.
      p.observe(task, d.index, t == 1 ? 50.0 : rng.normal(), t);
    }
  }
}

TEST_CASE("zero width reduces the scan to greedy argmax of the mean") {
  const auto env = generate_synthetic(small_spec(), 5);
  MtUcb p(preset_improved(constants(env, 20), 0.5), env);
  Stream noise(5, StreamPurpose::kNoise);
  for (std::size_t t = 1; t <= 10; ++t) p.observe(t % 3, t * 7, env.feedback(t % 3, t * 7, noise), t);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto r = pool_scan::ucb_argmax(env.pool(i), p.posterior().linear_summary(i), 0.0);
    std::size_t best = 0;
    for (std::size_t k = 1; k < env.pool_size(i); ++k) {
      if (p.mean_sd(i, k).first > p.mean_sd(i, best).first) best = k;
    }
    CHECK(r.index == best);
  }
}

TEST_CASE("independent baseline equals mt-ucb at b = 0 trajectory-wise") {
  const auto env = generate_synthetic(small_spec(), 21);
  const auto pc = constants(env, 60);
  const auto indep = preset_independent(pc);
  auto same = indep;
  same.kind = PolicyKind::kMtUcb;
  CHECK(indep.width.coupling.b() == 0.0);
  CHECK(indep.width.ridge == 1.0);
  CHECK(indep.rule == WidthRule::kSmallB);
  const auto a = run_online(indep, env, 60, 4);
  const auto b = run_online(same, env, 60, 4);
  CHECK(actions(a) == actions(b));
  CHECK(a.final_regret() == b.final_regret());
}

TEST_CASE("pooled baseline equals mt-ucb in pooled mode") {
  const auto env = generate_synthetic(small_spec(3, 0.0), 8);
  const auto pc = constants(env, 40);
  const auto pooled = preset_pooled(pc);
  CHECK(pooled.width.coupling.is_pooled());
  CHECK(pooled.width.ridge == doctest::Approx(1.0 / 3.0));
  auto same = pooled;
  same.kind = PolicyKind::kMtUcb;
  CHECK(actions(run_online(pooled, env, 40, 9)) == actions(run_online(same, env, 40, 9)));
}

TEST_CASE("misspecification test examples") {
  CHECK(misspec_slack(1, 0.1, 1.0) == doctest::Approx(std::sqrt(std::log(std::log(3.0) / 0.1))));
  CHECK(misspec_slack(10, 0.1, 2.0) == doctest::Approx(2.0 * std::sqrt(10.0 * std::log(std::log(10.0) / 0.1))));
  // Every L at or below U with R >= 0 can never fire.
  for (std::size_t tau : {1u, 5u, 100u}) CHECK_FALSE(misspec_test(3.0, 0.0, tau, 3.0, 0.1, 1.0));
  // Constant chosen so that the slack is exactly one.
  const std::size_t tau = 10;
  const double c = 1.0 / misspec_slack(tau, 0.1, 1.0);
  CHECK(misspec_slack(tau, 0.1, c) == doctest::Approx(1.0));
  CHECK(misspec_test(0.0, 0.0, tau, 2.0, 0.1, c));
  CHECK_FALSE(misspec_test(0.0, 0.0, tau, 0.5, 0.1, c));
  CHECK_FALSE(misspec_test(0.0, 0.0, tau, 1.0, 0.1, c));  // strict
}

TEST_CASE("single-value grid follows mt-ucb with that deviation") {
  const auto env = generate_synthetic(small_spec(), 31);
  const auto pc = constants(env, 80);
  const double e = std::min(2.0, std::ceil(pc.eps * 10.0) / 10.0);

  SUBCASE("fixed coupling") {
    auto ada = preset_improved(pc, 1.0);
    ada.kind = PolicyKind::kAdaMtUcb;
    ada.eps_grid = {e};
    ada.ada_coupling = AdaCoupling::kFixed;
    auto ref = preset_improved(pc, 1.0);
    ref.width.deviation_eps = e;
    const auto a = run_online(ada, env, 80, 2);
    CHECK(a.events.empty());
    CHECK(actions(a) == actions(run_online(ref, env, 80, 2)));
  }
  SUBCASE("theorem coupling") {
    auto ada = preset_improved(pc, 1.0);
    ada.kind = PolicyKind::kAdaMtUcb;
    ada.eps_grid = {e};
    auto pc_e = pc;
    pc_e.eps = e;
    const auto ref = preset_theorem(pc_e);
    CHECK(actions(run_online(ada, env, 80, 2)) == actions(run_online(ref, env, 80, 2)));
  }
}

TEST_CASE("eviction resets the accumulators and the last eviction is a config error") {
  const auto env = axis_env(2, 3);
  auto cfg = preset_improved(axis_constants(env), 1.0);
  cfg.kind = PolicyKind::kAdaMtUcb;
  cfg.eps_grid = {0.5, 1.0};
  cfg.ada_coupling = AdaCoupling::kFixed;
  cfg.concentration_c = 1e-9;
  AdaMtUcb ada(cfg, env);
  CHECK(ada.current_eps() == 0.5);

  // A benign observation accumulates without firing.
  CHECK_FALSE(ada.observe(0, 0, 0.5, 1).has_value());
  CHECK(ada.tau() == 1);
  CHECK(ada.accum_U() == 0.5);
  CHECK(ada.accum_R() > 0.0);

  // A reward far below every lower bound fires the test.
  const auto ev = ada.observe(1, 2, -1e6, 2);
  REQUIRE(ev.has_value());
  CHECK(*ev == 0.5);
  CHECK(ada.epoch() == 1);
  CHECK(ada.tau() == 0);
  CHECK(ada.accum_U() == 0.0);
  CHECK(ada.accum_R() == 0.0);
  CHECK(ada.accum_L() == std::vector<double>{0.0});
  CHECK(ada.surviving() == std::vector<double>{1.0});
  CHECK(ada.current_eps() == 1.0);
  // The surviving learner saw both observations.
  CHECK(ada.learner(1.0).posterior().size() == 2);

  CHECK_THROWS_AS(ada.observe(1, 3, -1e9, 3), ConfigError);
}

TEST_CASE("query rules break ties toward index 0") {
  const std::vector<double> same{0.7, 0.7, 0.7};
  CHECK(mtal_query(same) == 0);
  CHECK(aelsvi_query(same, std::vector<double>{0.1, 0.1, 0.1}) == 0);
  CHECK(mtal_query(std::vector<double>{0.1, 0.9, 0.9}) == 1);
  CHECK(aelsvi_query(std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{0.5, 0.2, 0.8}) == 1);
  CHECK_THROWS(mtal_query(std::vector<double>{}));
  CHECK_THROWS(aelsvi_query(std::vector<double>{1.0}, std::vector<double>{}));
}

TEST_CASE("mt-al on identical empty tasks queries task 0") {
  const auto env = axis_env(3, 3);
  auto cfg = preset_improved(axis_constants(env), 1.0);
  cfg.kind = PolicyKind::kMtAl;
  ActiveLearner al(cfg, env, 1);
  CHECK(al.act().query_task == 0);
  cfg.kind = PolicyKind::kAeLsviAl;
  ActiveLearner ae(cfg, env, 1);
  CHECK(ae.act().query_task == 0);
}

TEST_CASE("mt-al queries the unobserved task") {
  const auto env = generate_synthetic(small_spec(3), 13);
  auto cfg = preset_improved(constants(env, 100), 0.1);
  cfg.kind = PolicyKind::kMtAl;
  ActiveLearner al(cfg, env, 1);
  Stream noise(1, StreamPurpose::kNoise);
  std::size_t step = 0;
  for (std::size_t rep = 0; rep < 30; ++rep) {
    for (std::size_t task : {1u, 2u}) {
      const std::size_t k = (rep * 37 + task * 11) % env.pool_size(task);
      al.observe(task, k, env.feedback(task, k, noise), ++step);
    }
  }
  const auto d = al.act();
  CHECK(d.query_task == 0);
  // Exhaustive comparison of sigma at each task's recommendation.
  for (std::size_t i = 1; i < 3; ++i) CHECK(d.sigma[0] > d.sigma[i]);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d.score[i] == doctest::Approx(d.beta * d.sigma[i]));
}

TEST_CASE("aelsvi score is truncated by the band width and matches a double scan") {
  const auto env = generate_synthetic(small_spec(4), 17);
  auto cfg = preset_improved(constants(env, 100), 0.5);
  cfg.kind = PolicyKind::kAeLsviAl;
  ActiveLearner al(cfg, env, 3);
  Stream noise(3, StreamPurpose::kNoise);
  for (std::size_t t = 1; t <= 30; ++t) {
    const auto d = al.act();
    const MtUcb& m = al.model();
    std::vector<double> brute(env.n_tasks());
    for (std::size_t i = 0; i < env.n_tasks(); ++i) {
      // ucb - lcb at the recommendation is 2 beta sigma.
      CHECK(d.score[i] <= 2.0 * d.beta * d.sigma[i] + 1e-9);
      double best_lcb = -1e300;
      for (std::size_t k = 0; k < env.pool_size(i); ++k) best_lcb = std::max(best_lcb, m.lcb(i, k));
      std::size_t rec = 0;
      for (std::size_t k = 1; k < env.pool_size(i); ++k) {
        if (m.ucb(i, k) > m.ucb(i, rec)) rec = k;
      }
      CHECK(rec == d.recommended[i]);
      brute[i] = m.ucb(i, rec) - best_lcb;
      CHECK(d.score[i] == doctest::Approx(brute[i]).epsilon(1e-10));
    }
    CHECK(d.query_task == static_cast<std::size_t>(std::max_element(brute.begin(), brute.end()) - brute.begin()));
    const std::size_t q = d.query_task;
    al.observe(q, d.recommended[q], env.feedback(q, d.recommended[q], noise), t);
  }
}

TEST_CASE("uniform-al query frequencies are 1/N") {
  const auto env = axis_env(4, 3);
  auto cfg = preset_improved(axis_constants(env), 1.0);
  cfg.kind = PolicyKind::kUniformAl;
  ActiveLearner al(cfg, env, 77);
  std::vector<int> counts(4, 0);
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) ++counts[al.act().query_task];
  const double p = 0.25, tol = 4.0 * std::sqrt(p * (1 - p) / draws);
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(draws) - p) < tol);
}

TEST_CASE("online runs: nonnegative regret, determinism, protocol checks") {
  const auto env = generate_synthetic(small_spec(), 41);
  const auto pc = constants(env, 50);
  std::vector<PolicyConfig> cfgs{preset_independent(pc), preset_naive(pc, 1.0), preset_improved(pc, 1.0),
                                 preset_theorem(pc), preset_pooled(pc)};
  auto ada = preset_improved(pc, 1.0);
  ada.kind = PolicyKind::kAdaMtUcb;
  ada.eps_grid = {0.1, 0.5, 1.0, 2.0};
  cfgs.push_back(ada);
  for (const auto& c : cfgs) {
    CAPTURE(c.label);
    const auto a = run_online(c, env, 50, 6);
    const auto b = run_online(c, env, 50, 6);
    REQUIRE(a.steps.size() == 50);
    double prev = 0.0;
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
      CHECK(a.steps[t].regret >= 0.0);
      CHECK(a.steps[t].cum_regret >= prev);
      prev = a.steps[t].cum_regret;
      CHECK(a.steps[t].action == b.steps[t].action);
      CHECK(a.steps[t].reward == b.steps[t].reward);
    }
  }
  // Common random numbers: the revealed task sequence does not depend on the policy.
  const auto x = run_online(cfgs[0], env, 50, 6), y = run_online(cfgs[2], env, 50, 6);
  for (std::size_t t = 0; t < 50; ++t) CHECK(x.steps[t].task == y.steps[t].task);

  auto al = cfgs[2];
  al.kind = PolicyKind::kMtAl;
  CHECK_THROWS_AS(run_online(al, env, 5, 1), ConfigError);
  CHECK_THROWS_AS(run_active(cfgs[2], env, 5, 1), ConfigError);
}

TEST_CASE("audited runs: coverage implies per-step and cumulative width bounds") {
  const auto env = generate_synthetic(small_spec(), 51);
  const auto pc = constants(env, 40);
  const AuditOptions audit{true, true};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto on = run_online(preset_improved(pc, 1.0), env, 40, seed, audit);
    CHECK(on.audit.coverage_checked);
    if (on.audit.coverage_held) CHECK(on.audit.bound_violations == 0);
    CHECK(on.audit.max_variance_excess <= 1e-10);

    auto cfg = preset_improved(pc, 1.0);
    cfg.kind = PolicyKind::kMtAl;
    const auto al = run_active(cfg, env, 40, seed, audit);
    CHECK(al.audit.max_variance_excess <= 1e-10);
    if (al.audit.coverage_held) {
      CHECK(al.audit.bound_violations == 0);
      CHECK(al.final_regret() <= al.bound_sum() + 1e-9);
    }
    double prev = 0.0;
    for (const auto& r : al.steps) {
      CHECK(r.regret >= 0.0);
      CHECK(r.cum_regret >= prev);
      prev = r.cum_regret;
    }
  }
}
