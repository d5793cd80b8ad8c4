#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mtk/errors.hpp"
#include "mtk/posterior.hpp"
#include "test_helpers.hpp"

using namespace mtk;
using mtk::testing::DenseOracle;
using mtk::testing::max_abs;

namespace {

Observation obs1(std::size_t task, double x, double y, std::size_t step) {
  Observation o;
  o.task = task;
  o.point = Eigen::VectorXd::Constant(1, x);
  o.reward = y;
  o.step = step;
  return o;
}

std::vector<Observation> random_log(Stream& rng, std::size_t n, Eigen::Index d, std::size_t t) {
  std::vector<Observation> log;
  for (std::size_t s = 1; s <= t; ++s) log.push_back(mtk::testing::random_observation(rng, n, d, s));
  return log;
}

}  // namespace

TEST_CASE("single observation closed forms") {
  PosteriorState st(TaskCoupling(0.0, 2), BaseKernel::linear(1), 1.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  CHECK(st.mean(0, x) == 0.0);
  CHECK(st.variance(1, x) == doctest::Approx(0.49));
  CHECK(st.info_gain_mt() == 0.0);

  st.update(obs1(0, 1.0, 1.0, 1));
  CHECK(st.cholesky()(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(st.info_gain_mt() == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-15));
  CHECK(st.info_gain_mt() == doctest::Approx(0.34657359).epsilon(1e-8));
  CHECK(st.mean(0, x) == doctest::Approx(0.35));  // x/2
  CHECK(st.mean(1, x) == 0.0);
  CHECK(st.variance(0, Eigen::VectorXd::Constant(1, 1.0)) == doctest::Approx(0.5));
  const auto per = st.info_gain_per_task();
  CHECK(per[0] == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(per[1] == 0.0);
  CHECK(st.info_gain_st() == per[0]);
}

TEST_CASE("input validation") {
  PosteriorState st(TaskCoupling(1.0, 2), BaseKernel::linear(2), 1.0);
  Observation o;
  o.task = 2;
  o.point = Eigen::VectorXd::Zero(2);
  o.step = 1;
  CHECK_THROWS(st.update(o));
  o.task = 0;
  o.point = Eigen::VectorXd::Zero(3);
  CHECK_THROWS(st.update(o));
  o.point = Eigen::VectorXd::Ones(2);
  st.update(o);
  CHECK_THROWS(st.update(o));  // step must increase
  CHECK_THROWS(st.mean(0, Eigen::VectorXd::Zero(1)));
  CHECK_THROWS(st.variance(5, Eigen::VectorXd::Zero(2)));
  CHECK_THROWS_AS(PosteriorState(TaskCoupling(1.0, 2), BaseKernel::linear(2), 0.0), std::invalid_argument);
}

TEST_CASE("property: sequential updates match the dense batch oracle") {
  Stream rng(21, StreamPurpose::kTest);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t n = 1 + rng.below(4);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const double b = rep % 3 == 0 ? 0.0 : std::pow(10.0, 3.0 * rng.uniform() - 1.0);
    const double lambda = 0.1 + rng.uniform();
    const bool se = rep % 4 == 3;
    const auto base = se ? BaseKernel::squared_exponential(static_cast<std::size_t>(d), 0.8) : BaseKernel::linear(static_cast<std::size_t>(d));
    const auto coupling = TaskCoupling(b, n);
    const auto log = random_log(rng, n, d, 10 + rng.below(30));
    PosteriorState st(coupling, base, lambda);
    double prev = 0.0;
    for (const auto& o : log) {
      st.update(o);
      CHECK(st.info_gain_mt() >= prev - 1e-15);
      prev = st.info_gain_mt();
    }
    const DenseOracle oracle(log, coupling, base, lambda);
    CHECK(std::abs(2.0 * st.info_gain_mt() - oracle.log_det()) < 1e-8);
    const Eigen::MatrixXd l = st.cholesky();
    const auto t = static_cast<Eigen::Index>(log.size());
    CHECK(max_abs(l * l.transpose() - oracle.gram - lambda * Eigen::MatrixXd::Identity(t, t)) <
          1e-8 * max_abs(oracle.gram + lambda * Eigen::MatrixXd::Identity(t, t)));
    CHECK(max_abs(st.gram() - oracle.gram) < 1e-14 * std::max(1.0, max_abs(oracle.gram)));
    CHECK(st.alpha().isApprox((oracle.gram + lambda * Eigen::MatrixXd::Identity(t, t)).ldlt().solve(oracle.y), 1e-8));
    for (int q = 0; q < 50; ++q) {
      const auto task = static_cast<std::size_t>(rng.below(n));
      const Eigen::VectorXd x = mtk::testing::ball_point(rng, d);
      const auto [m, v] = st.mean_variance(task, x);
      const auto [mo, vo] = oracle.mean_variance(task, x);
      CHECK(std::abs(m - mo) < 1e-8);
      CHECK(std::abs(v - vo) < 1e-8);
      CHECK(v >= 0.0);
      CHECK(m == st.mean(task, x));
      CHECK(v == st.variance(task, x));
    }
  }
}

TEST_CASE("property: per-task information gains match dense log-dets") {
  Stream rng(22, StreamPurpose::kTest);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.below(3);
    const Eigen::Index d = 3;
    const double lambda = 0.2 + 0.8 * rng.uniform();
    const auto base = BaseKernel::linear(3);
    const auto log = random_log(rng, n, d, 25);
    PosteriorState st(TaskCoupling(2.0, n), base, lambda);
    for (const auto& o : log) st.update(o);
    const auto per = st.info_gain_per_task();
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Observation> own;
      for (const auto& o : log)
        if (o.task == i) {
          own.push_back(o);
          own.back().task = 0;
        }
      const DenseOracle single(own, TaskCoupling(0.0, 1), base, lambda);
      CHECK(std::abs(per[i] - 0.5 * single.log_det()) < 1e-8);
      mx = std::max(mx, per[i]);
      CHECK(max_abs(st.task_base_gram(i) - single.gram) < 1e-14);
    }
    CHECK(st.info_gain_st() == mx);
    const auto counts = st.task_counts();
    std::size_t total = 0;
    for (auto c : counts) total += c;
    CHECK(total == log.size());
  }
}

TEST_CASE("property: b = 0 decouples into independent single-task regressions") {
  Stream rng(23, StreamPurpose::kTest);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 3;
    const Eigen::Index d = 4;
    const double lambda = 0.7;
    const auto base = rep % 2 ? BaseKernel::squared_exponential(4, 1.3) : BaseKernel::linear(4);
    const auto log = random_log(rng, n, d, 15);
    PosteriorState st(TaskCoupling(0.0, n), base, lambda);
    for (const auto& o : log) st.update(o);
    for (int q = 0; q < 50; ++q) {
      const auto task = static_cast<std::size_t>(rng.below(n));
      const Eigen::VectorXd x = mtk::testing::ball_point(rng, d);
      std::vector<Eigen::VectorXd> pts;
      std::vector<double> ys;
      for (const auto& o : log)
        if (o.task == task) {
          pts.push_back(o.point);
          ys.push_back(o.reward);
        }
      const auto [m, v] = mtk::testing::single_task_ridge(pts, ys, base, lambda, x);
      CHECK(std::abs(st.mean(task, x) - m) < 1e-8);
      CHECK(std::abs(st.variance(task, x) - v) < 1e-8);
    }
  }
}

TEST_CASE("property: pooled mode is one regression with ridge lambda N") {
  Stream rng(24, StreamPurpose::kTest);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.below(4);
    const Eigen::Index d = 3;
    const double lambda = 0.3 + rng.uniform();
    const auto base = BaseKernel::linear(3);
    const auto log = random_log(rng, n, d, 20);
    PosteriorState st(TaskCoupling::pooled(n), base, lambda);
    for (const auto& o : log) st.update(o);
    std::vector<Eigen::VectorXd> pts;
    std::vector<double> ys;
    for (const auto& o : log) {
      pts.push_back(o.point);
      ys.push_back(o.reward);
    }
    for (int q = 0; q < 20; ++q) {
      const Eigen::VectorXd x = mtk::testing::ball_point(rng, d);
      const auto [m, v] = mtk::testing::single_task_ridge(pts, ys, base, lambda * static_cast<double>(n), x);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(st.mean(i, x) - m) < 1e-6);
        CHECK(st.mean(i, x) == st.mean(0, x));
      }
    }
  }
}

TEST_CASE("property: variance never increases and stays below lambda at the theorem ridge") {
  Stream rng(25, StreamPurpose::kTest);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.below(5);
    const double b = std::pow(10.0, 4.0 * rng.uniform() - 2.0);
    const double lambda = (n + b) / (n + b * n);
    PosteriorState st(TaskCoupling(b, n), BaseKernel::linear(3), lambda);
    std::vector<std::pair<std::size_t, Eigen::VectorXd>> queries;
    for (int q = 0; q < 20; ++q) queries.emplace_back(rng.below(n), mtk::testing::ball_point(rng, 3));
    std::vector<double> prev;
    for (auto& [i, x] : queries) prev.push_back(st.variance(i, x));
    for (std::size_t s = 1; s <= 30; ++s) {
      st.update(mtk::testing::random_observation(rng, n, 3, s));
      for (std::size_t q = 0; q < queries.size(); ++q) {
        const double v = st.variance(queries[q].first, queries[q].second);
        CHECK(v <= prev[q] + 1e-12);
        CHECK(v <= lambda + 1e-10);
        prev[q] = v;
      }
    }
  }
}

TEST_CASE("property: primal feature-map route equals the dual route") {
  Stream rng(26, StreamPurpose::kTest);
  for (double b : {0.0, 0.3, 4.0, 300.0}) {
    const std::size_t n = 3;
    const auto base = BaseKernel::linear(2, 0.8);
    PosteriorState dual(TaskCoupling(b, n), base, 0.6);
    PrimalRegression primal(TaskCoupling(b, n), base, 0.6);
    for (std::size_t s = 1; s <= 25; ++s) {
      const auto o = mtk::testing::random_observation(rng, n, 2, s);
      dual.update(o);
      primal.update(o);
    }
    for (int q = 0; q < 30; ++q) {
      const auto i = static_cast<std::size_t>(rng.below(n));
      const Eigen::VectorXd x = mtk::testing::normal_vector(rng, 2);
      CHECK(std::abs(dual.mean(i, x) - primal.mean(i, x)) < 1e-8);
      CHECK(std::abs(dual.variance(i, x) - primal.variance(i, x)) < 1e-8);
    }
  }
}

TEST_CASE("linear summaries agree with the generic dual path") {
  Stream rng(27, StreamPurpose::kTest);
  const std::size_t n = 4;
  PosteriorState st(TaskCoupling(1.5, n), BaseKernel::linear(3, 0.5), 0.4);
  for (std::size_t s = 1; s <= 40; ++s) st.update(mtk::testing::random_observation(rng, n, 3, s));
  REQUIRE(st.has_linear_summaries());
  const DenseOracle oracle(st.log(), st.coupling(), st.base(), st.ridge());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& sm = st.linear_summary(i);
    for (int q = 0; q < 10; ++q) {
      const Eigen::VectorXd x = mtk::testing::normal_vector(rng, 3);
      const auto [m, v] = oracle.mean_variance(i, x);
      CHECK(std::abs(sm.w.dot(x) - m) < 1e-8);
      CHECK(std::abs(x.dot(sm.W * x) - v) < 1e-8);
    }
  }
}

TEST_CASE("long runs keep the factor accurate and rebuild is idempotent") {
  Stream rng(28, StreamPurpose::kTest);
  const std::size_t n = 3;
  PosteriorState st(TaskCoupling(10.0, n), BaseKernel::linear(2), 0.05);
  for (std::size_t s = 1; s <= 200; ++s) st.update(mtk::testing::random_observation(rng, n, 2, s));
  CHECK(st.reconstruction_drift() < 1e-8);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  const double m = st.mean(1, x), v = st.variance(1, x), g = st.info_gain_mt();
  st.rebuild();
  CHECK(std::abs(st.mean(1, x) - m) < 1e-9);
  CHECK(std::abs(st.variance(1, x) - v) < 1e-9);
  CHECK(std::abs(st.info_gain_mt() - g) < 1e-9);
  CHECK(st.refactorizations() >= 1);
}

TEST_CASE("incremental cholesky jitter and degeneracy") {
  IncrementalCholesky c;
  c.append(Eigen::VectorXd(), 1.0);
  // Exact duplicate row with no ridge: pivot zero, jitter rescues it once.
  c.append(Eigen::VectorXd::Constant(1, 1.0), 1.0);
  CHECK(c.jitter()[1] > 0.0);
  CHECK(c.jitter()[1] == doctest::Approx(1e-10));
  IncrementalCholesky bad;
  bad.append(Eigen::VectorXd(), 1.0);
  CHECK_THROWS_AS(bad.append(Eigen::VectorXd::Constant(1, 2.0), 1.0), NumericalError);
}

TEST_CASE("information gain bounds") {
  auto [f0, s0] = info_gain_bounds(0.0, 1.0, 3, 10, 2.0);
  CHECK(f0 == doctest::Approx(6.0));
  CHECK(std::isinf(s0));
  auto [f1, s1] = info_gain_bounds(1.0, 1.0, 4, 8, 1.0);
  CHECK(f1 == doctest::Approx(4.0 + 3.5 - 4.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(f1 == doctest::Approx(4.7274).epsilon(1e-4));
  CHECK(s1 == doctest::Approx(9.0));
  CHECK_THROWS_AS(info_gain_bounds(1.0, 1.5, 4, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(info_gain_bounds(1.0, 1.0, 1, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(info_gain_bounds(-1.0, 1.0, 4, 8, 1.0), std::invalid_argument);
}

TEST_CASE("observation log round trip") {
  Stream rng(29, StreamPurpose::kTest);
  std::vector<Observation> log;
  for (std::size_t s = 1; s <= 12; ++s) log.push_back(mtk::testing::random_observation(rng, 3, 2, s));
  std::stringstream ss;
  write_observation_log(ss, log);
  const std::string text = ss.str();
  CHECK(text.rfind("step,task,x_1,x_2,y\n", 0) == 0);
  const auto back = read_observation_log(ss);
  REQUIRE(back.size() == log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    CHECK(back[k].task == log[k].task);
    CHECK(back[k].step == log[k].step);
    CHECK(back[k].reward == log[k].reward);
    CHECK(back[k].point == log[k].point);
  }
  std::stringstream bad("step,task,x_1,y\n1,0,0.5,1\n");  // tasks are 1-based on disk
  CHECK_THROWS_AS(read_observation_log(bad), IoError);
  std::stringstream garbage("step,task,x_1,y\n1,1,abc,1\n");
  CHECK_THROWS_AS(read_observation_log(garbage), IoError);
}
