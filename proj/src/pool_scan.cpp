#include "mtk/pool_scan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mtk::pool_scan {

namespace {

constexpr Eigen::Index kParallelThreshold = 2048;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline void check_dims(const PointMatrix& pool, const LinearTaskSummary& s) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  if (pool.cols() != s.w.size()) throw std::invalid_argument("pool scan: pool dimension does not match posterior");
}

// mu = w.x, var = x^T W x. W is symmetric and tiny (d x d); an explicit loop
// keeps the inner body allocation free.
inline void eval_point(const double* x, const LinearTaskSummary& s, double& mu, double& var) {
  const Eigen::Index d = s.w.size();
  double m = 0.0;
  double q = 0.0;
  for (Eigen::Index a = 0; a < d; ++a) {
    m += s.w[a] * x[a];
    double row = 0.0;
    for (Eigen::Index b = 0; b < d; ++b) row += s.W(a, b) * x[b];
    q += x[a] * row;
  }
  mu = m;
  var = q > 0.0 ? q : 0.0;
}

inline bool better(double v, std::size_t i, double best_v, std::size_t best_i) {
  return v > best_v || (v == best_v && i < best_i);
}

template <typename ValueFn>
ScanResult parallel_argmax(Eigen::Index n, ValueFn&& value_of) {
  ScanResult best{0, kNegInf};
  bool have = false;
#pragma omp parallel if (n >= kParallelThreshold)
  {
    ScanResult local{0, kNegInf};
    bool local_have = false;
#pragma omp for schedule(static) nowait
    for (Eigen::Index k = 0; k < n; ++k) {
      const double v = value_of(k);
      const auto idx = static_cast<std::size_t>(k);
      if (!local_have || better(v, idx, local.value, local.index)) {
        local = {idx, v};
        local_have = true;
      }
    }
#pragma omp critical(mtk_pool_scan_argmax)
    {
      if (local_have && (!have || better(local.value, local.index, best.value, best.index))) {
        best = local;
        have = true;
      }
    }
  }
  return best;
}

}  // namespace

ScanResult ucb_argmax(const PointMatrix& pool, const LinearTaskSummary& summary, double beta) {
  check_dims(pool, summary);
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    double mu, var;
    eval_point(pool.row(k).data(), summary, mu, var);
    return ucb_value(mu, std::sqrt(var), beta);
  });
}

ScanResult ucb_argmax(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    const auto [mu, var] = state.mean_variance(task, pool.row(k).transpose());
    return ucb_value(mu, std::sqrt(var), beta);
  });
}

ScanResult lcb_max(const PointMatrix& pool, const LinearTaskSummary& summary, double beta) {
  check_dims(pool, summary);
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    double mu, var;
    eval_point(pool.row(k).data(), summary, mu, var);
    return lcb_value(mu, std::sqrt(var), beta);
  });
}

ScanResult lcb_max(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    const auto [mu, var] = state.mean_variance(task, pool.row(k).transpose());
    return lcb_value(mu, std::sqrt(var), beta);
  });
}

void mean_variance(const PointMatrix& pool, const LinearTaskSummary& summary, std::span<double> mean,
                   std::span<double> variance) {
  check_dims(pool, summary);
  const Eigen::Index n = pool.rows();
  if (mean.size() != static_cast<std::size_t>(n) || variance.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("pool scan: output size mismatch");
  }
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
  for (Eigen::Index k = 0; k < n; ++k) {
    eval_point(pool.row(k).data(), summary, mean[static_cast<std::size_t>(k)], variance[static_cast<std::size_t>(k)]);
  }
}

double max_band_violation(const PointMatrix& pool, const LinearTaskSummary& summary, double beta,
                          std::span<const double> truth) {
  check_dims(pool, summary);
  if (truth.size() != static_cast<std::size_t>(pool.rows())) throw std::invalid_argument("pool scan: truth size mismatch");
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    double mu, var;
    eval_point(pool.row(k).data(), summary, mu, var);
    const double sd = std::sqrt(var);
    const double half = sd > 0.0 ? beta * sd : 0.0;
    return std::abs(mu - truth[static_cast<std::size_t>(k)]) - half;
  }).value;
}

double max_variance(const PointMatrix& pool, const LinearTaskSummary& summary) {
  check_dims(pool, summary);
  return parallel_argmax(pool.rows(), [&](Eigen::Index k) {
    double mu, var;
    eval_point(pool.row(k).data(), summary, mu, var);
    return var;
  }).value;
}

}  // namespace mtk::pool_scan

namespace mtk::pool_scan::reference {

namespace {

void eval(const PointMatrix& pool, Eigen::Index k, const LinearTaskSummary& s, double& mu, double& var) {
  const Eigen::VectorXd x = pool.row(k).transpose();
  mu = s.w.dot(x);
  var = std::max(0.0, x.dot(s.W * x));
}

}  // namespace

ScanResult ucb_argmax(const PointMatrix& pool, const LinearTaskSummary& summary, double beta) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  ScanResult best{0, 0.0};
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    double mu, var;
    eval(pool, k, summary, mu, var);
    const double v = ucb_value(mu, std::sqrt(var), beta);
    if (k == 0 || v > best.value) best = {static_cast<std::size_t>(k), v};
  }
  return best;
}

ScanResult ucb_argmax(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  ScanResult best{0, 0.0};
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    const double mu = state.mean(task, pool.row(k).transpose());
    const double var = state.variance(task, pool.row(k).transpose());
    const double v = ucb_value(mu, std::sqrt(var), beta);
    if (k == 0 || v > best.value) best = {static_cast<std::size_t>(k), v};
  }
  return best;
}

ScanResult lcb_max(const PointMatrix& pool, const LinearTaskSummary& summary, double beta) {
  if (pool.rows() == 0) throw std::invalid_argument("pool scan: empty candidate pool");
  ScanResult best{0, 0.0};
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    double mu, var;
    eval(pool, k, summary, mu, var);
    const double v = lcb_value(mu, std::sqrt(var), beta);
    if (k == 0 || v > best.value) best = {static_cast<std::size_t>(k), v};
  }
  return best;
}

void mean_variance(const PointMatrix& pool, const LinearTaskSummary& summary, std::span<double> mean,
                   std::span<double> variance) {
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    eval(pool, k, summary, mean[static_cast<std::size_t>(k)], variance[static_cast<std::size_t>(k)]);
  }
}

double max_band_violation(const PointMatrix& pool, const LinearTaskSummary& summary, double beta,
                          std::span<const double> truth) {
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    double mu, var;
    eval(pool, k, summary, mu, var);
    const double sd = std::sqrt(var);
    worst = std::max(worst, std::abs(mu - truth[static_cast<std::size_t>(k)]) - (sd > 0.0 ? beta * sd : 0.0));
  }
  return worst;
}

}  // namespace mtk::pool_scan::reference
