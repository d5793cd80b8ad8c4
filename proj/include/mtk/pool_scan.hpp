#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "mtk/posterior.hpp"

namespace mtk {

/// Candidate pool, one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ScanResult {
  std::size_t index = 0;
  double value = 0.0;
};

/// mu + beta * sigma, with the convention beta * 0 = 0 (so an infinite width
/// never produces NaN at a zero-variance point).
inline double ucb_value(double mu, double sd, double beta) { return sd > 0.0 ? mu + beta * sd : mu; }
inline double lcb_value(double mu, double sd, double beta) { return sd > 0.0 ? mu - beta * sd : mu; }

/// Pool-wide posterior kernels. The OpenMP versions split the pool across
/// threads; argmax/argmin results break ties by the lowest pool index, so the
/// output does not depend on the thread count.
namespace pool_scan {

/// argmax over the pool of the upper confidence bound for one task.
ScanResult ucb_argmax(const PointMatrix& pool, const LinearTaskSummary& summary, double beta);
/// Generic base kernel: evaluates the dual posterior per candidate.
ScanResult ucb_argmax(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta);

/// max over the pool of mu - beta * sigma.
ScanResult lcb_max(const PointMatrix& pool, const LinearTaskSummary& summary, double beta);
ScanResult lcb_max(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta);

/// Posterior mean and variance at every pool point.
void mean_variance(const PointMatrix& pool, const LinearTaskSummary& summary, std::span<double> mean,
                   std::span<double> variance);

/// max over the pool of |mu - truth| - beta * sigma; positive means the band
/// misses the truth somewhere.
double max_band_violation(const PointMatrix& pool, const LinearTaskSummary& summary, double beta,
                          std::span<const double> truth);
/// max over the pool of the posterior variance.
double max_variance(const PointMatrix& pool, const LinearTaskSummary& summary);

}  // namespace pool_scan

/// Straightforward serial versions of the kernels above, kept as the
/// reference the parallel ones are tested and benchmarked against.
namespace pool_scan::reference {

ScanResult ucb_argmax(const PointMatrix& pool, const LinearTaskSummary& summary, double beta);
ScanResult ucb_argmax(const PointMatrix& pool, const PosteriorState& state, std::size_t task, double beta);
ScanResult lcb_max(const PointMatrix& pool, const LinearTaskSummary& summary, double beta);
void mean_variance(const PointMatrix& pool, const LinearTaskSummary& summary, std::span<double> mean,
                   std::span<double> variance);
double max_band_violation(const PointMatrix& pool, const LinearTaskSummary& summary, double beta,
                          std::span<const double> truth);

}  // namespace pool_scan::reference

}  // namespace mtk
