#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mtk/task_algebra.hpp"

namespace mtk {

/// One noisy measurement y of task `task` (0-based) at `point`.
struct Observation {
  std::size_t task = 0;
  Eigen::VectorXd point;
  double reward = 0.0;
  std::size_t step = 0;
};

/// Lower-triangular factor of a growing SPD matrix, extended one row at a time.
class IncrementalCholesky {
 public:
  /// Appends a row/column with off-diagonal entries `cross` (against the
  /// existing rows) and diagonal `diag`. Returns the new pivot. A non-positive
  /// squared pivot gets one jitter of 1e-10 times the mean diagonal; a second
  /// failure throws NumericalError.
  double append(const Eigen::VectorXd& cross, double diag);

  /// Solves L v = rhs for the current factor.
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& rhs) const;

  /// Replaces the factor by a fresh dense factorization of `matrix`.
  void refactor(const Eigen::MatrixXd& matrix);

  std::size_t size() const { return size_; }
  /// ln det(L L^T).
  double log_det() const { return log_det_; }
  Eigen::MatrixXd factor() const { return storage_.topLeftCorner(size_, size_); }
  /// Diagonal jitter that was added to each row (zero for most rows).
  const std::vector<double>& jitter() const { return jitter_; }
  double last_pivot() const { return last_pivot_; }

 private:
  void reserve(std::size_t n);

  Eigen::MatrixXd storage_;
  std::size_t size_ = 0;
  double log_det_ = 0.0;
  double diag_sum_ = 0.0;
  double last_pivot_ = 0.0;
  std::vector<double> jitter_;
};

/// Per-task quadratic summary of the posterior for a linear base kernel:
/// mean(i, x) = w . x and variance(i, x) = x^T W x.
struct LinearTaskSummary {
  Eigen::VectorXd w;
  Eigen::MatrixXd W;
};

/// Multitask kernel ridge regression over an observation log.
///
/// The dual factor L L^T = K_t + lambda I grows by one row per update, so an
/// update costs O(t^2). For a linear base kernel the per-task summaries are
/// maintained alongside at O(N t d) per update; they make pool scans O(d^2)
/// per candidate.
class PosteriorState {
 public:
  PosteriorState(TaskCoupling coupling, BaseKernel base, double ridge);

  void update(const Observation& obs);

  double mean(std::size_t task, const Eigen::VectorXd& x) const;
  /// Clamped at zero after the quadratic-form subtraction.
  double variance(std::size_t task, const Eigen::VectorXd& x) const;
  std::pair<double, double> mean_variance(std::size_t task, const Eigen::VectorXd& x) const;

  /// gamma^mt = 1/2 ln|I + K_t / lambda|.
  double info_gain_mt() const { return 0.5 * log_det_mt_; }
  /// Per-task 1/2 ln|I + K_{t_i} / lambda| over each task's own points and the base kernel.
  std::vector<double> info_gain_per_task() const;
  /// Running maximum over tasks of info_gain_per_task; the surrogate for gamma^st.
  double info_gain_st() const;

  const TaskCoupling& coupling() const { return coupling_; }
  const BaseKernel& base() const { return base_; }
  double ridge() const { return ridge_; }
  std::size_t size() const { return log_.size(); }
  std::size_t n_tasks() const { return coupling_.n_tasks(); }
  const std::vector<Observation>& log() const { return log_; }
  /// Observation count per task.
  std::vector<std::size_t> task_counts() const;

  Eigen::MatrixXd cholesky() const { return chol_.factor(); }
  /// (K_t + lambda I)^{-1} y by back substitution.
  Eigen::VectorXd alpha() const;
  /// Dense multitask Gram K_t (no ridge).
  Eigen::MatrixXd gram() const;
  /// Gram of task i's own points under the base kernel.
  Eigen::MatrixXd task_base_gram(std::size_t task) const;

  bool has_linear_summaries() const { return base_.kind == KernelKind::kLinear; }
  const LinearTaskSummary& linear_summary(std::size_t task) const;

  std::size_t refactorizations() const { return refactorizations_; }
  /// max-abs |L L^T - (K + lambda I + jitter)| relative to max-abs |K + lambda I|.
  double reconstruction_drift() const;
  /// Full refactorization from the log; rebuilds every derived quantity.
  void rebuild();

 private:
  Eigen::VectorXd cross_kernel(std::size_t task, const Eigen::VectorXd& x) const;
  void check_query(std::size_t task, const Eigen::VectorXd& x) const;
  void reset_linear_summaries();

  TaskCoupling coupling_;
  BaseKernel base_;
  double ridge_;
  std::vector<Observation> log_;

  IncrementalCholesky chol_;
  Eigen::VectorXd u_;  // L^{-1} y
  double log_det_mt_ = 0.0;

  std::vector<IncrementalCholesky> task_chol_;
  std::vector<std::vector<std::size_t>> task_rows_;

  // Linear base kernel only: Z_j = L^{-1} D_j (variance * X), one per task.
  std::vector<Eigen::MatrixXd> z_;
  std::vector<LinearTaskSummary> summaries_;

  std::size_t refactorizations_ = 0;
};

/// Same regression solved in the primal over the multitask feature map
/// (linear base kernel only). Independent route used to cross-check the
/// dual state.
class PrimalRegression {
 public:
  PrimalRegression(TaskCoupling coupling, BaseKernel base, double ridge);
  void update(const Observation& obs);
  double mean(std::size_t task, const Eigen::VectorXd& x) const;
  double variance(std::size_t task, const Eigen::VectorXd& x) const;

 private:
  TaskCoupling coupling_;
  BaseKernel base_;
  double ridge_;
  Eigen::MatrixXd precision_;
  Eigen::VectorXd moment_;
};

/// Upper bounds on gamma^mt in terms of gamma^st (requires lambda <= 1, N >= 2):
///   first  = N gamma^st + (b/2)(T - N/4) - (T/2) ln(1+b)
///   second = gamma^st + T/(lambda b), +inf at b = 0.
std::pair<double, double> info_gain_bounds(double b, double ridge, std::size_t n_tasks, std::size_t horizon,
                                           double gamma_st);

/// Observation log CSV: header `step,task,x_1,...,x_d,y`, tasks written 1-based.
void write_observation_log(std::ostream& out, const std::vector<Observation>& log);
void write_observation_log(const std::string& path, const std::vector<Observation>& log);
std::vector<Observation> read_observation_log(std::istream& in);
std::vector<Observation> read_observation_log(const std::string& path);

}  // namespace mtk
