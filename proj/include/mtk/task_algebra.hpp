#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mtk {

/// Task-similarity parameter b together with the number of tasks N.
///
/// The task Gram is K_task(b) = I/(1+b) + (b/(1+b)) * 11^T/N. b = 0 decouples
/// the tasks; b -> +inf pools them into one. The latter limit is represented
/// exactly by the pooled flag rather than by a huge finite b.
class TaskCoupling {
 public:
  TaskCoupling(double b, std::size_t n_tasks);
  static TaskCoupling pooled(std::size_t n_tasks);

  double b() const { return b_; }
  std::size_t n_tasks() const { return n_tasks_; }
  bool is_pooled() const { return pooled_; }

  /// Diagonal entry of K_task: (b+N)/((1+b)N).
  double gram_diag() const;
  /// Off-diagonal entry of K_task: b/((1+b)N).
  double gram_offdiag() const;
  double gram(std::size_t i, std::size_t j) const { return i == j ? gram_diag() : gram_offdiag(); }

 private:
  TaskCoupling(std::size_t n_tasks, bool pooled);

  double b_ = 0.0;
  std::size_t n_tasks_ = 1;
  bool pooled_ = false;
};

enum class KernelKind { kLinear, kSquaredExponential };

/// Scalar kernel on the input space.
/// linear:  variance * <x, x'>
/// se:      variance * exp(-|x - x'|^2 / (2 lengthscale^2))
struct BaseKernel {
  KernelKind kind = KernelKind::kLinear;
  std::size_t input_dim = 1;
  double lengthscale = 1.0;
  double variance = 1.0;

  static BaseKernel linear(std::size_t dim, double variance = 1.0);
  static BaseKernel squared_exponential(std::size_t dim, double lengthscale = 1.0, double variance = 1.0);

  double operator()(std::span<const double> x, std::span<const double> y) const;
  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
};

/// K_task(b) materialized from its two scalar entries.
Eigen::MatrixXd task_gram(const TaskCoupling& coupling);

/// Closed-form matrix powers of A(b) = K_task(b)^{-1}. Each has the form
/// alpha * I + beta * 11^T/N. Power -1 equals task_gram. In pooled mode only
/// the bounded powers (-1, -1/2) exist.
enum class TaskPower { kOne, kHalf, kMinusOne, kMinusHalf };
Eigen::MatrixXd task_matrix_power(const TaskCoupling& coupling, TaskPower power);

/// Scalar coefficients (alpha, beta) of the power above.
std::pair<double, double> task_power_coefficients(const TaskCoupling& coupling, TaskPower power);

/// k((i,x),(j,y)) = K_task[i,j] * k_X(x,y). Tasks are 0-based.
double mt_kernel(const TaskCoupling& coupling, const BaseKernel& base, std::size_t i,
                 const Eigen::VectorXd& x, std::size_t j, const Eigen::VectorXd& y);

/// Feature map of the multitask kernel for a linear base kernel: block j of
/// the N*d output holds A^{-1/2}[j,i] * sqrt(variance) * x.
Eigen::VectorXd mt_feature_map(const TaskCoupling& coupling, const BaseKernel& base,
                               const Eigen::VectorXd& x, std::size_t i);

/// Inverse of D + (11^T kron P) for D = blockdiag(blocks) and P commuting with
/// every block: D^{-1} + D^{-1} (11^T kron Q) D^{-1}, with
/// Q = -(I + P sum_l D_l^{-1})^{-1} P.
/// Throws std::invalid_argument on a singular block or a commutation defect
/// larger than 1e-8 * |P| * |D_l| (max-abs norms).
Eigen::MatrixXd kron_sherman_morrison(const std::vector<Eigen::MatrixXd>& blocks, const Eigen::MatrixXd& p);

}  // namespace mtk
