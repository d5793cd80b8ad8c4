#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "mtk/posterior.hpp"
#include "mtk/task_algebra.hpp"

namespace mtk {

/// Constants entering the confidence widths.
///
/// With these widths the band mu +- beta * sigma holds for all steps, tasks and
/// points with probability at least 1 - 2*delta (not 1 - delta): the log terms
/// use `delta` as given.
struct WidthParams {
  double bound_B = 1.0;        // uniform RKHS-norm bound on each task
  double deviation_eps = 0.0;  // max_i |f_i - f_avg| / B, in [0, 2]
  double delta = 0.1;
  TaskCoupling coupling{0.0, 1};
  double ridge = 1.0;
  /// Replace the t^2 term of the large-b width by its data-dependent
  /// counterpart (sum of per-task effective dimensions).
  bool data_dependent_bias = false;

  void validate() const;
  /// lambda in [1/(1+b), 1], the range in which the widths are claimed valid.
  bool ridge_in_valid_range() const;
};

enum class WidthRule { kNaive = 0, kSmallB = 1, kLargeB = 2, kNew = 3 };

const char* to_string(WidthRule rule);
WidthRule width_rule_from_string(const std::string& name);

struct WidthReport {
  double naive = 0.0;
  double small_b = 0.0;
  double large_b = 0.0;
  double best = 0.0;  // min of the three
  WidthRule attained = WidthRule::kNaive;  // lowest index on exact ties
  std::size_t t = 0;
  double gamma_mt = 0.0;
  double gamma_st = 0.0;

  double select(WidthRule rule) const;
};

double beta_naive(const WidthParams& params, double gamma_mt, std::size_t t);
double beta_small_b(const WidthParams& params, double gamma_st, std::size_t t);
double beta_large_b(const WidthParams& params, double gamma_mt, std::size_t t);
/// Large-b width with the data-dependent bias term; `effective_dim_sum` is
/// sum_l Tr(K_l (K_l + lambda(1+b) I)^{-1}) over the per-task base Grams.
double beta_large_b_data_dependent(const WidthParams& params, double gamma_mt, double effective_dim_sum);
WidthReport beta_new(const WidthParams& params, double gamma_mt, double gamma_st, std::size_t t);

/// sum over tasks of Tr(K_l (K_l + c I)^{-1}) with c = lambda (1 + b).
double effective_dimension_sum(const PosteriorState& state, double b);

/// All widths for the current posterior: gamma^mt and the gamma^st surrogate
/// come from the state, t = number of observations.
WidthReport widths_for(const PosteriorState& state, const WidthParams& params);

enum class CouplingRegime { kManyTasks, kSimilarTasks, kIndependent, kPooled };

struct CouplingChoice {
  TaskCoupling coupling;
  double ridge;
  CouplingRegime regime;
};

/// b = N/eps^2 if T <= N; b = 1/eps^2 if T >= N and eps <= N^{-1/4} T^{-1/2};
/// b = 0 otherwise; lambda = (N+b)/(N+bN). eps = 0 maps to pooled mode with
/// lambda = 1/N.
CouplingChoice select_b_lambda(std::size_t n_tasks, std::size_t horizon, double eps);

/// (N+b)/(N+bN); 1/N in pooled mode.
double theorem_ridge(const TaskCoupling& coupling);

/// (mu - beta sigma, mu + beta sigma) with beta = beta_new of the current state.
/// Throws std::invalid_argument if params disagree with the state's (b, lambda, N).
std::pair<double, double> interval(const PosteriorState& state, const WidthParams& params, std::size_t task,
                                   const Eigen::VectorXd& x);

}  // namespace mtk
