#include "mtk/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mtk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double variance_term(double ridge, double gamma, double log_arg_term) {
  return std::sqrt(2.0 * std::max(0.0, gamma + log_arg_term)) / std::sqrt(ridge);
}

void settle_minimum(WidthReport& r) {
  r.best = r.naive;
  r.attained = WidthRule::kNaive;
  if (r.small_b < r.best) {
    r.best = r.small_b;
    r.attained = WidthRule::kSmallB;
  }
  if (r.large_b < r.best) {
    r.best = r.large_b;
    r.attained = WidthRule::kLargeB;
  }
}

}  // namespace

void WidthParams::validate() const {
  if (!(bound_B > 0.0)) throw std::invalid_argument("width params: B must be > 0");
  if (!(deviation_eps >= 0.0 && deviation_eps <= 2.0)) throw std::invalid_argument("width params: eps must lie in [0, 2]");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("width params: delta must lie in (0, 1]");
  if (!(ridge > 0.0)) throw std::invalid_argument("width params: lambda must be > 0");
}

bool WidthParams::ridge_in_valid_range() const {
  if (coupling.is_pooled()) return ridge <= 1.0;
  return ridge >= 1.0 / (1.0 + coupling.b()) - 1e-15 && ridge <= 1.0;
}

const char* to_string(WidthRule rule) {
  switch (rule) {
    case WidthRule::kNaive: return "naive";
    case WidthRule::kSmallB: return "small_b";
    case WidthRule::kLargeB: return "large_b";
    case WidthRule::kNew: return "new";
  }
  return "?";
}

WidthRule width_rule_from_string(const std::string& name) {
  if (name == "naive") return WidthRule::kNaive;
  if (name == "small_b" || name == "small-b") return WidthRule::kSmallB;
  if (name == "large_b" || name == "large-b") return WidthRule::kLargeB;
  if (name == "new" || name == "improved") return WidthRule::kNew;
  throw std::invalid_argument("unknown width rule '" + name + "'");
}

double WidthReport::select(WidthRule rule) const {
  switch (rule) {
    case WidthRule::kNaive: return naive;
    case WidthRule::kSmallB: return small_b;
    case WidthRule::kLargeB: return large_b;
    case WidthRule::kNew: return best;
  }
  return best;
}

double beta_naive(const WidthParams& p, double gamma_mt, std::size_t /*t*/) {
  const double n = static_cast<double>(p.coupling.n_tasks());
  const double var = variance_term(p.ridge, gamma_mt, std::log(1.0 / p.delta));
  if (p.coupling.is_pooled()) return p.deviation_eps == 0.0 ? p.bound_B * std::sqrt(n) + var : kInf;
  const double b = p.coupling.b();
  const double eps = p.deviation_eps;
  return p.bound_B * std::sqrt(n * (1.0 + b * eps * eps)) + var;
}

double beta_small_b(const WidthParams& p, double gamma_st, std::size_t /*t*/) {
  if (p.coupling.is_pooled()) return kInf;
  const double n = static_cast<double>(p.coupling.n_tasks());
  const double b = p.coupling.b();
  const double eps = p.deviation_eps;
  const double bias = p.bound_B * (1.0 + b * eps) * std::sqrt((1.0 + b * n) / (1.0 + b));
  const double var = std::sqrt(2.0 * (1.0 + b * n) * std::max(0.0, gamma_st + std::log(n / p.delta))) / std::sqrt(p.ridge);
  return bias + var;
}

double beta_large_b(const WidthParams& p, double gamma_mt, std::size_t t) {
  const double n = static_cast<double>(p.coupling.n_tasks());
  const double var = variance_term(p.ridge, gamma_mt, std::log(1.0 / p.delta));
  if (p.coupling.is_pooled()) return p.deviation_eps == 0.0 ? p.bound_B * std::sqrt(2.0 * n) + var : kInf;
  const double b = p.coupling.b();
  const double eps = p.deviation_eps;
  const double lam = p.ridge;
  const double tt = static_cast<double>(t);
  const double g = (1.0 + b * eps) * (1.0 + b * eps);
  const double inner = g / (1.0 + b) + 2.0 * b * n / (1.0 + b) +
                       2.0 * b * g * tt * tt / (n * lam * lam * std::pow(1.0 + b, 3));
  return p.bound_B * std::sqrt(inner) + var;
}

double beta_large_b_data_dependent(const WidthParams& p, double gamma_mt, double effective_dim_sum) {
  const double n = static_cast<double>(p.coupling.n_tasks());
  const double var = variance_term(p.ridge, gamma_mt, std::log(1.0 / p.delta));
  if (p.coupling.is_pooled()) return p.deviation_eps == 0.0 ? p.bound_B * std::sqrt(2.0 * n) + var : kInf;
  const double b = p.coupling.b();
  const double g = (1.0 + b * p.deviation_eps) * (1.0 + b * p.deviation_eps);
  const double s = effective_dim_sum;
  const double inner = g / (1.0 + b) + 2.0 * b * n / (1.0 + b) + 2.0 * b * g * s * s / (n * (1.0 + b));
  return p.bound_B * std::sqrt(inner) + var;
}

WidthReport beta_new(const WidthParams& p, double gamma_mt, double gamma_st, std::size_t t) {
  WidthReport r;
  r.t = t;
  r.gamma_mt = gamma_mt;
  r.gamma_st = gamma_st;
  r.naive = beta_naive(p, gamma_mt, t);
  r.small_b = beta_small_b(p, gamma_st, t);
  r.large_b = beta_large_b(p, gamma_mt, t);
  settle_minimum(r);
  return r;
}

double effective_dimension_sum(const PosteriorState& state, double b) {
  const double c = state.ridge() * (1.0 + b);
  double total = 0.0;
  for (std::size_t i = 0; i < state.n_tasks(); ++i) {
    const Eigen::MatrixXd k = state.task_base_gram(i);
    if (k.rows() == 0) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k, Eigen::EigenvaluesOnly);
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      const double ev = std::max(0.0, eig.eigenvalues()(j));
      total += ev / (ev + c);
    }
  }
  return total;
}

WidthReport widths_for(const PosteriorState& state, const WidthParams& params) {
  WidthReport r = beta_new(params, state.info_gain_mt(), state.info_gain_st(), state.size());
  if (params.data_dependent_bias && !params.coupling.is_pooled()) {
    r.large_b = beta_large_b_data_dependent(params, r.gamma_mt, effective_dimension_sum(state, params.coupling.b()));
    settle_minimum(r);
  }
  return r;
}

double theorem_ridge(const TaskCoupling& coupling) {
  const double n = static_cast<double>(coupling.n_tasks());
  if (coupling.is_pooled()) return 1.0 / n;
  const double b = coupling.b();
  return (n + b) / (n + b * n);
}

CouplingChoice select_b_lambda(std::size_t n_tasks, std::size_t horizon, double eps) {
  if (n_tasks == 0 || horizon == 0) throw std::invalid_argument("select_b_lambda: need N >= 1 and T >= 1");
  if (!(eps >= 0.0 && eps <= 2.0)) throw std::invalid_argument("select_b_lambda: eps must lie in [0, 2]");
  if (eps == 0.0) {
    const auto c = TaskCoupling::pooled(n_tasks);
    return {c, theorem_ridge(c), CouplingRegime::kPooled};
  }
  const double n = static_cast<double>(n_tasks);
  const double t = static_cast<double>(horizon);
  double b = 0.0;
  CouplingRegime regime = CouplingRegime::kIndependent;
  if (horizon <= n_tasks) {
    b = n / (eps * eps);
    regime = CouplingRegime::kManyTasks;
  } else if (eps <= std::pow(n, -0.25) / std::sqrt(t)) {
    b = 1.0 / (eps * eps);
    regime = CouplingRegime::kSimilarTasks;
  }
  const TaskCoupling c(b, n_tasks);
  return {c, theorem_ridge(c), regime};
}

std::pair<double, double> interval(const PosteriorState& state, const WidthParams& params, std::size_t task,
                                   const Eigen::VectorXd& x) {
  const auto& c = state.coupling();
  const bool same_b = c.is_pooled() ? params.coupling.is_pooled()
                                    : (!params.coupling.is_pooled() && params.coupling.b() == c.b());
  if (!same_b || params.coupling.n_tasks() != c.n_tasks() || params.ridge != state.ridge()) {
    throw std::invalid_argument("interval: width parameters disagree with the posterior's (b, lambda, N)");
  }
  const double beta = widths_for(state, params).best;
  const auto [mu, var] = state.mean_variance(task, x);
  const double half = var > 0.0 ? beta * std::sqrt(var) : 0.0;
  return {mu - half, mu + half};
}

}  // namespace mtk
