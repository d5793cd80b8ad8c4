#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtk/confidence.hpp"
#include "mtk/envs.hpp"
#include "mtk/posterior.hpp"
#include "mtk/rng.hpp"

namespace mtk {

enum class PolicyKind { kMtUcb, kIndependent, kPooled, kAdaMtUcb, kMtAl, kUniformAl, kAeLsviAl };

const char* to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);
/// Active-learning policies choose which task to query; the rest are online.
bool is_active_kind(PolicyKind kind);

/// How AdaMT-UCB maps each grid value e to a coupling. kTheorem applies the
/// (b, lambda) selection rule with eps = e; kFixed keeps the configured b for
/// every learner so that they differ only in their widths.
enum class AdaCoupling { kTheorem, kFixed };

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kMtUcb;
  std::string label;
  BaseKernel base;
  WidthParams width;
  WidthRule rule = WidthRule::kNew;
  // AdaMT-UCB only.
  std::vector<double> eps_grid;
  double concentration_c = 1.0;
  AdaCoupling ada_coupling = AdaCoupling::kTheorem;
  std::size_t horizon = 0;  // needed by the theorem mapping

  void validate() const;
};

/// Problem-level constants shared by the presets below.
struct ProblemConstants {
  std::size_t n_tasks = 1;
  double bound_B = 1.0;
  double eps = 0.0;
  double delta = 0.1;
  BaseKernel base;
  std::size_t horizon = 1;
};

// Standard configurations of the UCB family.
/// b = 0, lambda = 1, small-b width (independent GP-UCB per task).
PolicyConfig preset_independent(const ProblemConstants& pc);
/// Given b, lambda = 1, naive width (the Gang-of-Bandits style interval).
PolicyConfig preset_naive(const ProblemConstants& pc, double b);
/// Given b, lambda = (N+b)/(N+bN), minimum of the three widths.
PolicyConfig preset_improved(const ProblemConstants& pc, double b);
/// (b, lambda) from the selection rule applied to (N, T, eps); minimum width.
PolicyConfig preset_theorem(const ProblemConstants& pc);
/// One shared regression (b = infinity), lambda = 1/N, widths for eps = 0.
PolicyConfig preset_pooled(const ProblemConstants& pc);

/// The action a policy takes for one task, with the quantities behind it.
struct Decision {
  std::size_t index = 0;
  double beta = 0.0;
  double mean = 0.0;
  double sigma = 0.0;
  double ucb = 0.0;
};

/// Multitask UCB over the environment's candidate pools. Only the pools of
/// `env` are read; rewards reach the policy through observe().
class MtUcb {
 public:
  MtUcb(const PolicyConfig& config, const Environment& env);

  /// argmax over the task's pool of mu + beta sigma; lowest index on ties.
  Decision act(std::size_t task) const;
  void observe(std::size_t task, std::size_t index, double reward, std::size_t step);

  /// Current width under the configured rule.
  double beta() const { return beta_; }
  const WidthReport& widths() const { return report_; }
  const PosteriorState& posterior() const { return state_; }
  const WidthParams& width_params() const { return params_; }
  /// (mu, sigma) at a pool point.
  std::pair<double, double> mean_sd(std::size_t task, std::size_t index) const;
  double lcb(std::size_t task, std::size_t index) const;
  double ucb(std::size_t task, std::size_t index) const;
  /// max over the task's pool of mu - beta sigma.
  double max_lcb(std::size_t task) const;

 private:
  void refresh_beta();

  const Environment* env_;
  WidthParams params_;
  WidthRule rule_;
  PosteriorState state_;
  WidthReport report_;
  double beta_ = 0.0;
};

/// c sqrt(tau ln(ln(max(tau, 3)) / delta)).
double misspec_slack(std::size_t tau, double delta, double c);
/// U + R + slack < max_L.
bool misspec_test(double U, double R, std::size_t tau, double max_L, double delta, double c);

struct AdaEvent {
  std::size_t step = 0;
  double evicted_eps = 0.0;
  std::size_t epoch = 0;  // epoch that starts after the eviction
};

/// AdaMT-UCB: plays the learner with the smallest surviving grid value and
/// evicts it when the misspecification test fires.
class AdaMtUcb {
 public:
  AdaMtUcb(const PolicyConfig& config, const Environment& env);

  Decision act(std::size_t task) const;
  /// Updates every learner, accumulates, runs the test; returns the evicted
  /// grid value if the test fired. Throws ConfigError when the last learner
  /// would be evicted.
  std::optional<double> observe(std::size_t task, std::size_t index, double reward, std::size_t step);

  double current_eps() const { return grid_.front(); }
  const std::vector<double>& surviving() const { return grid_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t tau() const { return tau_; }
  double accum_U() const { return U_; }
  double accum_R() const { return R_; }
  const std::vector<double>& accum_L() const { return L_; }
  const MtUcb& learner(double eps) const;

 private:
  std::size_t learner_slot(double eps) const;

  double delta_;
  double c_;
  std::vector<double> grid_;          // surviving, ascending
  std::vector<double> all_grid_;      // as configured
  std::vector<MtUcb> learners_;       // aligned with all_grid_
  std::vector<bool> alive_;
  std::size_t tau_ = 0;
  double U_ = 0.0;
  double R_ = 0.0;
  std::vector<double> L_;  // aligned with grid_
  std::size_t epoch_ = 0;
};

/// Uncertainty sampling: argmax_i beta_i sigma_i, lowest index on ties.
std::size_t mtal_query(std::span<const double> beta_sigma);
/// Truncated uncertainty: argmax_i [ucb_i - max_lcb_i], lowest index on ties.
std::size_t aelsvi_query(std::span<const double> ucb_at_recommendation, std::span<const double> max_lcb);

struct ActiveDecision {
  std::vector<std::size_t> recommended;  // x_t^i per task (pool indices)
  std::vector<double> sigma;             // sigma(i, x_t^i)
  std::vector<double> score;             // the query rule's per-task score
  std::size_t query_task = 0;
  double beta = 0.0;
};

/// MT-AL and its task-query variants over one shared multitask posterior.
class ActiveLearner {
 public:
  ActiveLearner(const PolicyConfig& config, const Environment& env, std::uint64_t seed);

  ActiveDecision act();
  void observe(std::size_t task, std::size_t index, double reward, std::size_t step);
  const MtUcb& model() const { return model_; }

 private:
  PolicyKind kind_;
  MtUcb model_;
  Stream query_rng_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t task = 0;    // revealed (online) or queried (active) task
  std::size_t action = 0;  // pool index played for `task`
  double reward = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
  double regret = 0.0;      // instantaneous online or AL regret
  double cum_regret = 0.0;
  double width_bound = 0.0;  // 2 beta sigma at the played/queried point
  std::size_t epoch = 0;
  double learner_eps = -1.0;  // AdaMT-UCB only
  double evicted_eps = -1.0;  // AdaMT-UCB only, set on eviction steps
};

/// Optional per-step checks against the ground truth.
struct AuditOptions {
  /// |mu - f| <= beta sigma at every task and pool point, before every step and at the end.
  bool coverage = false;
  /// max over tasks and pool points of sigma^2 - lambda.
  bool variance_cap = false;
};

struct RunAudit {
  bool coverage_checked = false;
  bool coverage_held = true;
  std::size_t first_violation_step = 0;
  /// Steps at which the band held but regret exceeded 2 beta sigma.
  std::size_t bound_violations = 0;
  double max_variance_excess = -1e300;
  double ridge = 0.0;
};

struct RunTrace {
  std::string label;
  PolicyKind kind = PolicyKind::kMtUcb;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<AdaEvent> events;
  RunAudit audit;
  double wall_seconds = 0.0;

  double final_regret() const { return steps.empty() ? 0.0 : steps.back().cum_regret; }
  double bound_sum() const;
};

/// Online protocol: nature reveals i_t uniformly at random, the policy plays,
/// noise is added. Task draws and noise come from streams keyed by `seed`, so
/// all policies run with the same seed see the same tasks and noise.
RunTrace run_online(const PolicyConfig& config, const Environment& env, std::size_t horizon, std::uint64_t seed,
                    const AuditOptions& audit = {});

/// Active protocol: the policy picks the task and its recommendation is
/// queried; regret is the task-averaged gap of all recommendations.
RunTrace run_active(const PolicyConfig& config, const Environment& env, std::size_t horizon, std::uint64_t seed,
                    const AuditOptions& audit = {});

}  // namespace mtk
