#include "mtk/policies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "mtk/errors.hpp"
#include "mtk/pool_scan.hpp"

namespace mtk {

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kMtUcb: return "mt-ucb";
    case PolicyKind::kIndependent: return "independent";
    case PolicyKind::kPooled: return "pooled";
    case PolicyKind::kAdaMtUcb: return "adamt-ucb";
    case PolicyKind::kMtAl: return "mt-al";
    case PolicyKind::kUniformAl: return "uniform-al";
    case PolicyKind::kAeLsviAl: return "aelsvi-al";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  for (auto k : {PolicyKind::kMtUcb, PolicyKind::kIndependent, PolicyKind::kPooled, PolicyKind::kAdaMtUcb,
                 PolicyKind::kMtAl, PolicyKind::kUniformAl, PolicyKind::kAeLsviAl}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown policy kind '" + name + "'");
}

bool is_active_kind(PolicyKind kind) {
  return kind == PolicyKind::kMtAl || kind == PolicyKind::kUniformAl || kind == PolicyKind::kAeLsviAl;
}

void PolicyConfig::validate() const {
  try {
    width.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (width.coupling.n_tasks() == 0) throw ConfigError("policy: no tasks");
  if (kind == PolicyKind::kAdaMtUcb) {
    if (eps_grid.empty()) throw ConfigError("adamt-ucb: eps_grid must not be empty");
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
      if (!(eps_grid[k] > 0.0 && eps_grid[k] <= 2.0)) throw ConfigError("adamt-ucb: eps_grid values must lie in (0, 2]");
      if (k > 0 && !(eps_grid[k] > eps_grid[k - 1])) throw ConfigError("adamt-ucb: eps_grid must be strictly increasing");
    }
    if (!(concentration_c > 0.0)) throw ConfigError("adamt-ucb: concentration_c must be > 0");
    if (ada_coupling == AdaCoupling::kTheorem && horizon == 0) {
      throw ConfigError("adamt-ucb: the theorem coupling needs the horizon");
    }
  }
}

namespace {

WidthParams base_params(const ProblemConstants& pc, TaskCoupling coupling, double ridge) {
  WidthParams w;
  w.bound_B = pc.bound_B;
  w.deviation_eps = pc.eps;
  w.delta = pc.delta;
  w.coupling = coupling;
  w.ridge = ridge;
  return w;
}

PolicyConfig make(PolicyKind kind, std::string label, const ProblemConstants& pc, WidthParams w, WidthRule rule) {
  PolicyConfig c;
  c.kind = kind;
  c.label = std::move(label);
  c.base = pc.base;
  c.width = w;
  c.rule = rule;
  c.horizon = pc.horizon;
  return c;
}

}  // namespace

PolicyConfig preset_independent(const ProblemConstants& pc) {
  return make(PolicyKind::kIndependent, "independent", pc, base_params(pc, TaskCoupling(0.0, pc.n_tasks), 1.0),
              WidthRule::kSmallB);
}

PolicyConfig preset_naive(const ProblemConstants& pc, double b) {
  return make(PolicyKind::kMtUcb, "mt-ucb-naive", pc, base_params(pc, TaskCoupling(b, pc.n_tasks), 1.0),
              WidthRule::kNaive);
}

PolicyConfig preset_improved(const ProblemConstants& pc, double b) {
  const TaskCoupling c(b, pc.n_tasks);
  return make(PolicyKind::kMtUcb, "mt-ucb-improved", pc, base_params(pc, c, theorem_ridge(c)), WidthRule::kNew);
}

PolicyConfig preset_theorem(const ProblemConstants& pc) {
  const auto choice = select_b_lambda(pc.n_tasks, pc.horizon, pc.eps);
  return make(PolicyKind::kMtUcb, "mt-ucb-theorem", pc, base_params(pc, choice.coupling, choice.ridge), WidthRule::kNew);
}

PolicyConfig preset_pooled(const ProblemConstants& pc) {
  const auto c = TaskCoupling::pooled(pc.n_tasks);
  auto w = base_params(pc, c, theorem_ridge(c));
  w.deviation_eps = 0.0;
  return make(PolicyKind::kPooled, "pooled", pc, w, WidthRule::kNew);
}

// ---------------------------------------------------------------------------

namespace {

const PolicyConfig& validated(const PolicyConfig& config) {
  config.validate();
  return config;
}

}  // namespace

MtUcb::MtUcb(const PolicyConfig& config, const Environment& env)
    : env_(&env), params_(validated(config).width), rule_(config.rule), state_(config.width.coupling, config.base, config.width.ridge) {
  if (config.base.input_dim != env.dim()) throw ConfigError("policy: kernel dimension does not match the environment");
  if (config.width.coupling.n_tasks() != env.n_tasks()) throw ConfigError("policy: task count does not match the environment");
  refresh_beta();
}

void MtUcb::refresh_beta() {
  report_ = widths_for(state_, params_);
  beta_ = report_.select(rule_);
}

Decision MtUcb::act(std::size_t task) const {
  const PointMatrix& pool = env_->pool(task);
  const ScanResult r = state_.has_linear_summaries() ? pool_scan::ucb_argmax(pool, state_.linear_summary(task), beta_)
                                                     : pool_scan::ucb_argmax(pool, state_, task, beta_);
  Decision d;
  d.index = r.index;
  d.beta = beta_;
  d.ucb = r.value;
  std::tie(d.mean, d.sigma) = mean_sd(task, r.index);
  return d;
}

void MtUcb::observe(std::size_t task, std::size_t index, double reward, std::size_t step) {
  Observation o;
  o.task = task;
  o.point = env_->pool(task).row(static_cast<Eigen::Index>(index)).transpose();
  o.reward = reward;
  o.step = step;
  state_.update(o);
  refresh_beta();
}

std::pair<double, double> MtUcb::mean_sd(std::size_t task, std::size_t index) const {
  const Eigen::VectorXd x = env_->pool(task).row(static_cast<Eigen::Index>(index)).transpose();
  if (state_.has_linear_summaries()) {
    const auto& s = state_.linear_summary(task);
    return {s.w.dot(x), std::sqrt(std::max(0.0, x.dot(s.W * x)))};
  }
  const auto [mu, var] = state_.mean_variance(task, x);
  return {mu, std::sqrt(var)};
}

double MtUcb::lcb(std::size_t task, std::size_t index) const {
  const auto [mu, sd] = mean_sd(task, index);
  return lcb_value(mu, sd, beta_);
}

double MtUcb::ucb(std::size_t task, std::size_t index) const {
  const auto [mu, sd] = mean_sd(task, index);
  return ucb_value(mu, sd, beta_);
}

double MtUcb::max_lcb(std::size_t task) const {
  const PointMatrix& pool = env_->pool(task);
  return state_.has_linear_summaries() ? pool_scan::lcb_max(pool, state_.linear_summary(task), beta_).value
                                       : pool_scan::lcb_max(pool, state_, task, beta_).value;
}

// ---------------------------------------------------------------------------

double misspec_slack(std::size_t tau, double delta, double c) {
  const double t = static_cast<double>(tau);
  const double floor_t = std::max(t, 3.0);
  return c * std::sqrt(t * std::log(std::log(floor_t) / delta));
}

bool misspec_test(double U, double R, std::size_t tau, double max_L, double delta, double c) {
  return U + R + misspec_slack(tau, delta, c) < max_L;
}

AdaMtUcb::AdaMtUcb(const PolicyConfig& config, const Environment& env)
    : delta_(config.width.delta), c_(config.concentration_c), grid_(config.eps_grid), all_grid_(config.eps_grid) {
  config.validate();
  if (config.kind != PolicyKind::kAdaMtUcb) throw ConfigError("AdaMtUcb needs an adamt-ucb configuration");
  for (double e : all_grid_) {
    PolicyConfig sub = config;
    sub.kind = PolicyKind::kMtUcb;
    sub.width.deviation_eps = e;
    if (config.ada_coupling == AdaCoupling::kTheorem) {
      const auto choice = select_b_lambda(env.n_tasks(), config.horizon, e);
      sub.width.coupling = choice.coupling;
      sub.width.ridge = choice.ridge;
    }
    learners_.emplace_back(sub, env);
  }
  alive_.assign(all_grid_.size(), true);
  L_.assign(grid_.size(), 0.0);
}

std::size_t AdaMtUcb::learner_slot(double eps) const {
  const auto it = std::find(all_grid_.begin(), all_grid_.end(), eps);
  if (it == all_grid_.end()) throw std::out_of_range("adamt-ucb: no learner for this grid value");
  return static_cast<std::size_t>(it - all_grid_.begin());
}

const MtUcb& AdaMtUcb::learner(double eps) const { return learners_[learner_slot(eps)]; }

Decision AdaMtUcb::act(std::size_t task) const { return learner(current_eps()).act(task); }

std::optional<double> AdaMtUcb::observe(std::size_t task, std::size_t index, double reward, std::size_t step) {
  const MtUcb& current = learner(current_eps());
  const auto [mu, sd] = current.mean_sd(task, index);
  R_ += 2.0 * (ucb_value(mu, sd, current.beta()) - mu);
  for (std::size_t k = 0; k < grid_.size(); ++k) L_[k] += learner(grid_[k]).lcb(task, index);
  U_ += reward;
  ++tau_;

  for (std::size_t slot = 0; slot < learners_.size(); ++slot) {
    if (alive_[slot]) learners_[slot].observe(task, index, reward, step);
  }

  const double max_L = *std::max_element(L_.begin(), L_.end());
  if (!misspec_test(U_, R_, tau_, max_L, delta_, c_)) return std::nullopt;

  const double evicted = grid_.front();
  if (grid_.size() == 1) {
    throw ConfigError("adamt-ucb: every learner was evicted; the grid holds no value >= the true deviation");
  }
  alive_[learner_slot(evicted)] = false;
  grid_.erase(grid_.begin());
  L_.assign(grid_.size(), 0.0);
  tau_ = 0;
  U_ = 0.0;
  R_ = 0.0;
  ++epoch_;
  return evicted;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("query rule: no tasks");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::size_t mtal_query(std::span<const double> beta_sigma) { return argmax_lowest(beta_sigma); }

std::size_t aelsvi_query(std::span<const double> ucb_at_recommendation, std::span<const double> max_lcb) {
  if (ucb_at_recommendation.size() != max_lcb.size()) throw std::invalid_argument("aelsvi_query: size mismatch");
  std::vector<double> score(max_lcb.size());
  for (std::size_t i = 0; i < score.size(); ++i) score[i] = ucb_at_recommendation[i] - max_lcb[i];
  return argmax_lowest(score);
}

ActiveLearner::ActiveLearner(const PolicyConfig& config, const Environment& env, std::uint64_t seed)
    : kind_(config.kind), model_(config, env), query_rng_(seed, StreamPurpose::kQuery) {
  if (!is_active_kind(kind_)) throw ConfigError("policy '" + std::string(to_string(kind_)) + "' is not an active-learning policy");
}

ActiveDecision ActiveLearner::act() {
  const std::size_t n = model_.posterior().n_tasks();
  ActiveDecision d;
  d.beta = model_.beta();
  d.recommended.resize(n);
  d.sigma.resize(n);
  d.score.resize(n);
  std::vector<double> ucb(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Decision di = model_.act(i);
    d.recommended[i] = di.index;
    d.sigma[i] = di.sigma;
    ucb[i] = di.ucb;
    d.score[i] = ucb_value(0.0, di.sigma, d.beta);
  }
  switch (kind_) {
    case PolicyKind::kMtAl:
      d.query_task = mtal_query(d.score);
      break;
    case PolicyKind::kUniformAl:
      d.query_task = static_cast<std::size_t>(query_rng_.below(n));
      break;
    case PolicyKind::kAeLsviAl: {
      std::vector<double> lcb(n);
      for (std::size_t i = 0; i < n; ++i) lcb[i] = model_.max_lcb(i);
      for (std::size_t i = 0; i < n; ++i) d.score[i] = ucb[i] - lcb[i];
      d.query_task = aelsvi_query(ucb, lcb);
      break;
    }
    default:
      throw std::logic_error("unreachable");
  }
  return d;
}

void ActiveLearner::observe(std::size_t task, std::size_t index, double reward, std::size_t step) {
  model_.observe(task, index, reward, step);
}

// ---------------------------------------------------------------------------

double RunTrace::bound_sum() const {
  double s = 0.0;
  for (const auto& r : steps) s += r.width_bound;
  return s;
}

namespace {

struct AuditResult {
  bool covered = true;
  double variance_excess = -1e300;
};

AuditResult audit_model(const MtUcb& model, const Environment& env, const AuditOptions& opts) {
  AuditResult out;
  const PosteriorState& st = model.posterior();
  const double beta = model.beta();
  const double ridge = st.ridge();
  for (std::size_t i = 0; i < env.n_tasks(); ++i) {
    const PointMatrix& pool = env.pool(i);
    if (st.has_linear_summaries()) {
      const auto& s = st.linear_summary(i);
      if (opts.coverage && pool_scan::max_band_violation(pool, s, beta, env.true_means(i)) > 0.0) out.covered = false;
      if (opts.variance_cap) out.variance_excess = std::max(out.variance_excess, pool_scan::max_variance(pool, s) - ridge);
      continue;
    }
    const auto truth = env.true_means(i);
    for (Eigen::Index k = 0; k < pool.rows(); ++k) {
      const auto [mu, var] = st.mean_variance(i, pool.row(k).transpose());
      const double sd = std::sqrt(var);
      if (opts.coverage && std::abs(mu - truth[static_cast<std::size_t>(k)]) > (sd > 0.0 ? beta * sd : 0.0)) {
        out.covered = false;
      }
      out.variance_excess = std::max(out.variance_excess, var - ridge);
    }
  }
  return out;
}

void apply_audit(RunAudit& audit, const AuditResult& r, std::size_t step) {
  if (!r.covered && audit.coverage_held) {
    audit.coverage_held = false;
    audit.first_violation_step = step;
  }
  audit.max_variance_excess = std::max(audit.max_variance_excess, r.variance_excess);
}

constexpr double kBoundSlack = 1e-9;

}  // namespace

RunTrace run_online(const PolicyConfig& config, const Environment& env, std::size_t horizon, std::uint64_t seed,
                    const AuditOptions& audit) {
  if (is_active_kind(config.kind)) throw ConfigError("policy '" + config.label + "' is an active-learning policy");
  const auto start = std::chrono::steady_clock::now();
  RunTrace trace;
  trace.label = config.label;
  trace.kind = config.kind;
  trace.seed = seed;
  trace.audit.coverage_checked = audit.coverage;
  trace.steps.reserve(horizon);

  Stream tasks(seed, StreamPurpose::kTaskSequence);
  Stream noise(seed, StreamPurpose::kNoise);
  std::optional<MtUcb> single;
  std::optional<AdaMtUcb> ada;
  if (config.kind == PolicyKind::kAdaMtUcb) {
    ada.emplace(config, env);
  } else {
    single.emplace(config, env);
  }
  auto acting = [&]() -> const MtUcb& { return ada ? ada->learner(ada->current_eps()) : *single; };
  trace.audit.ridge = acting().posterior().ridge();

  double cum = 0.0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const auto task = static_cast<std::size_t>(tasks.below(env.n_tasks()));
    bool covered_now = true;
    if (audit.coverage || audit.variance_cap) {
      const auto r = audit_model(acting(), env, audit);
      apply_audit(trace.audit, r, t);
      covered_now = r.covered;
    }
    const Decision d = ada ? ada->act(task) : single->act(task);
    StepRecord rec;
    rec.step = t;
    rec.task = task;
    rec.action = d.index;
    rec.beta = d.beta;
    rec.sigma = d.sigma;
    rec.width_bound = 2.0 * (ucb_value(0.0, d.sigma, d.beta));
    rec.reward = env.feedback(task, d.index, noise);
    rec.regret = env.online_regret_increment(task, d.index);
    cum += rec.regret;
    rec.cum_regret = cum;
    if (audit.coverage && covered_now && rec.regret > rec.width_bound + kBoundSlack) ++trace.audit.bound_violations;
    if (ada) {
      rec.learner_eps = ada->current_eps();
      rec.epoch = ada->epoch();
      if (auto ev = ada->observe(task, d.index, rec.reward, t)) {
        rec.evicted_eps = *ev;
        trace.events.push_back({t, *ev, ada->epoch()});
      }
    } else {
      single->observe(task, d.index, rec.reward, t);
    }
    trace.steps.push_back(rec);
  }
  if (audit.coverage || audit.variance_cap) apply_audit(trace.audit, audit_model(acting(), env, audit), horizon + 1);
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

RunTrace run_active(const PolicyConfig& config, const Environment& env, std::size_t horizon, std::uint64_t seed,
                    const AuditOptions& audit) {
  if (!is_active_kind(config.kind)) throw ConfigError("policy '" + config.label + "' is not an active-learning policy");
  const auto start = std::chrono::steady_clock::now();
  RunTrace trace;
  trace.label = config.label;
  trace.kind = config.kind;
  trace.seed = seed;
  trace.audit.coverage_checked = audit.coverage;
  trace.steps.reserve(horizon);

  Stream noise(seed, StreamPurpose::kNoise);
  ActiveLearner learner(config, env, seed);
  trace.audit.ridge = learner.model().posterior().ridge();

  double cum = 0.0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    bool covered_now = true;
    if (audit.coverage || audit.variance_cap) {
      const auto r = audit_model(learner.model(), env, audit);
      apply_audit(trace.audit, r, t);
      covered_now = r.covered;
    }
    const ActiveDecision d = learner.act();
    const std::size_t task = d.query_task;
    StepRecord rec;
    rec.step = t;
    rec.task = task;
    rec.action = d.recommended[task];
    rec.beta = d.beta;
    rec.sigma = d.sigma[task];
    rec.width_bound = 2.0 * ucb_value(0.0, d.sigma[task], d.beta);
    rec.reward = env.feedback(task, rec.action, noise);
    rec.regret = env.al_regret_increment(d.recommended);
    cum += rec.regret;
    rec.cum_regret = cum;
    if (audit.coverage && covered_now && rec.regret > rec.width_bound + kBoundSlack) ++trace.audit.bound_violations;
    learner.observe(task, rec.action, rec.reward, t);
    trace.steps.push_back(rec);
  }
  if (audit.coverage || audit.variance_cap) apply_audit(trace.audit, audit_model(learner.model(), env, audit), horizon + 1);
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace mtk
