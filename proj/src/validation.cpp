#include "mtk/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mtk/confidence.hpp"
#include "mtk/errors.hpp"
#include "mtk/experiment.hpp"
#include "mtk/posterior.hpp"
#include "mtk/rng.hpp"
#include "mtk/task_algebra.hpp"

namespace mtk {

namespace {

using Clock = std::chrono::steady_clock;

Eigen::VectorXd normal_vec(Stream& rng, Eigen::Index d) {
  Eigen::VectorXd v(d);
  for (Eigen::Index k = 0; k < d; ++k) v(k) = rng.normal();
  return v;
}

Eigen::VectorXd ball_point(Stream& rng, Eigen::Index d) {
  Eigen::VectorXd v = normal_vec(rng, d);
  return v / v.norm() * rng.uniform();
}

double uniform_in(Stream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Plain kernel ridge regression on one point set, solved densely.
struct RidgeOracle {
  std::vector<Eigen::VectorXd> pts;
  Eigen::VectorXd y;
  BaseKernel base;
  double ridge;

  std::pair<double, double> predict(const Eigen::VectorXd& x) const {
    const auto n = static_cast<Eigen::Index>(pts.size());
    if (n == 0) return {0.0, base(x, x)};
    Eigen::MatrixXd g(n, n);
    Eigen::VectorXd k(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      k(a) = base(x, pts[a]);
      for (Eigen::Index b = 0; b < n; ++b) g(a, b) = base(pts[a], pts[b]);
    }
    g.diagonal().array() += ridge;
    const auto ldlt = g.ldlt();
    return {k.dot(ldlt.solve(y)), base(x, x) - k.dot(ldlt.solve(k))};
  }
};

// ---------------------------------------------------------------------------

CriterionResult crit_equivalence() {
  CriterionResult r{1, "b=0 and pooled equivalence to single-task ridge", false, "", 0.0};
  const std::size_t N = 3, t = 15;
  const Eigen::Index d = 4;
  const double lambda = 0.7;
  Stream rng(1, StreamPurpose::kTest, 1);
  const BaseKernel base = BaseKernel::linear(d);
  std::vector<Observation> log;
  for (std::size_t s = 1; s <= t; ++s) log.push_back({static_cast<std::size_t>(rng.below(N)), ball_point(rng, d), rng.normal(), s});

  PosteriorState indep(TaskCoupling(0.0, N), base, lambda);
  PosteriorState pooled(TaskCoupling::pooled(N), base, lambda);
  for (const auto& o : log) indep.update(o), pooled.update(o);

  std::vector<RidgeOracle> per_task(N, RidgeOracle{{}, {}, base, lambda});
  RidgeOracle all{{}, Eigen::VectorXd(static_cast<Eigen::Index>(t)), base, lambda * static_cast<double>(N)};
  std::vector<std::vector<double>> ys(N);
  for (std::size_t s = 0; s < t; ++s) {
    per_task[log[s].task].pts.push_back(log[s].point);
    ys[log[s].task].push_back(log[s].reward);
    all.pts.push_back(log[s].point);
    all.y(static_cast<Eigen::Index>(s)) = log[s].reward;
  }
  for (std::size_t i = 0; i < N; ++i) per_task[i].y = Eigen::Map<Eigen::VectorXd>(ys[i].data(), static_cast<Eigen::Index>(ys[i].size()));

  double err_indep = 0.0, err_pooled = 0.0;
  for (int q = 0; q < 50; ++q) {
    const auto task = static_cast<std::size_t>(rng.below(N));
    const Eigen::VectorXd x = ball_point(rng, d);
    const auto [mu, var] = indep.mean_variance(task, x);
    const auto [mu_o, var_o] = per_task[task].predict(x);
    err_indep = std::max({err_indep, std::abs(mu - mu_o), std::abs(std::sqrt(var) - std::sqrt(std::max(0.0, var_o)))});
    // Pooled: same mean as ridge with lambda N; variances differ by the 1/N task scale.
    const auto [mp, vp] = pooled.mean_variance(task, x);
    const auto [ma, va] = all.predict(x);
    err_pooled = std::max({err_pooled, std::abs(mp - ma), std::abs(vp - va / static_cast<double>(N))});
  }
  r.passed = err_indep < 1e-8 && err_pooled < 1e-6;
  r.detail = "b=0 max err " + fmt("%.2e", err_indep) + " (tol 1e-8), pooled max err " + fmt("%.2e", err_pooled) + " (tol 1e-6)";
  return r;
}

CriterionResult crit_ksm() {
  CriterionResult r{2, "Kronecker Sherman-Morrison inverse", false, "", 0.0};
  Stream rng(2, StreamPurpose::kTest, 2);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto N = static_cast<std::size_t>(1 + rng.below(5));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) g(a, b) = rng.normal();
    const Eigen::MatrixXd S = (g + g.transpose()) / (2.0 * std::sqrt(static_cast<double>(d)));
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    // Polynomials in one symmetric matrix commute with each other.
    std::vector<Eigen::MatrixXd> blocks;
    for (std::size_t l = 0; l < N; ++l) {
      blocks.push_back(uniform_in(rng, 2.0, 4.0) * I + uniform_in(rng, -0.5, 0.5) * S + uniform_in(rng, -0.2, 0.2) * S * S);
    }
    const Eigen::MatrixXd P = uniform_in(rng, 0.1, 1.5) * I + uniform_in(rng, -0.3, 0.3) * S;
    const auto n = static_cast<Eigen::Index>(N) * d;
    Eigen::MatrixXd M(n, n);
    for (std::size_t l = 0; l < N; ++l) {
      for (std::size_t m = 0; m < N; ++m) {
        M.block(static_cast<Eigen::Index>(l) * d, static_cast<Eigen::Index>(m) * d, d, d) = P + (l == m ? blocks[l] : Eigen::MatrixXd::Zero(d, d));
      }
    }
    const Eigen::MatrixXd inv = kron_sherman_morrison(blocks, P);
    worst = std::max(worst, (M * inv - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  r.passed = worst < 1e-8;
  r.detail = "100 instances, max |M M^-1 - I| = " + fmt("%.2e", worst) + " (tol 1e-8)";
  return r;
}

CriterionResult crit_feature_map() {
  CriterionResult r{3, "feature-map Gram consistency", false, "", 0.0};
  Stream rng(3, StreamPurpose::kTest, 3);
  double worst = 0.0;
  for (double b : {0.0, 0.5, 5.0, 500.0}) {
    for (int set = 0; set < 20; ++set) {
      const auto N = static_cast<std::size_t>(2 + rng.below(4));
      const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
      const auto m = static_cast<Eigen::Index>(3 + rng.below(8));
      const TaskCoupling c(b, N);
      const BaseKernel base = BaseKernel::linear(static_cast<std::size_t>(d), uniform_in(rng, 0.5, 2.0));
      std::vector<std::size_t> tasks;
      std::vector<Eigen::VectorXd> pts;
      Eigen::MatrixXd phi(m, static_cast<Eigen::Index>(N) * d);
      for (Eigen::Index a = 0; a < m; ++a) {
        tasks.push_back(static_cast<std::size_t>(rng.below(N)));
        pts.push_back(normal_vec(rng, d));
        phi.row(a) = mt_feature_map(c, base, pts.back(), tasks.back()).transpose();
      }
      Eigen::MatrixXd gram(m, m);
      for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index e = 0; e < m; ++e) gram(a, e) = mt_kernel(c, base, tasks[a], pts[a], tasks[e], pts[e]);
      worst = std::max(worst, (gram - phi * phi.transpose()).cwiseAbs().maxCoeff());
    }
  }
  r.passed = worst < 1e-9;
  r.detail = "80 sets over b in {0, 0.5, 5, 500}, max Gram gap " + fmt("%.2e", worst) + " (tol 1e-9)";
  return r;
}

CriterionResult crit_widths() {
  CriterionResult r{4, "width structure", false, "", 0.0};
  Stream rng(4, StreamPurpose::kTest, 4);
  std::size_t not_min = 0, above_naive = 0, checks = 0;
  for (int g = 0; g < 50; ++g) {
    const double b = std::pow(10.0, -3.0 + 7.0 * g / 49.0);
    for (int draw = 0; draw < 20; ++draw) {
      WidthParams p;
      const auto N = static_cast<std::size_t>(2 + rng.below(29));
      p.coupling = TaskCoupling(b, N);
      p.bound_B = uniform_in(rng, 0.1, 10.0);
      p.deviation_eps = uniform_in(rng, 0.0, 2.0);
      p.delta = uniform_in(rng, 0.001, 1.0);
      p.ridge = uniform_in(rng, 1.0 / (1.0 + b), 1.0);
      const double gst = uniform_in(rng, 0.0, 30.0);
      const double gmt = gst + uniform_in(rng, 0.0, 60.0);
      const auto t = static_cast<std::size_t>(1 + rng.below(500));
      const WidthReport w = beta_new(p, gmt, gst, t);
      ++checks;
      if (w.best != std::min({w.naive, w.small_b, w.large_b})) ++not_min;
      if (!(w.best <= w.naive)) ++above_naive;
    }
  }
  WidthParams p;
  p.coupling = TaskCoupling(0.0, 20);
  p.bound_B = 1.0;
  p.deviation_eps = 0.4;
  p.delta = 1.0;
  p.ridge = theorem_ridge(p.coupling);
  const WidthReport w = beta_new(p, 0.0, 0.0, 4);
  const double ratio = w.naive / w.best;
  const double ratio_err = std::abs(ratio - std::sqrt(20.0));
  r.passed = not_min == 0 && above_naive == 0 && ratio_err < 1e-9;
  r.detail = std::to_string(checks) + " draws: " + std::to_string(not_min) + " not the exact minimum, " + std::to_string(above_naive) +
             " above naive; naive/new at b=0, N=20 = " + fmt("%.12f", ratio) + " (sqrt 20 err " + fmt("%.1e", ratio_err) + ")";
  return r;
}

CriterionResult crit_info_gain() {
  CriterionResult r{5, "information-gain bounds", false, "", 0.0};
  Stream rng(5, StreamPurpose::kTest, 5);
  const double bs[] = {0.1, 1.0, 10.0};
  std::size_t violations = 0, second_checked = 0;
  double tightest = 1e300;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const auto N = static_cast<std::size_t>(2 + rng.below(5));
    const auto T = static_cast<std::size_t>(N + rng.below(41 - N));
    const double lambda = uniform_in(rng, 0.2, 1.0);
    const double b = bs[rng.below(3)];
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    const BaseKernel base = BaseKernel::linear(static_cast<std::size_t>(d));
    PosteriorState st(TaskCoupling(b, N), base, lambda);
    std::vector<Eigen::VectorXd> pts;
    for (std::size_t s = 1; s <= T; ++s) {
      Observation o{static_cast<std::size_t>(rng.below(N)), ball_point(rng, d), rng.normal(), s};
      pts.push_back(o.point);
      st.update(o);
    }
    // Single-task gain of the whole point set: a lower bound on the maximal single-task gain.
    Eigen::MatrixXd g(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(T));
    for (std::size_t a = 0; a < T; ++a)
      for (std::size_t c = 0; c < T; ++c) g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = base(pts[a], pts[c]);
    g /= lambda;
    g.diagonal().array() += 1.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(g);
    const double gamma_st = llt.matrixLLT().diagonal().array().log().sum();
    const auto [first, second] = info_gain_bounds(b, lambda, N, T, gamma_st);
    const double gmt = st.info_gain_mt();
    if (gmt > first + 1e-9) ++violations;
    if (b > 0.0) {
      ++second_checked;
      if (gmt > second + 1e-9) ++violations;
    }
    tightest = std::min({tightest, first - gmt, second - gmt});
  }
  r.passed = violations == 0;
  r.detail = "100 configurations, " + std::to_string(violations) + " violations, smallest slack " + fmt("%.3g", tightest) +
             " (second bound checked " + std::to_string(second_checked) + " times)";
  return r;
}

// Shared experiment settings for criteria 6 to 9.
ExperimentConfig synthetic_base(std::size_t d, std::size_t n, double dev, std::size_t horizon, std::size_t seeds, int jobs) {
  ExperimentConfig c;
  c.env.spec.dim = d;
  c.env.spec.n_tasks = n;
  c.env.spec.dev_delta = dev;
  c.horizon = horizon;
  c.seeds.clear();
  for (std::size_t s = 1; s <= seeds; ++s) c.seeds.push_back(s);
  c.jobs = jobs;
  c.audit = true;
  c.problem.delta = 0.1;
  return c;
}

PolicySpec spec(PolicyKind kind, std::optional<WidthRule> width = std::nullopt) {
  PolicySpec p;
  p.kind = kind;
  p.width = width;
  return p;
}

struct VarianceLedger {
  double worst = -1e300;
  std::size_t runs = 0;
  void add(const std::vector<RunTrace>& runs_in) {
    for (const auto& t : runs_in) worst = std::max(worst, t.audit.max_variance_excess), ++runs;
  }
};

double mean_final(const ExperimentResult& res, const std::string& label) {
  for (const auto& p : res.summary) {
    if (p.label == label) return p.mean_final_regret;
  }
  throw std::logic_error("missing policy " + label);
}

CriterionResult crit_coverage(const ValidationOptions& o, VarianceLedger& ledger) {
  CriterionResult r{6, "coverage of the improved intervals", false, "", 0.0};
  const std::size_t runs = o.quick ? 40 : 200;
  auto cfg = synthetic_base(3, 4, 0.4, 50, runs, o.jobs);
  cfg.coupling = {CouplingSpec::Kind::kValue, 1.0};
  cfg.policies = {spec(PolicyKind::kMtUcb, WidthRule::kNew)};
  const auto res = run_experiment(cfg);
  ledger.add(res.runs);
  std::size_t held = 0, bound_viol = 0;
  for (const auto& t : res.runs) {
    held += t.audit.coverage_held ? 1 : 0;
    bound_viol += t.audit.coverage_held ? t.audit.bound_violations : 0;
  }
  const double rate = static_cast<double>(held) / static_cast<double>(runs);
  r.passed = rate >= 0.75;
  r.detail = std::to_string(held) + "/" + std::to_string(runs) + " runs covered at every step and pool point (" + fmt("%.3f", rate) +
             ", need >= 0.75); regret > 2 beta sigma on covered runs: " + std::to_string(bound_viol) + " steps";
  return r;
}

ExperimentConfig ordering_base(int jobs) { return synthetic_base(4, 5, 0.4, 300, 5, jobs); }

CriterionResult crit_online(const ValidationOptions& o, VarianceLedger& ledger, double& chosen_b) {
  CriterionResult r{7, "online regret ordering", false, "", 0.0};
  auto cfg = ordering_base(o.jobs);
  cfg.mode = ExperimentMode::kOnline;
  cfg.sweep_b = default_sweep_grid();
  cfg.policies = {spec(PolicyKind::kMtUcb, WidthRule::kNew), spec(PolicyKind::kMtUcb, WidthRule::kNaive),
                  spec(PolicyKind::kIndependent)};
  const auto res = run_experiment(cfg);
  ledger.add(res.runs);
  ledger.add(res.sweep_runs);
  chosen_b = *res.chosen_b;
  const double imp = mean_final(res, "mt-ucb-improved"), naive = mean_final(res, "mt-ucb-naive"),
               ind = mean_final(res, "independent");
  r.passed = imp < naive && imp < ind;
  r.detail = "b=" + fmt("%g", chosen_b) + " from sweep; mean final regret improved " + fmt("%.1f", imp) + ", naive " +
             fmt("%.1f", naive) + ", independent " + fmt("%.1f", ind);
  return r;
}

CriterionResult crit_active(const ValidationOptions& o, VarianceLedger& ledger, double b) {
  CriterionResult r{8, "active-learning regret", false, "", 0.0};
  auto cfg = ordering_base(o.jobs);
  cfg.mode = ExperimentMode::kActive;
  cfg.coupling = {CouplingSpec::Kind::kValue, b};
  cfg.policies = {spec(PolicyKind::kMtAl, WidthRule::kNew), spec(PolicyKind::kUniformAl, WidthRule::kNew),
                  spec(PolicyKind::kMtAl, WidthRule::kNaive)};
  const auto res = run_experiment(cfg);
  ledger.add(res.runs);
  const double al = mean_final(res, "mt-al-improved"), unif = mean_final(res, "uniform-al-improved"),
               naive = mean_final(res, "mt-al-naive");
  std::size_t covered = 0, bound_fail = 0;
  for (const auto& t : res.runs) {
    if (!t.audit.coverage_held) continue;
    ++covered;
    if (t.final_regret() > t.bound_sum() + 1e-9) ++bound_fail;
  }
  r.passed = al < unif && al < naive && bound_fail == 0;
  r.detail = "b=" + fmt("%g", b) + "; mean final AL regret mt-al " + fmt("%.1f", al) + ", uniform " + fmt("%.1f", unif) +
             ", mt-al naive " + fmt("%.1f", naive) + "; width-sum bound failed on " + std::to_string(bound_fail) + " of " +
             std::to_string(covered) + " covered runs (" + std::to_string(res.runs.size()) + " total)";
  return r;
}

constexpr double kAdaDevDelta = 0.27;  // mean true eps about 0.30 over seeds 1..20
constexpr double kAdaB = 1.0;

CriterionResult crit_adamt(const ValidationOptions& o) {
  CriterionResult r{9, "AdaMT-UCB model selection", false, "", 0.0};
  const std::size_t n_seeds = o.quick ? 6 : 20;
  auto cfg = synthetic_base(4, 5, kAdaDevDelta, 300, n_seeds, o.jobs);
  cfg.audit = false;
  PolicySpec ada = spec(PolicyKind::kAdaMtUcb);
  ada.ada_coupling = AdaCoupling::kFixed;
  const std::vector<double> grid = ada.eps_grid;
  const CouplingSpec b{CouplingSpec::Kind::kValue, kAdaB};

  std::vector<double> eps(n_seeds), ada_final(n_seeds), ref_final(n_seeds);
  std::vector<char> clean(n_seeds, 0);
  std::vector<std::size_t> evictions(n_seeds, 0);
  std::vector<std::exception_ptr> errors(n_seeds);
  const auto n = static_cast<long>(n_seeds);
#ifdef _OPENMP
  const int nt = o.jobs > 0 ? o.jobs : omp_get_max_threads();
#else
  const int nt = 1;
#endif
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
  for (long k = 0; k < n; ++k) {
    const auto s = static_cast<std::size_t>(k);
    try {
      const Environment env = generate_synthetic(cfg.env.spec, cfg.seeds[s]);
      ProblemConstants pc = problem_constants(cfg, env);
      eps[s] = pc.eps;
      // Smallest well-specified grid value.
      const auto it = std::lower_bound(grid.begin(), grid.end(), pc.eps);
      const double e_star = it == grid.end() ? grid.back() : *it;
      try {
        const auto run = run_online(resolve_policy(ada, pc, b), env, cfg.horizon, cfg.seeds[s]);
        ada_final[s] = run.final_regret();
        evictions[s] = run.events.size();
        clean[s] = std::all_of(run.events.begin(), run.events.end(), [&](const AdaEvent& e) { return e.evicted_eps < pc.eps; });
      } catch (const ConfigError&) {
        ada_final[s] = std::nan("");  // every learner evicted
      }
      pc.eps = e_star;
      ref_final[s] = run_online(resolve_policy(spec(PolicyKind::kMtUcb, WidthRule::kNew), pc, b), env, cfg.horizon, cfg.seeds[s]).final_regret();
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::size_t n_clean = 0, total_ev = 0;
  double ada_mean = 0.0, ref_mean = 0.0, worst_ratio = 0.0;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    n_clean += clean[s] ? 1 : 0;
    total_ev += evictions[s];
    ada_mean += ada_final[s] / static_cast<double>(n_seeds);
    ref_mean += ref_final[s] / static_cast<double>(n_seeds);
    worst_ratio = std::max(worst_ratio, ada_final[s] / ref_final[s]);
  }
  const double clean_rate = static_cast<double>(n_clean) / static_cast<double>(n_seeds);
  const double eps_mean = std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(n_seeds);
  r.passed = clean_rate >= 0.95 && std::isfinite(ada_mean) && ada_mean <= 2.0 * ref_mean;
  r.detail = "mean true eps " + fmt("%.3f", eps_mean) + ", b=" + fmt("%g", kAdaB) + "; runs evicting only values < eps: " +
             std::to_string(n_clean) + "/" + std::to_string(n_seeds) + " (" + std::to_string(total_ev) +
             " evictions); mean final regret " + fmt("%.1f", ada_mean) + " vs well-specified mt-ucb " + fmt("%.1f", ref_mean) +
             " (ratio " + fmt("%.3f", ada_mean / ref_mean) + ", worst seed " + fmt("%.3f", worst_ratio) + ")";
  return r;
}

CriterionResult crit_variance(const VarianceLedger& ledger) {
  CriterionResult r{10, "posterior variance cap", false, "", 0.0};
  r.passed = ledger.runs > 0 && ledger.worst <= 1e-10;
  r.detail = std::to_string(ledger.runs) + " audited runs of criteria 6-8, max (sigma^2 - lambda) = " + fmt("%.3e", ledger.worst) +
             " (tol 1e-10)";
  return r;
}

// A criterion with a runtime limit fails when it runs over.
template <typename F>
CriterionResult timed(const ValidationOptions& o, int id, const char* name, double limit_seconds, F&& f) {
  const auto start = Clock::now();
  CriterionResult r;
  try {
    r = f();
  } catch (const std::exception& e) {
    r = {id, name, false, std::string("error: ") + e.what(), 0.0};
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (limit_seconds > 0.0 && r.seconds > limit_seconds) {
    r.passed = false;
    r.detail += "; over the " + fmt("%g", limit_seconds) + " s limit";
  }
  if (o.on_result) o.on_result(r);
  return r;
}

}  // namespace

std::vector<CriterionResult> run_validation(const ValidationOptions& o) {
  std::vector<CriterionResult> out;
  VarianceLedger ledger;
  double chosen_b = 1.0;
  out.push_back(timed(o, 1, "b=0 and pooled equivalence", 1.0, crit_equivalence));
  out.push_back(timed(o, 2, "Kronecker Sherman-Morrison inverse", 1.0, crit_ksm));
  out.push_back(timed(o, 3, "feature-map Gram consistency", 0.0, crit_feature_map));
  out.push_back(timed(o, 4, "width structure", 0.0, crit_widths));
  out.push_back(timed(o, 5, "information-gain bounds", 0.0, crit_info_gain));
  out.push_back(timed(o, 6, "coverage", 300.0, [&] { return crit_coverage(o, ledger); }));
  out.push_back(timed(o, 7, "online regret ordering", 600.0, [&] { return crit_online(o, ledger, chosen_b); }));
  out.push_back(timed(o, 8, "active-learning regret", 0.0, [&] { return crit_active(o, ledger, chosen_b); }));
  out.push_back(timed(o, 9, "AdaMT-UCB model selection", 0.0, [&] { return crit_adamt(o); }));
  out.push_back(timed(o, 10, "posterior variance cap", 0.0, [&] { return crit_variance(ledger); }));
  return out;
}

std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os << "criterion " << r.id << (r.id < 10 ? "  " : " ") << (r.passed ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail
     << " (" << fmt("%.2f", r.seconds) << " s)";
  return os.str();
}

}  // namespace mtk
