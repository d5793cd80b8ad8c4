#include "mtk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mtk/errors.hpp"
#include "mtk/plot.hpp"

namespace mtk {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::kOnline: return "online";
    case ExperimentMode::kActive: return "active";
    case ExperimentMode::kWidthsBench: return "widths-bench";
  }
  return "?";
}

ExperimentMode experiment_mode_from_string(const std::string& name) {
  if (name == "online") return ExperimentMode::kOnline;
  if (name == "active") return ExperimentMode::kActive;
  if (name == "widths-bench" || name == "bench-widths") return ExperimentMode::kWidthsBench;
  throw ConfigError("unknown mode '" + name + "'");
}

std::vector<double> default_sweep_grid() { return {0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0}; }

// ---------------------------------------------------------------------------
// Parsing

namespace {

// Reads keys of one JSON object and rejects anything left unread.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    out = as<T>(raw(key), key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail("unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config" + (path_.empty() ? std::string() : " [" + path_ + "]") + ": " + msg);
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  T as(const json& v, const char* key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(std::string(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
        fail(std::string(key) + " must be a nonnegative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(std::string(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(std::string(key) + " must be a string");
    }
    return v.get<T>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> number_list(const Section& s, const json& v, const char* key) {
  if (!v.is_array()) s.fail(std::string(key) + " must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(s.as<double>(x, key));
  return out;
}

CouplingSpec parse_coupling(const Section& s, const json& v) {
  CouplingSpec c;
  if (v.is_number()) {
    c.kind = CouplingSpec::Kind::kValue;
    c.b = v.get<double>();
    if (!(c.b >= 0.0) || !std::isfinite(c.b)) s.fail("b must be a finite number >= 0");
  } else if (v == "theorem") {
    c.kind = CouplingSpec::Kind::kTheorem;
  } else if (v == "pooled") {
    c.kind = CouplingSpec::Kind::kPooled;
  } else {
    s.fail("b must be a number, \"theorem\" or \"pooled\"");
  }
  return c;
}

RidgeSpec parse_ridge(const Section& s, const json& v) {
  RidgeSpec r;
  if (v.is_number()) {
    r.kind = RidgeSpec::Kind::kValue;
    r.value = v.get<double>();
    if (!(r.value > 0.0)) s.fail("ridge must be > 0");
  } else if (v == "theorem") {
    r.kind = RidgeSpec::Kind::kTheorem;
  } else if (v == "one") {
    r.kind = RidgeSpec::Kind::kOne;
  } else {
    s.fail("ridge must be a number, \"theorem\" or \"one\"");
  }
  return r;
}

WidthRule parse_width(const Section& s, const json& v) {
  const auto name = s.as<std::string>(v, "width");
  try {
    return width_rule_from_string(name);
  } catch (const std::invalid_argument& e) {
    s.fail(e.what());
  }
}

PolicySpec parse_policy(const json& j, const std::string& path) {
  Section s(j, path);
  PolicySpec p;
  if (!s.has("kind")) s.fail("missing 'kind'");
  p.kind = policy_kind_from_string(s.as<std::string>(s.raw("kind"), "kind"));
  s.get("label", p.label);
  if (s.has("width")) p.width = parse_width(s, s.raw("width"));
  if (s.has("ridge")) p.ridge = parse_ridge(s, s.raw("ridge"));
  if (s.has("b")) p.coupling = parse_coupling(s, s.raw("b"));
  s.get("data_dependent_bias", p.data_dependent_bias);
  if (s.has("eps_grid")) p.eps_grid = number_list(s, s.raw("eps_grid"), "eps_grid");
  s.get("c", p.concentration_c);
  if (s.has("coupling")) {
    const auto v = s.as<std::string>(s.raw("coupling"), "coupling");
    if (v == "theorem") p.ada_coupling = AdaCoupling::kTheorem;
    else if (v == "fixed") p.ada_coupling = AdaCoupling::kFixed;
    else s.fail("coupling must be \"theorem\" or \"fixed\"");
  }
  const bool ada_keys = s.has("eps_grid") || s.has("c") || s.has("coupling");
  if (ada_keys && p.kind != PolicyKind::kAdaMtUcb) s.fail("eps_grid, c and coupling apply to adamt-ucb only");
  s.finish();
  return p;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentMode> mode) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(j, "");
  if (top.has("mode")) {
    c.mode = experiment_mode_from_string(top.as<std::string>(top.raw("mode"), "mode"));
    if (mode && *mode != c.mode) top.fail(std::string("mode '") + to_string(c.mode) + "' conflicts with subcommand '" + to_string(*mode) + "'");
  } else if (mode) {
    c.mode = *mode;
  } else {
    top.fail("missing 'mode'");
  }
  top.get("horizon", c.horizon);
  if (top.has("seeds")) {
    const json& v = top.raw("seeds");
    if (v.is_number_integer()) {
      const auto n = top.as<std::size_t>(v, "seeds");
      c.seeds.clear();
      for (std::size_t k = 1; k <= n; ++k) c.seeds.push_back(k);
    } else if (v.is_array()) {
      c.seeds.clear();
      for (const auto& x : v) c.seeds.push_back(top.as<std::uint64_t>(x, "seeds"));
    } else {
      top.fail("seeds must be a count or a list of integers");
    }
  }
  top.get("output_dir", c.output_dir);
  top.get("plot", c.plot);
  top.get("trace", c.write_trace);
  top.get("audit", c.audit);
  if (top.has("jobs")) c.jobs = static_cast<int>(top.as<std::size_t>(top.raw("jobs"), "jobs"));
  if (top.has("b")) c.coupling = parse_coupling(top, top.raw("b"));
  if (top.has("sweep_b")) {
    const json& v = top.raw("sweep_b");
    if (v.is_boolean()) {
      if (v.get<bool>()) c.sweep_b = default_sweep_grid();
    } else {
      c.sweep_b = number_list(top, v, "sweep_b");
    }
  }

  if (top.has("env")) {
    Section e(top.raw("env"), "env");
    std::string type = "synthetic";
    e.get("type", type);
    if (type == "synthetic") {
      c.env.synthetic = true;
      e.get("dim", c.env.spec.dim);
      e.get("n_tasks", c.env.spec.n_tasks);
      e.get("dev_delta", c.env.spec.dev_delta);
      e.get("pool_size", c.env.spec.pool_size);
      e.get("sphere_radius", c.env.spec.sphere_radius);
      e.get("noise_sigma", c.env.spec.noise_sigma);
      c.env.noise_sigma = c.env.spec.noise_sigma;
    } else if (type == "dataset") {
      c.env.synthetic = false;
      if (!e.has("path")) e.fail("dataset needs 'path'");
      e.get("path", c.env.dataset_path);
      e.get("standardize", c.env.standardize);
      e.get("noise_sigma", c.env.noise_sigma);
      if (e.has("labels")) {
        const json& v = e.raw("labels");
        if (!v.is_array()) e.fail("labels must be a list of strings");
        for (const auto& x : v) c.env.allowed_labels.push_back(e.as<std::string>(x, "labels"));
      }
    } else {
      e.fail("type must be \"synthetic\" or \"dataset\"");
    }
    e.finish();
  }

  if (top.has("problem")) {
    Section p(top.raw("problem"), "problem");
    p.get("B", c.problem.bound_B);
    if (p.has("eps")) {
      const json& v = p.raw("eps");
      if (v == "true") c.problem.eps.reset();
      else c.problem.eps = p.as<double>(v, "eps");
    }
    p.get("delta", c.problem.delta);
    if (p.has("kernel")) {
      const auto k = p.as<std::string>(p.raw("kernel"), "kernel");
      if (k == "linear") c.problem.kernel = KernelKind::kLinear;
      else if (k == "se" || k == "squared_exponential") c.problem.kernel = KernelKind::kSquaredExponential;
      else p.fail("kernel must be \"linear\" or \"se\"");
    }
    p.get("lengthscale", c.problem.lengthscale);
    if (p.has("kernel_variance")) {
      const json& v = p.raw("kernel_variance");
      if (v == "auto") c.problem.kernel_variance.reset();
      else c.problem.kernel_variance = p.as<double>(v, "kernel_variance");
    }
    p.finish();
  }

  if (top.has("policies")) {
    const json& v = top.raw("policies");
    if (!v.is_array()) top.fail("policies must be a list");
    for (std::size_t k = 0; k < v.size(); ++k) c.policies.push_back(parse_policy(v[k], "policies[" + std::to_string(k) + "]"));
  }

  if (top.has("widths")) {
    Section w(top.raw("widths"), "widths");
    w.get("B", c.widths.bound_B);
    w.get("eps", c.widths.eps);
    w.get("n_tasks", c.widths.n_tasks);
    w.get("t", c.widths.t);
    w.get("delta", c.widths.delta);
    w.get("gamma_mt", c.widths.gamma_mt);
    w.get("gamma_st", c.widths.gamma_st);
    w.get("b_min", c.widths.b_min);
    w.get("b_max", c.widths.b_max);
    w.get("points", c.widths.points);
    if (w.has("ridge")) c.widths.ridge = parse_ridge(w, w.raw("ridge"));
    w.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<ExperimentMode> mode) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  ExperimentConfig c = parse_config(ss.str(), mode);
  // Dataset paths are relative to the config file.
  if (!c.env.synthetic && fs::path(c.env.dataset_path).is_relative()) {
    c.env.dataset_path = (fs::path(path).parent_path() / c.env.dataset_path).string();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Validation and resolution

namespace {

std::string default_label(const PolicySpec& p) {
  switch (p.kind) {
    case PolicyKind::kIndependent:
    case PolicyKind::kPooled:
      return to_string(p.kind);
    default: {
      const WidthRule r = p.width.value_or(WidthRule::kNew);
      return std::string(to_string(p.kind)) + "-" + (r == WidthRule::kNew ? "improved" : to_string(r));
    }
  }
}

std::string label_of(const PolicySpec& p) { return p.label.empty() ? default_label(p) : p.label; }

}  // namespace

void ExperimentConfig::validate() const {
  if (mode == ExperimentMode::kWidthsBench) {
    const auto& w = widths;
    if (!(w.bound_B > 0.0)) throw ConfigError("widths: B must be > 0");
    if (!(w.eps >= 0.0 && w.eps <= 2.0)) throw ConfigError("widths: eps must lie in [0, 2]");
    if (w.n_tasks == 0) throw ConfigError("widths: n_tasks must be >= 1");
    if (!(w.delta > 0.0 && w.delta <= 1.0)) throw ConfigError("widths: delta must lie in (0, 1]");
    if (!(w.b_min > 0.0 && w.b_max > w.b_min)) throw ConfigError("widths: need 0 < b_min < b_max");
    if (w.points < 2) throw ConfigError("widths: need at least 2 points");
    if (w.gamma_mt < 0.0 || w.gamma_st < 0.0) throw ConfigError("widths: information gains must be >= 0");
    return;
  }
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) throw ConfigError("seeds must be distinct");
  if (policies.empty()) throw ConfigError("at least one policy is required");
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
  if (env.synthetic) {
    try {
      env.spec.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("env: ") + e.what());
    }
  } else {
    if (env.dataset_path.empty()) throw ConfigError("env: dataset path is empty");
    if (!problem.eps) throw ConfigError("problem: eps must be given for dataset environments");
    if (!(env.noise_sigma >= 0.0)) throw ConfigError("env: noise_sigma must be >= 0");
  }
  if (!(problem.bound_B > 0.0)) throw ConfigError("problem: B must be > 0");
  if (problem.eps && !(*problem.eps >= 0.0 && *problem.eps <= 2.0)) throw ConfigError("problem: eps must lie in [0, 2]");
  if (!(problem.delta > 0.0 && problem.delta <= 1.0)) throw ConfigError("problem: delta must lie in (0, 1]");
  if (!(problem.lengthscale > 0.0)) throw ConfigError("problem: lengthscale must be > 0");
  if (problem.kernel_variance && !(*problem.kernel_variance > 0.0)) throw ConfigError("problem: kernel_variance must be > 0");

  std::set<std::string> labels;
  for (const auto& p : policies) {
    const bool active = is_active_kind(p.kind);
    if (mode == ExperimentMode::kOnline && active) throw ConfigError("policy '" + label_of(p) + "' needs mode active");
    if (mode == ExperimentMode::kActive && !active) throw ConfigError("policy '" + label_of(p) + "' needs mode online");
    if (!labels.insert(label_of(p)).second) throw ConfigError("duplicate policy label '" + label_of(p) + "'");
    if ((p.kind == PolicyKind::kIndependent || p.kind == PolicyKind::kPooled) && p.coupling) {
      throw ConfigError("policy '" + label_of(p) + "' has a fixed coupling; remove 'b'");
    }
    if (label_of(p).find_first_of(",\"\n") != std::string::npos) throw ConfigError("policy labels may not contain , \" or newlines");
  }
  if (!sweep_b.empty()) {
    if (coupling.kind != CouplingSpec::Kind::kValue) throw ConfigError("sweep_b needs a numeric experiment-level b");
    for (double b : sweep_b) {
      if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("sweep_b values must be finite and >= 0");
    }
  }
}

namespace {

std::vector<Environment> build_environments(const ExperimentConfig& cfg) {
  std::vector<Environment> envs;
  if (cfg.env.synthetic) {
    for (auto seed : cfg.seeds) envs.push_back(generate_synthetic(cfg.env.spec, seed));
  } else {
    envs.push_back(load_dataset(cfg.env.dataset_path, cfg.env.standardize, cfg.env.noise_sigma, cfg.env.allowed_labels));
  }
  return envs;
}

double max_sq_norm(const Environment& env) {
  double m = 0.0;
  const std::size_t pools = env.shared_pool() ? 1 : env.n_tasks();
  for (std::size_t i = 0; i < pools; ++i) m = std::max(m, env.pool(i).rowwise().squaredNorm().maxCoeff());
  return m;
}

}  // namespace

ProblemConstants problem_constants(const ExperimentConfig& cfg, const Environment& env) {
  ProblemConstants pc;
  pc.n_tasks = env.n_tasks();
  pc.delta = cfg.problem.delta;
  pc.horizon = cfg.horizon;
  double B = cfg.problem.bound_B;
  if (env.is_linear()) B = std::max(B, env.weights().rowwise().norm().maxCoeff());
  if (cfg.problem.kernel == KernelKind::kLinear) {
    double v = 1.0;
    if (cfg.problem.kernel_variance) {
      v = *cfg.problem.kernel_variance;
    } else {
      const double m = max_sq_norm(env);
      v = m > 0.0 ? 1.0 / m : 1.0;
    }
    pc.base = BaseKernel::linear(env.dim(), v);
    pc.bound_B = B / std::sqrt(v);
  } else {
    pc.base = BaseKernel::squared_exponential(env.dim(), cfg.problem.lengthscale, cfg.problem.kernel_variance.value_or(1.0));
    pc.bound_B = B;
  }
  if (cfg.problem.eps) {
    pc.eps = *cfg.problem.eps;
  } else {
    if (!env.is_linear()) throw ConfigError("problem: eps must be given for tabular environments");
    pc.eps = true_epsilon(env, cfg.problem.bound_B);
  }
  return pc;
}

PolicyConfig resolve_policy(const PolicySpec& spec, const ProblemConstants& pc, const CouplingSpec& experiment_b) {
  PolicyConfig c;
  if (spec.kind == PolicyKind::kIndependent) {
    c = preset_independent(pc);
  } else if (spec.kind == PolicyKind::kPooled) {
    c = preset_pooled(pc);
  } else {
    const CouplingSpec cs = spec.coupling.value_or(experiment_b);
    c = preset_improved(pc, 0.0);
    switch (cs.kind) {
      case CouplingSpec::Kind::kValue:
        c.width.coupling = TaskCoupling(cs.b, pc.n_tasks);
        break;
      case CouplingSpec::Kind::kTheorem:
        c.width.coupling = select_b_lambda(pc.n_tasks, pc.horizon, pc.eps).coupling;
        break;
      case CouplingSpec::Kind::kPooled:
        c.width.coupling = TaskCoupling::pooled(pc.n_tasks);
        c.width.deviation_eps = 0.0;
        break;
    }
    c.rule = spec.width.value_or(WidthRule::kNew);
    c.width.ridge = c.rule == WidthRule::kNaive ? 1.0 : theorem_ridge(c.width.coupling);
  }
  c.kind = spec.kind;
  if (spec.width) c.rule = *spec.width;
  if (spec.ridge) {
    switch (spec.ridge->kind) {
      case RidgeSpec::Kind::kTheorem: c.width.ridge = theorem_ridge(c.width.coupling); break;
      case RidgeSpec::Kind::kOne: c.width.ridge = 1.0; break;
      case RidgeSpec::Kind::kValue: c.width.ridge = spec.ridge->value; break;
    }
  }
  c.width.data_dependent_bias = spec.data_dependent_bias;
  c.label = label_of(spec);
  c.eps_grid = spec.eps_grid;
  c.concentration_c = spec.concentration_c;
  c.ada_coupling = spec.ada_coupling;
  c.horizon = pc.horizon;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Running

std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

namespace {

struct Job {
  PolicyConfig config;
  const Environment* env;
  std::uint64_t seed;
};

std::vector<RunTrace> run_jobs(const std::vector<Job>& jobs, ExperimentMode mode, std::size_t horizon, int threads,
                               const AuditOptions& audit) {
  std::vector<RunTrace> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
#ifdef _OPENMP
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#else
  const int nt = 1;
  (void)threads;
#endif
  const auto n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
  for (long k = 0; k < n; ++k) {
    const auto& j = jobs[static_cast<std::size_t>(k)];
    try {
      out[static_cast<std::size_t>(k)] = mode == ExperimentMode::kActive ? run_active(j.config, *j.env, horizon, j.seed, audit)
                                                                          : run_online(j.config, *j.env, horizon, j.seed, audit);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::size_t selector_index(const ExperimentConfig& cfg) {
  const PolicyKind primary = cfg.mode == ExperimentMode::kActive ? PolicyKind::kMtAl : PolicyKind::kMtUcb;
  auto eligible = [](const PolicySpec& p) {
    return !p.coupling && p.kind != PolicyKind::kIndependent && p.kind != PolicyKind::kPooled;
  };
  for (std::size_t k = 0; k < cfg.policies.size(); ++k) {
    const auto& p = cfg.policies[k];
    if (eligible(p) && p.kind == primary && p.width.value_or(WidthRule::kNew) == WidthRule::kNew) return k;
  }
  for (std::size_t k = 0; k < cfg.policies.size(); ++k) {
    if (eligible(cfg.policies[k])) return k;
  }
  throw ConfigError("sweep_b: no policy uses the experiment-level b");
}

}  // namespace

std::vector<WidthRow> widths_sweep(const WidthsBenchSpec& spec) {
  std::vector<WidthRow> rows;
  const double lo = std::log10(spec.b_min), hi = std::log10(spec.b_max);
  for (std::size_t k = 0; k < spec.points; ++k) {
    const double b = std::pow(10.0, lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(spec.points - 1));
    WidthParams p;
    p.bound_B = spec.bound_B;
    p.deviation_eps = spec.eps;
    p.delta = spec.delta;
    p.coupling = TaskCoupling(b, spec.n_tasks);
    switch (spec.ridge.kind) {
      case RidgeSpec::Kind::kTheorem: p.ridge = theorem_ridge(p.coupling); break;
      case RidgeSpec::Kind::kOne: p.ridge = 1.0; break;
      case RidgeSpec::Kind::kValue: p.ridge = spec.ridge.value; break;
    }
    const WidthReport r = beta_new(p, spec.gamma_mt, spec.gamma_st, spec.t);
    rows.push_back({b, r.naive, r.small_b, r.large_b, r.best});
  }
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.mode = cfg.mode;
  if (cfg.mode == ExperimentMode::kWidthsBench) {
    res.widths = widths_sweep(cfg.widths);
    return res;
  }

  const auto envs = build_environments(cfg);
  auto env_for = [&](std::size_t s) -> const Environment& { return envs.size() == 1 ? envs[0] : envs[s]; };
  std::vector<ProblemConstants> pcs;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    pcs.push_back(problem_constants(cfg, env_for(s)));
    res.eps_per_seed.push_back(pcs.back().eps);
  }
  const AuditOptions audit{cfg.audit, cfg.audit};

  CouplingSpec b = cfg.coupling;
  if (!cfg.sweep_b.empty()) {
    const std::size_t sel = selector_index(cfg);
    res.sweep_selector = label_of(cfg.policies[sel]);
    std::vector<Job> jobs;
    for (double value : cfg.sweep_b) {
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        jobs.push_back({resolve_policy(cfg.policies[sel], pcs[s], {CouplingSpec::Kind::kValue, value}), &env_for(s), cfg.seeds[s]});
      }
    }
    res.sweep_runs = run_jobs(jobs, cfg.mode, cfg.horizon, cfg.jobs, audit);
    const auto& runs = res.sweep_runs;
    std::size_t best = 0;
    for (std::size_t g = 0; g < cfg.sweep_b.size(); ++g) {
      std::vector<double> finals;
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) finals.push_back(runs[g * cfg.seeds.size() + s].final_regret());
      res.sweep.push_back({cfg.sweep_b[g], mean_stderr(finals).first});
      if (res.sweep[g].mean_final_regret < res.sweep[best].mean_final_regret) best = g;
    }
    b = {CouplingSpec::Kind::kValue, cfg.sweep_b[best]};
    res.chosen_b = cfg.sweep_b[best];
  } else if (cfg.coupling.kind == CouplingSpec::Kind::kValue) {
    res.chosen_b = cfg.coupling.b;
  }

  std::vector<Job> jobs;
  for (const auto& p : cfg.policies) {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({resolve_policy(p, pcs[s], b), &env_for(s), cfg.seeds[s]});
  }
  res.runs = run_jobs(jobs, cfg.mode, cfg.horizon, cfg.jobs, audit);

  for (std::size_t k = 0; k < cfg.policies.size(); ++k) {
    PolicySummary ps;
    ps.label = label_of(cfg.policies[k]);
    ps.kind = cfg.policies[k].kind;
    std::vector<double> finals;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      const auto& r = res.runs[k * cfg.seeds.size() + s];
      finals.push_back(r.final_regret());
      ps.evictions += r.events.size();
    }
    ps.runs = finals.size();
    std::tie(ps.mean_final_regret, ps.stderr_final_regret) = mean_stderr(finals);
    res.summary.push_back(ps);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string event_text(const StepRecord& r) {
  if (r.evicted_eps < 0.0) return "";
  std::ostringstream os;
  os << "evict:" << r.evicted_eps;
  return os.str();
}

// Files land under `<name>.tmp` first and are renamed together at the end.
class Staging {
 public:
  explicit Staging(fs::path dir) : dir_(std::move(dir)) {}
  ~Staging() {
    if (!committed_) {
      std::error_code ec;
      for (const auto& f : files_) fs::remove(tmp(f), ec);
    }
  }

  std::ofstream open(const std::string& name) {
    files_.push_back(name);
    std::ofstream f(tmp(name), std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp(name).string());
    return f;
  }

  void check(std::ofstream& f, const std::string& name) {
    f.close();
    if (!f) throw IoError("write failed: " + tmp(name).string());
  }

  void write_svg(const std::string& name, const PlotSpec& spec, const std::vector<Series>& series) {
    auto f = open(name);
    f << render_svg(spec, series);
    check(f, name);
  }

  void commit() {
    for (const auto& f : files_) {
      std::error_code ec;
      fs::rename(tmp(f), dir_ / f, ec);
      if (ec) throw IoError("cannot move output into place: " + (dir_ / f).string());
    }
    committed_ = true;
  }

 private:
  fs::path tmp(const std::string& name) const { return dir_ / (name + ".tmp"); }

  fs::path dir_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

json summary_json(const ExperimentConfig& cfg, const ExperimentResult& res) {
  json s;
  s["mode"] = to_string(cfg.mode);
  if (cfg.mode == ExperimentMode::kWidthsBench) {
    const auto& w = cfg.widths;
    s["parameters"] = {{"B", w.bound_B}, {"eps", w.eps}, {"n_tasks", w.n_tasks}, {"t", w.t}, {"delta", w.delta},
                       {"gamma_mt", w.gamma_mt}, {"gamma_st", w.gamma_st}, {"points", w.points}};
    std::size_t arg = 0;
    for (std::size_t k = 1; k < res.widths.size(); ++k) {
      if (res.widths[k].best < res.widths[arg].best) arg = k;
    }
    if (!res.widths.empty()) s["argmin_b_new"] = res.widths[arg].b, s["min_beta_new"] = res.widths[arg].best;
    return s;
  }
  s["horizon"] = cfg.horizon;
  s["seeds"] = cfg.seeds;
  s["chosen_b"] = res.chosen_b ? json(*res.chosen_b) : json(nullptr);
  if (!res.sweep.empty()) {
    s["sweep_selector"] = res.sweep_selector;
    json sweep = json::array();
    for (const auto& p : res.sweep) sweep.push_back({{"b", p.b}, {"mean_final_regret", p.mean_final_regret}});
    s["b_sweep"] = sweep;
  }
  s["eps_per_seed"] = res.eps_per_seed;
  json pols = json::array();
  for (std::size_t k = 0; k < res.summary.size(); ++k) {
    const auto& p = res.summary[k];
    json j{{"label", p.label},
           {"kind", to_string(p.kind)},
           {"runs", p.runs},
           {"mean_final_regret", p.mean_final_regret},
           {"stderr_final_regret", p.stderr_final_regret}};
    if (p.kind == PolicyKind::kAdaMtUcb) j["evictions"] = p.evictions;
    double wall = 0.0;
    std::size_t covered = 0;
    double excess = -1e300;
    for (std::size_t s2 = 0; s2 < p.runs; ++s2) {
      const auto& r = res.runs[k * p.runs + s2];
      wall += r.wall_seconds;
      covered += r.audit.coverage_held ? 1 : 0;
      excess = std::max(excess, r.audit.max_variance_excess);
    }
    j["mean_wall_seconds"] = wall / static_cast<double>(std::max<std::size_t>(1, p.runs));
    if (cfg.audit) {
      j["coverage_rate"] = static_cast<double>(covered) / static_cast<double>(p.runs);
      j["max_variance_excess"] = excess;
    }
    pols.push_back(j);
  }
  s["policies"] = pols;
  return s;
}

}  // namespace

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());
  Staging stage(out_dir);

  if (cfg.mode == ExperimentMode::kWidthsBench) {
    auto f = stage.open("widths.csv");
    f << "b,beta_naive,beta_small_b,beta_large_b,beta_new\n";
    for (const auto& r : res.widths) {
      f << num(r.b) << ',' << num(r.naive) << ',' << num(r.small_b) << ',' << num(r.large_b) << ',' << num(r.best) << '\n';
    }
    stage.check(f, "widths.csv");
    if (cfg.plot) {
      std::vector<Series> series(4);
      const char* names[] = {"naive", "small-b", "large-b", "new"};
      for (std::size_t k = 0; k < 4; ++k) series[k].label = names[k];
      for (const auto& r : res.widths) {
        const double v[] = {r.naive, r.small_b, r.large_b, r.best};
        for (std::size_t k = 0; k < 4; ++k) {
          series[k].x.push_back(r.b);
          series[k].y.push_back(v[k]);
        }
      }
      stage.write_svg("widths.svg", {"Confidence widths", "b", "beta", true, true}, series);
    }
  } else {
    auto f = stage.open("results.csv");
    f << "policy,seed,step,cum_regret,event\n";
    for (const auto& r : res.runs) {
      for (const auto& st : r.steps) f << r.label << ',' << r.seed << ',' << st.step << ',' << num(st.cum_regret) << ',' << event_text(st) << '\n';
    }
    stage.check(f, "results.csv");

    if (cfg.write_trace) {
      auto t = stage.open("trace.csv");
      t << "policy,seed,step,task,action,reward,beta,sigma,regret,cum_regret,width_bound,epoch,learner_eps,evicted_eps\n";
      for (const auto& r : res.runs) {
        for (const auto& st : r.steps) {
          t << r.label << ',' << r.seed << ',' << st.step << ',' << st.task << ',' << st.action << ',' << num(st.reward) << ','
            << num(st.beta) << ',' << num(st.sigma) << ',' << num(st.regret) << ',' << num(st.cum_regret) << ','
            << num(st.width_bound) << ',' << st.epoch << ',' << num(st.learner_eps) << ',' << num(st.evicted_eps) << '\n';
        }
      }
      stage.check(t, "trace.csv");
    }

    if (cfg.plot && !res.runs.empty()) {
      std::vector<Series> series;
      const std::size_t per = cfg.seeds.size();
      for (std::size_t k = 0; k < res.summary.size(); ++k) {
        Series s;
        s.label = res.summary[k].label;
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
          std::vector<double> vals;
          for (std::size_t j = 0; j < per; ++j) vals.push_back(res.runs[k * per + j].steps[t].cum_regret);
          const auto [m, se] = mean_stderr(vals);
          s.x.push_back(static_cast<double>(t + 1));
          s.y.push_back(m);
          s.band.push_back(se);
        }
        series.push_back(std::move(s));
      }
      const bool active = cfg.mode == ExperimentMode::kActive;
      stage.write_svg(active ? "regret_active.svg" : "regret_online.svg",
                      {active ? "Active learning regret" : "Online multitask regret", "step",
                       "cumulative regret (mean +/- s.e.)", false},
                      series);
    }
  }

  auto s = stage.open("summary.json");
  s << std::setw(2) << summary_json(cfg, res) << '\n';
  stage.check(s, "summary.json");
  stage.commit();
}

}  // namespace mtk
