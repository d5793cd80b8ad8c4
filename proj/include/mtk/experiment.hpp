#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtk/envs.hpp"
#include "mtk/policies.hpp"

namespace mtk {

enum class ExperimentMode { kOnline, kActive, kWidthsBench };
const char* to_string(ExperimentMode mode);
ExperimentMode experiment_mode_from_string(const std::string& name);

/// Task coupling for a policy: explicit b, the selection rule, or pooled.
struct CouplingSpec {
  enum class Kind { kValue, kTheorem, kPooled } kind = Kind::kValue;
  double b = 1.0;
};

/// Ridge choice: the theorem value (N+b)/(N+bN), one, or an explicit number.
struct RidgeSpec {
  enum class Kind { kTheorem, kOne, kValue } kind = Kind::kTheorem;
  double value = 1.0;
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::kMtUcb;
  std::string label;                    // defaults to kind[-width]
  std::optional<WidthRule> width;       // defaults per kind
  std::optional<RidgeSpec> ridge;       // defaults per width rule
  std::optional<CouplingSpec> coupling; // defaults to the experiment-level b
  bool data_dependent_bias = false;
  std::vector<double> eps_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double concentration_c = 1.0;
  AdaCoupling ada_coupling = AdaCoupling::kTheorem;
};

struct EnvSource {
  bool synthetic = true;
  SyntheticSpec spec;
  std::string dataset_path;
  bool standardize = true;
  double noise_sigma = 1.0;
  std::vector<std::string> allowed_labels;
};

struct ProblemSettings {
  /// Norm bound in the environment's own units; the learner's bound is
  /// B / sqrt(kernel variance) for the linear kernel.
  double bound_B = 1.0;
  std::optional<double> eps;  // unset: exact per-seed value (synthetic only)
  double delta = 0.1;
  KernelKind kernel = KernelKind::kLinear;
  double lengthscale = 1.0;
  std::optional<double> kernel_variance;  // unset: 1/max||x||^2 for linear, 1 otherwise
};

struct WidthsBenchSpec {
  double bound_B = 1.0;
  double eps = 0.4;
  std::size_t n_tasks = 20;
  std::size_t t = 4;
  double delta = 0.1;
  double gamma_mt = 0.0;
  double gamma_st = 0.0;
  double b_min = 1e-3;
  double b_max = 1e4;
  std::size_t points = 100;
  RidgeSpec ridge;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::kOnline;
  std::size_t horizon = 300;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "results";
  bool plot = false;
  bool write_trace = false;
  bool audit = false;  // coverage and variance-cap checks on every run
  int jobs = 0;  // 0: OpenMP default
  EnvSource env;
  ProblemSettings problem;
  CouplingSpec coupling;      // experiment-level b
  std::vector<double> sweep_b;  // non-empty: choose b by mean final regret first
  std::vector<PolicySpec> policies;
  WidthsBenchSpec widths;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Parses the JSON config format documented in README.md. Unknown keys are
/// errors. `mode` (from the CLI subcommand) fills in or must match the file's mode.
ExperimentConfig parse_config(const std::string& text, std::optional<ExperimentMode> mode = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<ExperimentMode> mode = std::nullopt);

/// Default b grid for `--sweep-b` without explicit values.
std::vector<double> default_sweep_grid();

/// Concrete per-seed problem derived from the config.
ProblemConstants problem_constants(const ExperimentConfig& cfg, const Environment& env);
PolicyConfig resolve_policy(const PolicySpec& spec, const ProblemConstants& pc, const CouplingSpec& experiment_b);

struct PolicySummary {
  std::string label;
  PolicyKind kind = PolicyKind::kMtUcb;
  std::size_t runs = 0;
  double mean_final_regret = 0.0;
  double stderr_final_regret = 0.0;
  std::size_t evictions = 0;
};

struct SweepPoint {
  double b = 0.0;
  double mean_final_regret = 0.0;
};

struct WidthRow {
  double b = 0.0;
  double naive = 0.0;
  double small_b = 0.0;
  double large_b = 0.0;
  double best = 0.0;
};

struct ExperimentResult {
  ExperimentMode mode = ExperimentMode::kOnline;
  std::vector<RunTrace> runs;  // policy-major, seed-minor
  std::vector<PolicySummary> summary;
  std::optional<double> chosen_b;
  std::string sweep_selector;
  std::vector<SweepPoint> sweep;
  std::vector<RunTrace> sweep_runs;  // selector runs, b-major, seed-minor
  std::vector<double> eps_per_seed;
  std::vector<WidthRow> widths;
};

/// Runs every (policy, seed) pair in memory; nothing is written.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Mean and standard error (sample sd / sqrt(n); 0 for n = 1).
std::pair<double, double> mean_stderr(const std::vector<double>& v);

/// Writes results.csv, summary.json and optional plots/traces. Files are
/// staged and renamed so a failure leaves no partial output.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, const std::string& out_dir);

/// Width rows over a log-spaced b grid.
std::vector<WidthRow> widths_sweep(const WidthsBenchSpec& spec);

}  // namespace mtk
