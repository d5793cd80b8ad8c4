#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtk/errors.hpp"
#include "mtk/experiment.hpp"
#include "mtk/validation.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kNumerical = 2, kIo = 3 };

struct RunFlags {
  std::string config;
  std::string out;
  std::string seeds;
  std::vector<double> sweep_b;
  std::size_t horizon = 0;
  int jobs = -1;
  bool plot = false;
  bool trace = false;
  bool audit = false;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw mtk::ConfigError("--seeds: '" + item + "' is not a nonnegative integer");
    }
  }
  // A single number is a count: seeds 1..n.
  if (out.size() == 1 && text.find(',') == std::string::npos) {
    const auto n = out[0];
    out.clear();
    for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
  }
  return out;
}

void print_summary(const mtk::ExperimentConfig& cfg, const mtk::ExperimentResult& res, const std::string& out_dir) {
  if (cfg.mode == mtk::ExperimentMode::kWidthsBench) {
    std::printf("wrote %zu width rows to %s/widths.csv\n", res.widths.size(), out_dir.c_str());
    return;
  }
  if (res.chosen_b) std::printf("b = %g%s\n", *res.chosen_b, res.sweep.empty() ? "" : " (chosen by sweep)");
  for (const auto& p : res.summary) {
    std::printf("%-24s final regret %10.3f +/- %.3f  (%zu runs)\n", p.label.c_str(), p.mean_final_regret, p.stderr_final_regret,
                p.runs);
  }
  std::printf("results in %s\n", out_dir.c_str());
}

int run_mode(mtk::ExperimentMode mode, const RunFlags& f, const CLI::App& sub) {
  mtk::ExperimentConfig cfg;
  if (!f.config.empty()) {
    cfg = mtk::load_config(f.config, mode);
  } else if (mode == mtk::ExperimentMode::kWidthsBench) {
    cfg.mode = mode;
  } else {
    throw mtk::ConfigError("--config is required for this subcommand");
  }
  if (!f.seeds.empty()) cfg.seeds = parse_seeds(f.seeds);
  if (f.horizon > 0) cfg.horizon = f.horizon;
  if (f.jobs >= 0) cfg.jobs = f.jobs;
  if (f.plot) cfg.plot = true;
  if (f.trace) cfg.write_trace = true;
  if (f.audit) cfg.audit = true;
  if (sub.count("--sweep-b") > 0) cfg.sweep_b = f.sweep_b.empty() ? mtk::default_sweep_grid() : f.sweep_b;

  std::string out_dir = cfg.output_dir;
  if (const char* env = std::getenv("MTK_OUTPUT_DIR"); env != nullptr && *env != '\0') out_dir = env;
  if (!f.out.empty()) out_dir = f.out;

  cfg.validate();
  const auto res = mtk::run_experiment(cfg);
  mtk::write_outputs(cfg, res, out_dir);
  print_summary(cfg, res, out_dir);
  return kOk;
}

void add_run_flags(CLI::App* sub, RunFlags& f, bool config_required) {
  auto* c = sub->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) c->required();
  sub->add_option("--out", f.out, "output directory (overrides MTK_OUTPUT_DIR and the config)");
  sub->add_option("--seeds", f.seeds, "seed count N (seeds 1..N) or a comma list");
  sub->add_option("--horizon", f.horizon, "override the horizon T");
  sub->add_option("--jobs", f.jobs, "parallel runs (0: all cores)");
  sub->add_flag("--plot", f.plot, "write SVG plots");
  sub->add_flag("--trace", f.trace, "write the per-step trace.csv");
  sub->add_flag("--audit", f.audit, "check coverage and the variance cap on every run");
  sub->add_option("--sweep-b", f.sweep_b, "choose b from this grid first (no values: default grid)")
      ->expected(0, CLI::detail::expected_max_vector_size)
      ->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask kernel bandits: experiments and validation"};
  app.require_subcommand(1);

  RunFlags online_f, active_f, widths_f;
  auto* online = app.add_subcommand("online", "online multitask regret experiment");
  add_run_flags(online, online_f, true);
  auto* active = app.add_subcommand("active", "active-learning regret experiment");
  add_run_flags(active, active_f, true);
  auto* widths = app.add_subcommand("widths-bench", "confidence widths over a b grid");
  widths->alias("bench-widths");
  add_run_flags(widths, widths_f, false);

  bool quick = false;
  int validate_jobs = 0;
  auto* validate = app.add_subcommand("validate", "run the oracle and acceptance checks");
  validate->add_flag("--quick", quick, "reduced run counts");
  validate->add_option("--jobs", validate_jobs, "parallel runs (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*online) return run_mode(mtk::ExperimentMode::kOnline, online_f, *online);
    if (*active) return run_mode(mtk::ExperimentMode::kActive, active_f, *active);
    if (*widths) return run_mode(mtk::ExperimentMode::kWidthsBench, widths_f, *widths);
    if (*validate) {
      mtk::ValidationOptions opts;
      opts.quick = quick;
      opts.jobs = validate_jobs;
      opts.on_result = [](const mtk::CriterionResult& r) {
        std::printf("%s\n", mtk::format_result(r).c_str());
        std::fflush(stdout);
      };
      int failed = 0;
      for (const auto& r : mtk::run_validation(opts)) failed += r.passed ? 0 : 1;
      std::printf("%d/10 criteria passed\n", 10 - failed);
      return failed == 0 ? kOk : kConfig;
    }
  } catch (const mtk::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const mtk::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const mtk::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
  return kOk;
}
