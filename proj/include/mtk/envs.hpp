#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtk/pool_scan.hpp"
#include "mtk/rng.hpp"

namespace mtk {

/// Synthetic linear tasks f_i = (1 - dev_delta) f_bar + dev_delta f_dev_i with
/// random unit vectors f_bar, f_dev_i and a shared pool of points on a sphere.
struct SyntheticSpec {
  std::size_t dim = 4;
  std::size_t n_tasks = 5;
  double dev_delta = 0.4;
  std::size_t pool_size = 10000;
  double sphere_radius = 10.0;
  double noise_sigma = 1.0;

  void validate() const;
};

/// Ground truth of a multitask problem over finite candidate pools.
class Environment {
 public:
  /// Linear tasks: row i of `weights` is f_i; one pool shared by all tasks.
  static Environment linear(Eigen::MatrixXd weights, PointMatrix pool, double noise_sigma);
  /// Tabular tasks: per-task pools with a stored mean reward per row.
  static Environment tabular(std::vector<std::string> labels, std::vector<PointMatrix> pools,
                             std::vector<std::vector<double>> means, double noise_sigma);

  std::size_t n_tasks() const { return means_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(pools_.front().cols()); }
  bool is_linear() const { return weights_.has_value(); }
  bool shared_pool() const { return pools_.size() == 1; }
  const PointMatrix& pool(std::size_t task) const;
  std::size_t pool_size(std::size_t task) const { return static_cast<std::size_t>(pool(task).rows()); }
  /// Task weights (N x d); only for linear environments.
  const Eigen::MatrixXd& weights() const;
  const std::vector<std::string>& labels() const { return labels_; }
  double noise_sigma() const { return noise_sigma_; }

  double true_mean(std::size_t task, std::size_t index) const;
  std::span<const double> true_means(std::size_t task) const;
  /// f_i(x) for an arbitrary point; linear environments only.
  double true_mean(std::size_t task, const Eigen::VectorXd& x) const;
  double oracle_best(std::size_t task) const { return oracle_best_.at(task); }
  std::size_t oracle_index(std::size_t task) const { return oracle_index_.at(task); }

  /// f_i(x) plus N(0, noise_sigma^2); consumes exactly one normal draw.
  double feedback(std::size_t task, std::size_t index, Stream& noise) const;
  double feedback(std::size_t task, const Eigen::VectorXd& x, Stream& noise) const;

  /// max_x f_i(x) - f_i(x_t) over the task's pool.
  double online_regret_increment(std::size_t task, std::size_t index) const;
  /// (1/N) sum_i [max_x f_i(x) - f_i(x_i)], one recommended index per task.
  double al_regret_increment(std::span<const std::size_t> indices) const;

 private:
  Environment() = default;
  void finalize();

  std::vector<std::string> labels_;
  std::vector<PointMatrix> pools_;
  std::vector<std::vector<double>> means_;
  std::optional<Eigen::MatrixXd> weights_;
  std::vector<double> oracle_best_;
  std::vector<std::size_t> oracle_index_;
  double noise_sigma_ = 1.0;
};

/// Pure function of (spec, seed). Draw order on the environment stream:
/// f_bar, f_dev_1..f_dev_N, then pool points; each unit vector is d normals
/// normalized to norm one.
Environment generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// max_i |f_i - f_avg| / B with B = max(configured_B, max_i |f_i|), Euclidean
/// norms over the task weights. Throws for tabular environments.
double true_epsilon(const Environment& env, double configured_B = 1.0);

/// CSV with header `task,x_1,...,x_d,reward`; task labels are arbitrary strings
/// mapped to indices in order of first appearance. If `allowed_labels` is
/// non-empty, any other label is rejected.
Environment load_dataset(std::istream& in, bool standardize, double noise_sigma = 1.0,
                         std::span<const std::string> allowed_labels = {});
Environment load_dataset(const std::string& path, bool standardize, double noise_sigma = 1.0,
                         std::span<const std::string> allowed_labels = {});
void write_dataset(std::ostream& out, const Environment& env);
void write_dataset(const std::string& path, const Environment& env);

}  // namespace mtk
