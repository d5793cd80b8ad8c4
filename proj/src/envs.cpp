#include "mtk/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mtk/errors.hpp"

namespace mtk {

namespace {

Eigen::VectorXd random_unit(Stream& rng, std::size_t dim) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  do {
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = rng.normal();
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t k = 0;
  while (k < s.size() && s[k] == ' ') ++k;
  return s.substr(k);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (dim == 0) throw std::invalid_argument("synthetic spec: dim must be >= 1");
  if (n_tasks == 0) throw std::invalid_argument("synthetic spec: n_tasks must be >= 1");
  if (!(dev_delta >= 0.0 && dev_delta <= 1.0)) throw std::invalid_argument("synthetic spec: dev_delta must lie in [0, 1]");
  if (pool_size == 0) throw std::invalid_argument("synthetic spec: pool_size must be >= 1");
  if (!(sphere_radius > 0.0)) throw std::invalid_argument("synthetic spec: sphere_radius must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
}

Environment Environment::linear(Eigen::MatrixXd weights, PointMatrix pool, double noise_sigma) {
  if (weights.rows() == 0 || pool.rows() == 0) throw std::invalid_argument("environment: empty tasks or pool");
  if (weights.cols() != pool.cols()) throw std::invalid_argument("environment: weight/pool dimension mismatch");
  Environment env;
  env.noise_sigma_ = noise_sigma;
  const Eigen::MatrixXd means = pool * weights.transpose();  // pool_size x N
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    env.labels_.push_back(std::to_string(i + 1));
    env.means_.emplace_back(means.col(i).data(), means.col(i).data() + means.rows());
  }
  env.pools_.push_back(std::move(pool));
  env.weights_ = std::move(weights);
  env.finalize();
  return env;
}

Environment Environment::tabular(std::vector<std::string> labels, std::vector<PointMatrix> pools,
                                 std::vector<std::vector<double>> means, double noise_sigma) {
  if (pools.empty() || pools.size() != means.size() || labels.size() != pools.size()) {
    throw std::invalid_argument("environment: labels, pools and means must have one entry per task");
  }
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (pools[i].rows() == 0) throw std::invalid_argument("environment: empty pool for task " + labels[i]);
    if (static_cast<std::size_t>(pools[i].rows()) != means[i].size()) {
      throw std::invalid_argument("environment: pool/mean size mismatch for task " + labels[i]);
    }
    if (pools[i].cols() != pools.front().cols()) throw std::invalid_argument("environment: inconsistent dimension");
  }
  Environment env;
  env.noise_sigma_ = noise_sigma;
  env.labels_ = std::move(labels);
  env.pools_ = std::move(pools);
  env.means_ = std::move(means);
  env.finalize();
  return env;
}

void Environment::finalize() {
  oracle_best_.assign(means_.size(), 0.0);
  oracle_index_.assign(means_.size(), 0);
  for (std::size_t i = 0; i < means_.size(); ++i) {
    const auto& m = means_[i];
    const auto it = std::max_element(m.begin(), m.end());  // first max on ties
    oracle_best_[i] = *it;
    oracle_index_[i] = static_cast<std::size_t>(it - m.begin());
  }
}

const PointMatrix& Environment::pool(std::size_t task) const {
  if (task >= n_tasks()) throw std::out_of_range("environment: task index out of range");
  return shared_pool() ? pools_.front() : pools_[task];
}

const Eigen::MatrixXd& Environment::weights() const {
  if (!weights_) throw std::logic_error("environment: task weights exist only for linear environments");
  return *weights_;
}

double Environment::true_mean(std::size_t task, std::size_t index) const {
  if (task >= n_tasks()) throw std::out_of_range("environment: task index out of range");
  return means_[task].at(index);
}

std::span<const double> Environment::true_means(std::size_t task) const {
  if (task >= n_tasks()) throw std::out_of_range("environment: task index out of range");
  return means_[task];
}

double Environment::true_mean(std::size_t task, const Eigen::VectorXd& x) const {
  if (!weights_) throw std::invalid_argument("environment: unknown point for a tabular environment");
  if (task >= n_tasks()) throw std::out_of_range("environment: task index out of range");
  return weights_->row(static_cast<Eigen::Index>(task)).dot(x);
}

double Environment::feedback(std::size_t task, std::size_t index, Stream& noise) const {
  return true_mean(task, index) + noise_sigma_ * noise.normal();
}

double Environment::feedback(std::size_t task, const Eigen::VectorXd& x, Stream& noise) const {
  return true_mean(task, x) + noise_sigma_ * noise.normal();
}

double Environment::online_regret_increment(std::size_t task, std::size_t index) const {
  return oracle_best_.at(task) - true_mean(task, index);
}

double Environment::al_regret_increment(std::span<const std::size_t> indices) const {
  if (indices.size() != n_tasks()) throw std::invalid_argument("al regret: need one index per task");
  double total = 0.0;
  for (std::size_t i = 0; i < indices.size(); ++i) total += oracle_best_[i] - true_mean(i, indices[i]);
  return total / static_cast<double>(n_tasks());
}

Environment generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Stream rng(seed, StreamPurpose::kEnvironment);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto n = static_cast<Eigen::Index>(spec.n_tasks);
  const Eigen::VectorXd common = random_unit(rng, spec.dim);
  Eigen::MatrixXd weights(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd dev = random_unit(rng, spec.dim);
    weights.row(i) = ((1.0 - spec.dev_delta) * common + spec.dev_delta * dev).transpose();
  }
  PointMatrix pool(static_cast<Eigen::Index>(spec.pool_size), d);
  for (Eigen::Index k = 0; k < pool.rows(); ++k) {
    pool.row(k) = spec.sphere_radius * random_unit(rng, spec.dim).transpose();
  }
  return Environment::linear(std::move(weights), std::move(pool), spec.noise_sigma);
}

double true_epsilon(const Environment& env, double configured_B) {
  if (!env.is_linear()) {
    throw std::invalid_argument("true_epsilon: task deviation is not computable for tabular data; supply eps");
  }
  const Eigen::MatrixXd& w = env.weights();
  // Centered on the first task so that identical tasks give exactly zero.
  const Eigen::RowVectorXd avg = w.row(0) + (w.rowwise() - w.row(0)).colwise().mean();
  double bound = configured_B;
  double dev = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    bound = std::max(bound, w.row(i).norm());
    dev = std::max(dev, (w.row(i) - avg).norm());
  }
  return std::clamp(dev / bound, 0.0, 2.0);
}

Environment load_dataset(std::istream& in, bool standardize, double noise_sigma,
                         std::span<const std::string> allowed_labels) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty file");
  const auto header = split_csv(trim(line));
  if (header.size() < 3 || trim(header.front()) != "task" || trim(header.back()) != "reward") {
    throw IoError("dataset: header must be task,x_1,...,x_d,reward");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t k = 0; k < d; ++k) {
    if (trim(header[k + 1]) != "x_" + std::to_string(k + 1)) throw IoError("dataset: bad feature column '" + header[k + 1] + "'");
  }

  std::vector<std::string> labels;
  std::map<std::string, std::size_t> index_of;
  std::vector<std::vector<double>> rows;  // per task, flattened features
  std::vector<std::vector<double>> rewards;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = "dataset line " + std::to_string(lineno);
    if (cells.size() != d + 2) throw IoError(where + ": expected " + std::to_string(d + 2) + " columns");
    const std::string label = trim(cells.front());
    if (label.empty()) throw IoError(where + ": empty task label");
    if (!allowed_labels.empty() && std::find(allowed_labels.begin(), allowed_labels.end(), label) == allowed_labels.end()) {
      throw IoError(where + ": unknown task label '" + label + "'");
    }
    auto [it, inserted] = index_of.emplace(label, labels.size());
    if (inserted) {
      labels.push_back(label);
      rows.emplace_back();
      rewards.emplace_back();
    }
    std::vector<double> vals;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        const std::string c = trim(cells[k]);
        vals.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw IoError(where + ": not a number '" + cells[k] + "'");
      }
    }
    rows[it->second].insert(rows[it->second].end(), vals.begin(), vals.end() - 1);
    rewards[it->second].push_back(vals.back());
  }
  if (labels.empty()) throw IoError("dataset: no rows");

  std::vector<PointMatrix> pools;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(rewards[i].size());
    pools.emplace_back(Eigen::Map<const PointMatrix>(rows[i].data(), n, static_cast<Eigen::Index>(d)));
    if (standardize) {
      auto& r = rewards[i];
      const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
      double var = 0.0;
      for (double v : r) var += (v - mean) * (v - mean);
      var /= static_cast<double>(r.size());
      if (!(var > 0.0)) throw IoError("dataset: task '" + labels[i] + "' has constant rewards; cannot standardize");
      const double sd = std::sqrt(var);
      for (double& v : r) v = (v - mean) / sd;
    }
  }
  return Environment::tabular(std::move(labels), std::move(pools), std::move(rewards), noise_sigma);
}

Environment load_dataset(const std::string& path, bool standardize, double noise_sigma,
                         std::span<const std::string> allowed_labels) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset " + path);
  return load_dataset(f, standardize, noise_sigma, allowed_labels);
}

void write_dataset(std::ostream& out, const Environment& env) {
  const std::size_t d = env.dim();
  out << "task";
  for (std::size_t k = 1; k <= d; ++k) out << ",x_" << k;
  out << ",reward\n" << std::setprecision(17);
  for (std::size_t i = 0; i < env.n_tasks(); ++i) {
    const auto& pool = env.pool(i);
    for (Eigen::Index r = 0; r < pool.rows(); ++r) {
      out << env.labels()[i];
      for (Eigen::Index k = 0; k < pool.cols(); ++k) out << ',' << pool(r, k);
      out << ',' << env.true_mean(i, static_cast<std::size_t>(r)) << '\n';
    }
  }
}

void write_dataset(const std::string& path, const Environment& env) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  write_dataset(f, env);
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace mtk
