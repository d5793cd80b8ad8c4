#include "mtk/posterior.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mtk/errors.hpp"

namespace mtk {

namespace {

constexpr double kJitterScale = 1e-10;
constexpr double kDriftTolerance = 1e-6;
constexpr std::size_t kDriftCheckPeriod = 64;

}  // namespace

// ---------------------------------------------------------------------------
// IncrementalCholesky

void IncrementalCholesky::reserve(std::size_t n) {
  const auto cap = static_cast<std::size_t>(storage_.rows());
  if (n <= cap) return;
  std::size_t next = cap == 0 ? 16 : cap;
  while (next < n) next *= 2;
  Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(next));
  grown.topLeftCorner(size_, size_) = storage_.topLeftCorner(size_, size_);
  storage_.swap(grown);
}

double IncrementalCholesky::append(const Eigen::VectorXd& cross, double diag) {
  if (static_cast<std::size_t>(cross.size()) != size_) {
    throw std::invalid_argument("incremental cholesky: cross vector has wrong length");
  }
  const Eigen::VectorXd l = solve_lower(cross);
  double pivot_sq = diag - l.squaredNorm();
  double jitter = 0.0;
  if (!(pivot_sq > 0.0)) {
    const double scale = (diag_sum_ + diag) / static_cast<double>(size_ + 1);
    jitter = kJitterScale * scale;
    pivot_sq += jitter;
    if (!(pivot_sq > 0.0)) {
      throw NumericalError("Gram matrix is not positive definite within the jitter budget (pivot^2 = " +
                           std::to_string(pivot_sq) + ")");
    }
  }
  reserve(size_ + 1);
  const auto n = static_cast<Eigen::Index>(size_);
  storage_.row(n).head(n) = l.transpose();
  const double pivot = std::sqrt(pivot_sq);
  storage_(n, n) = pivot;
  ++size_;
  log_det_ += std::log(pivot_sq);
  diag_sum_ += diag + jitter;
  jitter_.push_back(jitter);
  last_pivot_ = pivot;
  return pivot;
}

Eigen::VectorXd IncrementalCholesky::solve_lower(const Eigen::VectorXd& rhs) const {
  if (size_ == 0) return Eigen::VectorXd(0);
  return storage_.topLeftCorner(size_, size_).triangularView<Eigen::Lower>().solve(rhs);
}

Eigen::MatrixXd IncrementalCholesky::solve_lower(const Eigen::MatrixXd& rhs) const {
  if (size_ == 0) return Eigen::MatrixXd(0, rhs.cols());
  return storage_.topLeftCorner(size_, size_).triangularView<Eigen::Lower>().solve(rhs);
}

void IncrementalCholesky::refactor(const Eigen::MatrixXd& matrix) {
  const auto n = static_cast<std::size_t>(matrix.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(matrix);
  if (llt.info() != Eigen::Success) throw NumericalError("refactorization failed: matrix not positive definite");
  storage_.resize(0, 0);
  size_ = 0;
  reserve(n);
  storage_.topLeftCorner(n, n) = llt.matrixL();
  size_ = n;
  log_det_ = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    log_det_ += 2.0 * std::log(storage_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
  }
  diag_sum_ = matrix.trace();
  jitter_.resize(n, 0.0);
  last_pivot_ = n ? storage_(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n - 1)) : 0.0;
}

// ---------------------------------------------------------------------------
// PosteriorState

PosteriorState::PosteriorState(TaskCoupling coupling, BaseKernel base, double ridge)
    : coupling_(coupling), base_(base), ridge_(ridge) {
  if (!(ridge > 0.0) || !std::isfinite(ridge)) throw std::invalid_argument("posterior: ridge must be > 0");
  if (base_.input_dim == 0) throw std::invalid_argument("posterior: input dimension must be >= 1");
  task_chol_.resize(coupling_.n_tasks());
  task_rows_.resize(coupling_.n_tasks());
  u_.resize(0);
  reset_linear_summaries();
}

void PosteriorState::reset_linear_summaries() {
  if (!has_linear_summaries()) return;
  const auto d = static_cast<Eigen::Index>(base_.input_dim);
  z_.assign(coupling_.n_tasks(), Eigen::MatrixXd(0, d));
  summaries_.assign(coupling_.n_tasks(), LinearTaskSummary{});
  for (std::size_t j = 0; j < coupling_.n_tasks(); ++j) {
    summaries_[j].w = Eigen::VectorXd::Zero(d);
    summaries_[j].W = Eigen::MatrixXd::Identity(d, d) * (coupling_.gram_diag() * base_.variance);
  }
}

void PosteriorState::check_query(std::size_t task, const Eigen::VectorXd& x) const {
  if (task >= coupling_.n_tasks()) throw std::out_of_range("posterior: task index out of range");
  if (static_cast<std::size_t>(x.size()) != base_.input_dim) {
    throw std::invalid_argument("posterior: point dimension mismatch");
  }
}

Eigen::VectorXd PosteriorState::cross_kernel(std::size_t task, const Eigen::VectorXd& x) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(log_.size()));
  for (std::size_t s = 0; s < log_.size(); ++s) {
    c(static_cast<Eigen::Index>(s)) = coupling_.gram(task, log_[s].task) * base_(log_[s].point, x);
  }
  return c;
}

void PosteriorState::update(const Observation& obs) {
  check_query(obs.task, obs.point);
  if (!log_.empty() && obs.step <= log_.back().step) {
    throw std::invalid_argument("posterior: observation steps must be strictly increasing");
  }
  const std::size_t i = obs.task;
  const Eigen::VectorXd cross = cross_kernel(i, obs.point);
  const double self = coupling_.gram_diag() * base_(obs.point, obs.point);

  const Eigen::VectorXd l = chol_.solve_lower(cross);
  const double pivot = chol_.append(cross, self + ridge_);
  const double u_new = (obs.reward - (l.size() ? l.dot(u_) : 0.0)) / pivot;
  u_.conservativeResize(u_.size() + 1);
  u_(u_.size() - 1) = u_new;
  log_det_mt_ += std::log(pivot * pivot) - std::log(ridge_);

  // Single-task factor of task i over its own points.
  {
    const auto& rows = task_rows_[i];
    Eigen::VectorXd tcross(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      tcross(static_cast<Eigen::Index>(k)) = base_(log_[rows[k]].point, obs.point);
    }
    task_chol_[i].append(tcross, base_(obs.point, obs.point) + ridge_);
  }

  if (has_linear_summaries()) {
    const Eigen::Index d = obs.point.size();
    const Eigen::Index t = static_cast<Eigen::Index>(log_.size());
    for (std::size_t j = 0; j < coupling_.n_tasks(); ++j) {
      Eigen::MatrixXd& z = z_[j];
      Eigen::RowVectorXd row = (coupling_.gram(j, i) * base_.variance) * obs.point.transpose();
      if (t > 0) row.noalias() -= l.transpose() * z;
      row /= pivot;
      z.conservativeResize(t + 1, d);
      z.row(t) = row;
      summaries_[j].w.noalias() += u_new * row.transpose();
      summaries_[j].W.noalias() -= row.transpose() * row;
    }
  }

  task_rows_[i].push_back(log_.size());
  log_.push_back(obs);

  if (log_.size() % kDriftCheckPeriod == 0 && reconstruction_drift() > kDriftTolerance) {
    rebuild();
  }
}

std::pair<double, double> PosteriorState::mean_variance(std::size_t task, const Eigen::VectorXd& x) const {
  check_query(task, x);
  const double prior = coupling_.gram_diag() * base_(x, x);
  if (log_.empty()) return {0.0, std::max(prior, 0.0)};
  const Eigen::VectorXd l = chol_.solve_lower(cross_kernel(task, x));
  return {l.dot(u_), std::max(prior - l.squaredNorm(), 0.0)};
}

double PosteriorState::mean(std::size_t task, const Eigen::VectorXd& x) const { return mean_variance(task, x).first; }

double PosteriorState::variance(std::size_t task, const Eigen::VectorXd& x) const {
  return mean_variance(task, x).second;
}

std::vector<double> PosteriorState::info_gain_per_task() const {
  std::vector<double> out(coupling_.n_tasks(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = static_cast<double>(task_chol_[i].size());
    out[i] = 0.5 * (task_chol_[i].log_det() - n * std::log(ridge_));
  }
  return out;
}

double PosteriorState::info_gain_st() const {
  double best = 0.0;
  for (double g : info_gain_per_task()) best = std::max(best, g);
  return best;
}

std::vector<std::size_t> PosteriorState::task_counts() const {
  std::vector<std::size_t> out(coupling_.n_tasks(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = task_rows_[i].size();
  return out;
}

Eigen::VectorXd PosteriorState::alpha() const {
  if (log_.empty()) return Eigen::VectorXd(0);
  const Eigen::MatrixXd l = chol_.factor();
  return l.transpose().triangularView<Eigen::Upper>().solve(u_);
}

Eigen::MatrixXd PosteriorState::gram() const {
  const auto t = static_cast<Eigen::Index>(log_.size());
  Eigen::MatrixXd k(t, t);
  for (Eigen::Index a = 0; a < t; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      const auto& oa = log_[static_cast<std::size_t>(a)];
      const auto& ob = log_[static_cast<std::size_t>(b)];
      k(a, b) = k(b, a) = coupling_.gram(oa.task, ob.task) * base_(oa.point, ob.point);
    }
  }
  return k;
}

Eigen::MatrixXd PosteriorState::task_base_gram(std::size_t task) const {
  if (task >= coupling_.n_tasks()) throw std::out_of_range("posterior: task index out of range");
  const auto& rows = task_rows_[task];
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      k(a, b) = k(b, a) = base_(log_[rows[static_cast<std::size_t>(a)]].point, log_[rows[static_cast<std::size_t>(b)]].point);
    }
  }
  return k;
}

const LinearTaskSummary& PosteriorState::linear_summary(std::size_t task) const {
  if (!has_linear_summaries()) throw std::logic_error("posterior: linear summaries need a linear base kernel");
  if (task >= coupling_.n_tasks()) throw std::out_of_range("posterior: task index out of range");
  return summaries_[task];
}

double PosteriorState::reconstruction_drift() const {
  if (log_.empty()) return 0.0;
  Eigen::MatrixXd target = gram();
  target.diagonal().array() += ridge_;
  const double scale = target.cwiseAbs().maxCoeff();
  const auto& jit = chol_.jitter();
  for (std::size_t k = 0; k < jit.size(); ++k) target(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += jit[k];
  const Eigen::MatrixXd l = chol_.factor();
  return (l * l.transpose() - target).cwiseAbs().maxCoeff() / scale;
}

void PosteriorState::rebuild() {
  ++refactorizations_;
  const auto t = static_cast<Eigen::Index>(log_.size());
  Eigen::MatrixXd m = gram();
  m.diagonal().array() += ridge_;
  const auto jit = chol_.jitter();
  for (Eigen::Index k = 0; k < t; ++k) m(k, k) += jit[static_cast<std::size_t>(k)];
  chol_.refactor(m);

  Eigen::VectorXd y(t);
  for (Eigen::Index s = 0; s < t; ++s) y(s) = log_[static_cast<std::size_t>(s)].reward;
  u_ = chol_.solve_lower(y);
  log_det_mt_ = chol_.log_det() - static_cast<double>(t) * std::log(ridge_);

  for (std::size_t i = 0; i < coupling_.n_tasks(); ++i) {
    if (task_rows_[i].empty()) continue;
    const auto tjit = task_chol_[i].jitter();
    Eigen::MatrixXd tm = task_base_gram(i);
    tm.diagonal().array() += ridge_;
    for (std::size_t k = 0; k < tjit.size(); ++k) tm(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += tjit[k];
    task_chol_[i].refactor(tm);
  }

  reset_linear_summaries();
  if (has_linear_summaries() && t > 0) {
    const auto d = static_cast<Eigen::Index>(base_.input_dim);
    Eigen::MatrixXd x(t, d);
    for (Eigen::Index s = 0; s < t; ++s) x.row(s) = log_[static_cast<std::size_t>(s)].point.transpose();
    for (std::size_t j = 0; j < coupling_.n_tasks(); ++j) {
      Eigen::MatrixXd scaled = x * base_.variance;
      for (Eigen::Index s = 0; s < t; ++s) scaled.row(s) *= coupling_.gram(j, log_[static_cast<std::size_t>(s)].task);
      z_[j] = chol_.solve_lower(scaled);
      summaries_[j].w = z_[j].transpose() * u_;
      summaries_[j].W -= z_[j].transpose() * z_[j];
    }
  }
}

// ---------------------------------------------------------------------------
// PrimalRegression

PrimalRegression::PrimalRegression(TaskCoupling coupling, BaseKernel base, double ridge)
    : coupling_(coupling), base_(base), ridge_(ridge) {
  if (base_.kind != KernelKind::kLinear) throw std::invalid_argument("primal regression needs a linear base kernel");
  if (!(ridge > 0.0)) throw std::invalid_argument("primal regression: ridge must be > 0");
  const auto dim = static_cast<Eigen::Index>(coupling_.n_tasks() * base_.input_dim);
  precision_ = Eigen::MatrixXd::Identity(dim, dim) * ridge_;
  moment_ = Eigen::VectorXd::Zero(dim);
}

void PrimalRegression::update(const Observation& obs) {
  const Eigen::VectorXd psi = mt_feature_map(coupling_, base_, obs.point, obs.task);
  precision_.noalias() += psi * psi.transpose();
  moment_ += obs.reward * psi;
}

double PrimalRegression::mean(std::size_t task, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd psi = mt_feature_map(coupling_, base_, x, task);
  return psi.dot(precision_.ldlt().solve(moment_));
}

double PrimalRegression::variance(std::size_t task, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd psi = mt_feature_map(coupling_, base_, x, task);
  return std::max(0.0, ridge_ * psi.dot(precision_.ldlt().solve(psi)));
}

// ---------------------------------------------------------------------------

std::pair<double, double> info_gain_bounds(double b, double ridge, std::size_t n_tasks, std::size_t horizon,
                                           double gamma_st) {
  if (!(ridge > 0.0) || ridge > 1.0) throw std::invalid_argument("info_gain_bounds: need 0 < lambda <= 1");
  if (n_tasks < 2) throw std::invalid_argument("info_gain_bounds: need N >= 2");
  if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("info_gain_bounds: need finite b >= 0");
  const double n = static_cast<double>(n_tasks);
  const double t = static_cast<double>(horizon);
  const double first = n * gamma_st + 0.5 * b * (t - n / 4.0) - 0.5 * t * std::log1p(b);
  const double second = b > 0.0 ? gamma_st + t / (ridge * b) : std::numeric_limits<double>::infinity();
  return {first, second};
}

// ---------------------------------------------------------------------------
// Observation log CSV

void write_observation_log(std::ostream& out, const std::vector<Observation>& log) {
  const std::size_t d = log.empty() ? 0 : static_cast<std::size_t>(log.front().point.size());
  out << "step,task";
  for (std::size_t k = 1; k <= d; ++k) out << ",x_" << k;
  out << ",y\n";
  out << std::setprecision(17);
  for (const auto& o : log) {
    if (static_cast<std::size_t>(o.point.size()) != d) throw IoError("observation log: inconsistent dimension");
    out << o.step << ',' << (o.task + 1);
    for (Eigen::Index k = 0; k < o.point.size(); ++k) out << ',' << o.point(k);
    out << ',' << o.reward << '\n';
  }
}

void write_observation_log(const std::string& path, const std::vector<Observation>& log) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  write_observation_log(f, log);
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Observation> read_observation_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("observation log: missing header");
  std::size_t cols = 1;
  for (char c : line) cols += (c == ',');
  if (cols < 4 || line.rfind("step,task", 0) != 0) throw IoError("observation log: bad header '" + line + "'");
  const std::size_t d = cols - 3;
  std::vector<Observation> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw IoError("observation log line " + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (vals.size() != cols) throw IoError("observation log line " + std::to_string(lineno) + ": wrong column count");
    if (vals[1] < 1.0) throw IoError("observation log line " + std::to_string(lineno) + ": task must be >= 1");
    Observation o;
    o.step = static_cast<std::size_t>(vals[0]);
    o.task = static_cast<std::size_t>(vals[1]) - 1;
    o.point = Eigen::Map<const Eigen::VectorXd>(vals.data() + 2, static_cast<Eigen::Index>(d));
    o.reward = vals.back();
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<Observation> read_observation_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return read_observation_log(f);
}

}  // namespace mtk
