#include "mtk/task_algebra.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mtk {

TaskCoupling::TaskCoupling(double b, std::size_t n_tasks) : b_(b), n_tasks_(n_tasks) {
  if (!(b >= 0.0) || !std::isfinite(b)) {
    throw std::invalid_argument("task coupling: b must be finite and >= 0, got " + std::to_string(b));
  }
  if (n_tasks == 0) throw std::invalid_argument("task coupling: need at least one task");
}

TaskCoupling::TaskCoupling(std::size_t n_tasks, bool pooled) : b_(0.0), n_tasks_(n_tasks), pooled_(pooled) {
  if (n_tasks == 0) throw std::invalid_argument("task coupling: need at least one task");
}

TaskCoupling TaskCoupling::pooled(std::size_t n_tasks) {
  TaskCoupling c(n_tasks, true);
  c.b_ = INFINITY;
  return c;
}

double TaskCoupling::gram_diag() const {
  const double n = static_cast<double>(n_tasks_);
  if (pooled_) return 1.0 / n;
  return (b_ + n) / ((1.0 + b_) * n);
}

double TaskCoupling::gram_offdiag() const {
  const double n = static_cast<double>(n_tasks_);
  if (pooled_) return 1.0 / n;
  return b_ / ((1.0 + b_) * n);
}

BaseKernel BaseKernel::linear(std::size_t dim, double variance) {
  return BaseKernel{KernelKind::kLinear, dim, 1.0, variance};
}

BaseKernel BaseKernel::squared_exponential(std::size_t dim, double lengthscale, double variance) {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("squared-exponential lengthscale must be > 0");
  return BaseKernel{KernelKind::kSquaredExponential, dim, lengthscale, variance};
}

double BaseKernel::operator()(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != input_dim || y.size() != input_dim) {
    throw std::invalid_argument("base kernel: dimension mismatch");
  }
  if (kind == KernelKind::kLinear) {
    double s = 0.0;
    for (std::size_t k = 0; k < input_dim; ++k) s += x[k] * y[k];
    return variance * s;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < input_dim; ++k) {
    const double d = x[k] - y[k];
    sq += d * d;
  }
  return variance * std::exp(-0.5 * sq / (lengthscale * lengthscale));
}

double BaseKernel::operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  return (*this)(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                 std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

Eigen::MatrixXd task_gram(const TaskCoupling& coupling) {
  const auto n = static_cast<Eigen::Index>(coupling.n_tasks());
  Eigen::MatrixXd g = Eigen::MatrixXd::Constant(n, n, coupling.gram_offdiag());
  g.diagonal().setConstant(coupling.gram_diag());
  return g;
}

std::pair<double, double> task_power_coefficients(const TaskCoupling& coupling, TaskPower power) {
  if (coupling.is_pooled()) {
    switch (power) {
      case TaskPower::kMinusOne:
      case TaskPower::kMinusHalf:
        return {0.0, 1.0};
      default:
        throw std::domain_error("A(b) and A(b)^{1/2} are unbounded in pooled mode");
    }
  }
  const double b = coupling.b();
  const double r = std::sqrt(1.0 + b);
  switch (power) {
    case TaskPower::kOne:
      return {1.0 + b, -b};
    case TaskPower::kHalf:
      return {r, 1.0 - r};
    case TaskPower::kMinusOne:
      return {1.0 / (1.0 + b), b / (1.0 + b)};
    case TaskPower::kMinusHalf:
      return {1.0 / r, 1.0 - 1.0 / r};
  }
  return {1.0, 0.0};
}

Eigen::MatrixXd task_matrix_power(const TaskCoupling& coupling, TaskPower power) {
  const auto [alpha, beta] = task_power_coefficients(coupling, power);
  const auto n = static_cast<Eigen::Index>(coupling.n_tasks());
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, beta / static_cast<double>(n));
  m.diagonal().array() += alpha;
  return m;
}

double mt_kernel(const TaskCoupling& coupling, const BaseKernel& base, std::size_t i, const Eigen::VectorXd& x,
                 std::size_t j, const Eigen::VectorXd& y) {
  if (i >= coupling.n_tasks() || j >= coupling.n_tasks()) {
    throw std::out_of_range("mt_kernel: task index out of range");
  }
  return coupling.gram(i, j) * base(x, y);
}

Eigen::VectorXd mt_feature_map(const TaskCoupling& coupling, const BaseKernel& base, const Eigen::VectorXd& x,
                               std::size_t i) {
  if (base.kind != KernelKind::kLinear) {
    throw std::invalid_argument("mt_feature_map: only defined for the linear base kernel");
  }
  if (i >= coupling.n_tasks()) throw std::out_of_range("mt_feature_map: task index out of range");
  if (static_cast<std::size_t>(x.size()) != base.input_dim) {
    throw std::invalid_argument("mt_feature_map: dimension mismatch");
  }
  const auto [alpha, beta] = task_power_coefficients(coupling, TaskPower::kMinusHalf);
  const auto n = static_cast<Eigen::Index>(coupling.n_tasks());
  const Eigen::Index d = x.size();
  const Eigen::VectorXd phi = std::sqrt(base.variance) * x;
  const double off = beta / static_cast<double>(n);
  Eigen::VectorXd out(n * d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double w = (j == static_cast<Eigen::Index>(i)) ? alpha + off : off;
    out.segment(j * d, d) = w * phi;
  }
  return out;
}

Eigen::MatrixXd kron_sherman_morrison(const std::vector<Eigen::MatrixXd>& blocks, const Eigen::MatrixXd& p) {
  if (blocks.empty()) throw std::invalid_argument("kron_sherman_morrison: no blocks");
  const Eigen::Index d = p.rows();
  if (p.cols() != d) throw std::invalid_argument("kron_sherman_morrison: P must be square");
  const auto n = static_cast<Eigen::Index>(blocks.size());

  std::vector<Eigen::MatrixXd> inv;
  inv.reserve(blocks.size());
  const double p_norm = p.cwiseAbs().maxCoeff();
  Eigen::MatrixXd inv_sum = Eigen::MatrixXd::Zero(d, d);
  for (const auto& blk : blocks) {
    if (blk.rows() != d || blk.cols() != d) throw std::invalid_argument("kron_sherman_morrison: block size mismatch");
    const double defect = (p * blk - blk * p).cwiseAbs().maxCoeff();
    if (defect > 1e-8 * p_norm * blk.cwiseAbs().maxCoeff()) {
      throw std::invalid_argument("kron_sherman_morrison: P does not commute with a block");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(blk);
    if (!lu.isInvertible()) throw std::invalid_argument("kron_sherman_morrison: singular block");
    inv.push_back(lu.inverse());
    inv_sum += inv.back();
  }

  const Eigen::MatrixXd q =
      -(Eigen::MatrixXd::Identity(d, d) + p * inv_sum).fullPivLu().solve(p);

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * d, n * d);
  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::MatrixXd left = inv[static_cast<std::size_t>(a)] * q;
    for (Eigen::Index c = 0; c < n; ++c) {
      out.block(a * d, c * d, d, d) = left * inv[static_cast<std::size_t>(c)];
    }
    out.block(a * d, a * d, d, d) += inv[static_cast<std::size_t>(a)];
  }
  return out;
}

}  // namespace mtk
