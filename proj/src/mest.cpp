#include "stackest/mest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stackest/errors.hpp"

namespace stackest {
namespace {

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

ParameterVector::ParameterVector(std::vector<double> values, std::vector<std::string> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
  if (values_.empty()) throw std::invalid_argument("parameter vector must have dimension >= 1");
  if (labels_.size() != values_.size()) {
    throw std::invalid_argument("parameter vector: " + std::to_string(labels_.size()) +
                                " labels for " + std::to_string(values_.size()) + " values");
  }
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!std::isfinite(values_[j])) {
      throw std::invalid_argument("parameter '" + labels_[j] + "' is not finite");
    }
  }
}

std::size_t ParameterVector::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw std::out_of_range("no parameter labeled '" + label + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

EstimatingFunctionSet::EstimatingFunctionSet(std::vector<std::string> labels, Binder binder)
    : labels_(std::move(labels)), binder_(std::move(binder)) {
  if (labels_.empty()) throw std::invalid_argument("estimating function set must have k >= 1");
  if (!binder_) throw std::invalid_argument("estimating function set needs a binder");
}

std::vector<double> EstimatingFunctionSet::evaluate(const Dataset& data, std::size_t row,
                                                    std::span<const double> theta) const {
  std::vector<double> out(dimension());
  bind(data)(row, theta, out);
  return out;
}

Eigen::VectorXd mean_estimating_equation(const EstimatingFunctionSet& efs, const Dataset& data,
                                         std::span<const double> theta) {
  if (theta.size() != efs.dimension()) {
    throw std::invalid_argument("theta dimension does not match the estimating functions");
  }
  return kernels::mean_equation(efs.bind(data), data.rows(), efs.dimension(), theta);
}

Eigen::MatrixXd mean_jacobian(const RowFunction& g, std::size_t n, std::size_t k,
                              std::span<const double> theta, double h) {
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd jac(kk, kk);
  std::vector<double> hi(theta.begin(), theta.end());
  std::vector<double> lo(theta.begin(), theta.end());
  for (std::size_t j = 0; j < k; ++j) {
    const double step = h * std::max(1.0, std::abs(theta[j]));
    hi[j] = theta[j] + step;
    lo[j] = theta[j] - step;
    jac.col(static_cast<Eigen::Index>(j)) =
        kernels::mean_difference(g, n, k, hi, lo) / (hi[j] - lo[j]);
    hi[j] = theta[j];
    lo[j] = theta[j];
  }
  return jac;
}

double condition_number(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

ParameterVector solve_root(const EstimatingFunctionSet& efs, const Dataset& data,
                           const ParameterVector& init, const SolverOptions& options) {
  const std::size_t n = data.rows();
  const std::size_t k = efs.dimension();
  if (n == 0) throw std::invalid_argument("solve_root: empty dataset");
  if (init.size() != k) throw std::invalid_argument("solve_root: init has wrong dimension");
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_root: tol must be positive");

  const RowFunction g = efs.bind(data);
  std::vector<double> theta(init.values().begin(), init.values().end());
  Eigen::VectorXd residual = kernels::mean_equation(g, n, k, theta);
  if (!residual.allFinite()) throw NonConvergence("estimating equation is not finite at init");

  // Stops at the first iterate within tol. Iterating further can push
  // coefficients of a separated logistic fit toward infinity.
  for (int iter = 0; iter <= options.max_iter; ++iter) {
    if (max_abs(residual) <= options.tol) return ParameterVector(theta, efs.labels());
    if (iter == options.max_iter) break;

    const Eigen::MatrixXd jac = mean_jacobian(g, n, k, theta, options.fd_step);
    const double cond = condition_number(jac);
    if (!(cond <= options.max_condition)) {
      throw SingularJacobian("Jacobian of the mean estimating equation is singular (condition " +
                             std::to_string(cond) + ")");
    }
    const Eigen::VectorXd delta = jac.partialPivLu().solve(-residual);

    const double current = residual.norm();
    double scale = 1.0;
    bool accepted = false;
    std::vector<double> candidate(k);
    for (int halving = 0; halving <= options.max_halvings; ++halving, scale *= 0.5) {
      for (std::size_t j = 0; j < k; ++j) {
        candidate[j] = theta[j] + scale * delta[static_cast<Eigen::Index>(j)];
      }
      Eigen::VectorXd trial = kernels::mean_equation(g, n, k, candidate);
      if (trial.allFinite() && trial.norm() < current) {
        theta.swap(candidate);
        residual = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NonConvergence("line search stalled at residual " + std::to_string(max_abs(residual)));
    }
  }
  throw NonConvergence("no root within " + std::to_string(options.max_iter) +
                       " iterations (residual " + std::to_string(max_abs(residual)) + ")");
}

Eigen::MatrixXd bread_matrix(const EstimatingFunctionSet& efs, const Dataset& data,
                             std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("bread_matrix: h must be positive");
  if (theta.size() != efs.dimension()) {
    throw std::invalid_argument("bread_matrix: theta has wrong dimension");
  }
  return -mean_jacobian(efs.bind(data), data.rows(), efs.dimension(), theta, h);
}

Eigen::MatrixXd meat_matrix(const EstimatingFunctionSet& efs, const Dataset& data,
                            std::span<const double> theta) {
  if (theta.size() != efs.dimension()) {
    throw std::invalid_argument("meat_matrix: theta has wrong dimension");
  }
  return kernels::outer_product_mean(efs.bind(data), data.rows(), efs.dimension(), theta);
}

Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat,
                                    std::size_t n, double max_condition) {
  const double cond = condition_number(bread);
  if (!(cond <= max_condition)) {
    throw SingularBread("bread matrix is not invertible (condition " + std::to_string(cond) + ")");
  }
  const Eigen::MatrixXd inv = bread.partialPivLu().inverse();
  const Eigen::MatrixXd v = inv * meat * inv.transpose() / static_cast<double>(n);
  return (v + v.transpose()) / 2.0;
}

FitResult sandwich_at(const EstimatingFunctionSet& efs, const Dataset& data,
                      const ParameterVector& theta, const SolverOptions& options) {
  FitResult fit;
  fit.theta_hat = theta;
  fit.n_obs = data.rows();
  const RowFunction g = efs.bind(data);
  const std::size_t k = efs.dimension();
  fit.residual_norm = max_abs(kernels::mean_equation(g, data.rows(), k, theta.values()));

  const Eigen::MatrixXd bread = -mean_jacobian(g, data.rows(), k, theta.values(), options.fd_step);
  const Eigen::MatrixXd meat = kernels::outer_product_mean(g, data.rows(), k, theta.values());
  fit.covariance = sandwich_covariance(bread, meat, data.rows(), options.max_condition);

  fit.std_errors.resize(k);
  fit.ci_lower.resize(k);
  fit.ci_upper.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    fit.std_errors[j] = std::sqrt(std::max(0.0, fit.covariance(jj, jj)));
    fit.ci_lower[j] = theta[j] - kWaldMultiplier * fit.std_errors[j];
    fit.ci_upper[j] = theta[j] + kWaldMultiplier * fit.std_errors[j];
  }
  return fit;
}

FitResult sandwich_fit(const EstimatingFunctionSet& efs, const Dataset& data,
                       const ParameterVector& init, const SolverOptions& options) {
  return sandwich_at(efs, data, solve_root(efs, data, init, options), options);
}

}  // namespace stackest
