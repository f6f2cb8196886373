#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackest/dataset.hpp"
#include "stackest/kernels.hpp"

namespace stackest {

/// Labeled parameter vector theta. Entries must be finite.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::vector<double> values, std::vector<std::string> labels);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  // Index of `label`; throws std::out_of_range.
  std::size_t index_of(const std::string& label) const;
  double at(const std::string& label) const { return values_[index_of(label)]; }

 private:
  std::vector<double> values_;
  std::vector<std::string> labels_;
};

/// A stack of k estimating functions g(Z_i; theta).
///
/// The set is independent of any particular dataset. `bind` resolves column
/// references against a dataset once and returns the per-row evaluator; the
/// returned function refers to `data`, which must outlive it. Row evaluators
/// are pure and may be called concurrently.
class EstimatingFunctionSet {
 public:
  using Binder = std::function<RowFunction(const Dataset&)>;

  EstimatingFunctionSet(std::vector<std::string> labels, Binder binder);

  std::size_t dimension() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  RowFunction bind(const Dataset& data) const { return binder_(data); }

  // Convenience single-row evaluation.
  std::vector<double> evaluate(const Dataset& data, std::size_t row,
                               std::span<const double> theta) const;

 private:
  std::vector<std::string> labels_;
  Binder binder_;
};

struct SolverOptions {
  double tol = 1e-9;  // on max-abs of the mean estimating equation
  int max_iter = 100;
  int max_halvings = 20;
  double fd_step = 1e-6;  // relative central-difference step
  double max_condition = 1e12;
};

struct FitResult {
  ParameterVector theta_hat;
  Eigen::MatrixXd covariance;  // variance of theta_hat, i.e. V / n
  std::vector<double> std_errors;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  double residual_norm = 0.0;
  std::size_t n_obs = 0;
};

inline constexpr double kWaldMultiplier = 1.96;

// n^-1 sum_i g(Z_i; theta).
Eigen::VectorXd mean_estimating_equation(const EstimatingFunctionSet& efs, const Dataset& data,
                                         std::span<const double> theta);

// Central-difference Jacobian of the mean estimating equation, with step
// h * max(1, |theta_j|) on coordinate j.
Eigen::MatrixXd mean_jacobian(const RowFunction& g, std::size_t n, std::size_t k,
                              std::span<const double> theta, double h);

// Damped Newton with step halving on the Euclidean residual norm. Throws
// NonConvergence or SingularJacobian.
ParameterVector solve_root(const EstimatingFunctionSet& efs, const Dataset& data,
                           const ParameterVector& init, const SolverOptions& options = {});

// B(theta) = n^-1 sum_i -dg(Z_i; theta)/dtheta by central differences.
Eigen::MatrixXd bread_matrix(const EstimatingFunctionSet& efs, const Dataset& data,
                             std::span<const double> theta, double h = 1e-6);

// M(theta) = n^-1 sum_i g(Z_i; theta) g(Z_i; theta)^T.
Eigen::MatrixXd meat_matrix(const EstimatingFunctionSet& efs, const Dataset& data,
                            std::span<const double> theta);

// Sandwich covariance B^-1 M B^-T / n, symmetrized. Throws SingularBread when
// the condition number of B exceeds `max_condition`.
Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& meat,
                                    std::size_t n, double max_condition = 1e12);

// Solves for theta_hat, then computes the sandwich covariance, standard errors
// and 95% Wald intervals at the root.
FitResult sandwich_fit(const EstimatingFunctionSet& efs, const Dataset& data,
                       const ParameterVector& init, const SolverOptions& options = {});

// Sandwich variance at a given theta without solving (theta assumed a root).
FitResult sandwich_at(const EstimatingFunctionSet& efs, const Dataset& data,
                      const ParameterVector& theta, const SolverOptions& options = {});

double condition_number(const Eigen::MatrixXd& m);

}  // namespace stackest
