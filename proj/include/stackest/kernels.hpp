#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include <Eigen/Dense>

namespace stackest {

// One observation's estimating-function values at theta, written to `out`.
using RowFunction =
    std::function<void(std::size_t row, std::span<const double> theta, std::span<double> out)>;

namespace kernels {

// Rows are summed in fixed-size blocks and the block partials are added in
// block order. The partition does not depend on the thread count, so the
// parallel kernels return identical bits for any number of threads.
inline constexpr std::size_t kBlockRows = 256;

// n^-1 sum_i g_i(theta).
Eigen::VectorXd mean_equation(const RowFunction& g, std::size_t n, std::size_t k,
                              std::span<const double> theta);
Eigen::VectorXd mean_equation_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                     std::span<const double> theta);

// n^-1 sum_i [g_i(up) - g_i(down)]. Differencing row by row keeps the
// cancellation inside each row, so the sum is of like-signed terms.
Eigen::VectorXd mean_difference(const RowFunction& g, std::size_t n, std::size_t k,
                                std::span<const double> up, std::span<const double> down);
Eigen::VectorXd mean_difference_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                       std::span<const double> up,
                                       std::span<const double> down);

// n^-1 sum_i g_i(theta) g_i(theta)^T.
Eigen::MatrixXd outer_product_mean(const RowFunction& g, std::size_t n, std::size_t k,
                                   std::span<const double> theta);
Eigen::MatrixXd outer_product_mean_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                          std::span<const double> theta);

}  // namespace kernels
}  // namespace stackest
