#include "stackest/kernels.hpp"

#include <exception>
#include <vector>

#include <omp.h>

namespace stackest::kernels {
namespace {

std::size_t block_count(std::size_t n) { return (n + kBlockRows - 1) / kBlockRows; }

// Runs body(block, scratch) over every block; rethrows the exception of the
// lowest-numbered failing block so errors are reported deterministically.
template <class Body>
void for_each_block(std::size_t n, std::size_t scratch_size, Body&& body) {
  const auto blocks = static_cast<std::ptrdiff_t>(block_count(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(blocks));
#pragma omp parallel if (blocks > 1 && !omp_in_parallel())
  {
    std::vector<double> scratch(scratch_size);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b) {
      try {
        body(static_cast<std::size_t>(b), std::span<double>(scratch));
      } catch (...) {
        errors[static_cast<std::size_t>(b)] = std::current_exception();
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Eigen::VectorXd mean_equation(const RowFunction& g, std::size_t n, std::size_t k,
                              std::span<const double> theta) {
  const std::size_t blocks = block_count(n);
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                  static_cast<Eigen::Index>(blocks));
  for_each_block(n, k, [&](std::size_t b, std::span<double> out) {
    const std::size_t end = std::min(n, (b + 1) * kBlockRows);
    auto col = partial.col(static_cast<Eigen::Index>(b));
    for (std::size_t i = b * kBlockRows; i < end; ++i) {
      g(i, theta, out);
      for (std::size_t j = 0; j < k; ++j) col[static_cast<Eigen::Index>(j)] += out[j];
    }
  });
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t b = 0; b < blocks; ++b) total += partial.col(static_cast<Eigen::Index>(b));
  return total / static_cast<double>(n);
}

Eigen::VectorXd mean_equation_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                     std::span<const double> theta) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  std::vector<double> out(k);
  for (std::size_t i = 0; i < n; ++i) {
    g(i, theta, out);
    for (std::size_t j = 0; j < k; ++j) total[static_cast<Eigen::Index>(j)] += out[j];
  }
  return total / static_cast<double>(n);
}

Eigen::VectorXd mean_difference(const RowFunction& g, std::size_t n, std::size_t k,
                                std::span<const double> up, std::span<const double> down) {
  const std::size_t blocks = block_count(n);
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                  static_cast<Eigen::Index>(blocks));
  for_each_block(n, 2 * k, [&](std::size_t b, std::span<double> scratch) {
    const std::size_t end = std::min(n, (b + 1) * kBlockRows);
    const auto hi = scratch.first(k);
    const auto lo = scratch.last(k);
    auto col = partial.col(static_cast<Eigen::Index>(b));
    for (std::size_t i = b * kBlockRows; i < end; ++i) {
      g(i, up, hi);
      g(i, down, lo);
      for (std::size_t j = 0; j < k; ++j) col[static_cast<Eigen::Index>(j)] += hi[j] - lo[j];
    }
  });
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t b = 0; b < blocks; ++b) total += partial.col(static_cast<Eigen::Index>(b));
  return total / static_cast<double>(n);
}

Eigen::VectorXd mean_difference_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                       std::span<const double> up,
                                       std::span<const double> down) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  std::vector<double> hi(k), lo(k);
  for (std::size_t i = 0; i < n; ++i) {
    g(i, up, hi);
    g(i, down, lo);
    for (std::size_t j = 0; j < k; ++j) total[static_cast<Eigen::Index>(j)] += hi[j] - lo[j];
  }
  return total / static_cast<double>(n);
}

Eigen::MatrixXd outer_product_mean(const RowFunction& g, std::size_t n, std::size_t k,
                                   std::span<const double> theta) {
  const std::size_t blocks = block_count(n);
  const auto kk = static_cast<Eigen::Index>(k);
  std::vector<Eigen::MatrixXd> partial(blocks, Eigen::MatrixXd::Zero(kk, kk));
  for_each_block(n, k, [&](std::size_t b, std::span<double> out) {
    const std::size_t end = std::min(n, (b + 1) * kBlockRows);
    Eigen::Map<const Eigen::VectorXd> v(out.data(), kk);
    for (std::size_t i = b * kBlockRows; i < end; ++i) {
      g(i, theta, out);
      partial[b].noalias() += v * v.transpose();
    }
  });
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(kk, kk);
  for (const auto& p : partial) total += p;
  return total / static_cast<double>(n);
}

Eigen::MatrixXd outer_product_mean_serial(const RowFunction& g, std::size_t n, std::size_t k,
                                          std::span<const double> theta) {
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(kk, kk);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < n; ++i) {
    g(i, theta, out);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        total(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += out[r] * out[c];
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace stackest::kernels
