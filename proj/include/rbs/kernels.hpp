#pragma once

// Dense data-parallel kernels behind POD assembly, projection, field
// reconstruction and the per-cell bound constants.
//
// Two implementations share one contract: `serial` is the reference and
// `omp` splits the outer loop across OpenMP threads. Every output element is
// reduced in the same order by both, so results are bitwise identical.

#include <span>

#include <Eigen/Dense>

namespace rbs::kernels {

namespace serial {

/// Gram matrix X^T X (m x m).
Eigen::MatrixXd gram(const Eigen::MatrixXd& x);
/// B^T X (r x k).
Eigen::MatrixXd project(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& x);
/// B C (n x k).
Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& coeffs);
/// out = B c for a single coefficient vector.
void reconstruct_into(const Eigen::MatrixXd& basis, std::span<const double> coeffs, std::span<double> out);
/// K_p = sqrt(A_p + 2 B_p) per row p of the basis, weighted by the coefficient scales.
Eigen::VectorXd bound_constants(const Eigen::MatrixXd& basis, std::span<const double> scales);

}  // namespace serial

namespace omp {

Eigen::MatrixXd gram(const Eigen::MatrixXd& x);
Eigen::MatrixXd project(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& x);
Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& coeffs);
void reconstruct_into(const Eigen::MatrixXd& basis, std::span<const double> coeffs, std::span<double> out);
Eigen::VectorXd bound_constants(const Eigen::MatrixXd& basis, std::span<const double> scales);

}  // namespace omp

/// Below this many multiply-adds the omp kernels stay on the calling thread.
inline constexpr long kParallelThreshold = 1L << 15;

}  // namespace rbs::kernels
