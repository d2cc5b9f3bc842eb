#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "rbs/dataset.hpp"

namespace rbs {

enum class SvdMethod {
  Auto,       ///< Gram-matrix path when m <= n, dense SVD otherwise.
  Snapshots,  ///< Eigendecomposition of X^T X (method of snapshots).
  Dense,      ///< Direct bidiagonalization SVD of X.
};

/// Thin SVD of a snapshot matrix. `left` and `right` hold the k singular
/// vectors whose singular value clears the drop tolerance; `values` holds all
/// q = min(n, m) singular values, descending.
struct SvdResult {
  Eigen::MatrixXd left;
  Eigen::VectorXd values;
  Eigen::MatrixXd right;

  Eigen::Index rank() const noexcept { return left.cols(); }
};

/// Singular values below this fraction of sigma_1 form no mode. The Gram
/// path raises it to sqrt(m eps), its attainable accuracy.
inline constexpr double kSingularDropTolerance = 1e-12;

SvdResult compute_svd(const Eigen::MatrixXd& x, SvdMethod method = SvdMethod::Auto);

/// (sigma_1 + ... + sigma_r) / (sigma_1 + ... + sigma_q).
double accumulated_energy(std::span<const double> sigma, std::size_t r);
/// Smallest r whose accumulated energy reaches `threshold`.
std::size_t select_rank(std::span<const double> sigma, double threshold);

/// Truncated POD basis: n x r orthonormal modes plus the full spectrum.
struct PodBasis {
  Eigen::MatrixXd modes;
  Eigen::VectorXd singular_values;
  double energy_threshold = 1.0;

  Eigen::Index rank() const noexcept { return modes.cols(); }
  Eigen::Index cells() const noexcept { return modes.rows(); }
};

/// SVD, rank selection and truncation in one step.
PodBasis build_basis(const Eigen::MatrixXd& x, double energy_threshold, SvdMethod method = SvdMethod::Auto);

/// Keeps the first r modes of an SVD.
PodBasis truncate(const SvdResult& svd, std::size_t r, double energy_threshold);

/// r x k coefficients of the k columns of `x`.
struct CoefficientMatrix {
  Eigen::MatrixXd data;
};

/// C = B^T X.
CoefficientMatrix project(const PodBasis& basis, const Eigen::MatrixXd& x);
/// X_hat = B C.
Eigen::MatrixXd reconstruct(const PodBasis& basis, const CoefficientMatrix& c);

}  // namespace rbs
