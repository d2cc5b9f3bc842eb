#include "rbs/pod.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rbs/error.hpp"
#include "rbs/kernels.hpp"

namespace rbs {

namespace {

void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw NumericError("snapshot matrix contains non-finite values");
}

/// Flips each column so that its largest-magnitude entry is positive; the
/// matching right vector is flipped with it.
void fix_signs(Eigen::MatrixXd& left, Eigen::MatrixXd& right) {
  for (Eigen::Index k = 0; k < left.cols(); ++k) {
    Eigen::Index arg = 0;
    left.col(k).cwiseAbs().maxCoeff(&arg);
    if (left(arg, k) < 0.0) {
      left.col(k) *= -1.0;
      if (right.cols() > k) right.col(k) *= -1.0;
    }
  }
}

/// Two passes of modified Gram-Schmidt. Gram-path modes with small sigma lose
/// orthogonality as eps * (sigma_1 / sigma_k)^2; this restores it without
/// changing well-separated modes beyond rounding.
void reorthonormalize(Eigen::MatrixXd& q) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      for (Eigen::Index j = 0; j < k; ++j) q.col(k) -= q.col(j).dot(q.col(k)) * q.col(j);
      const double norm = q.col(k).norm();
      if (norm > 0.0) q.col(k) /= norm;
    }
  }
}

SvdResult svd_snapshots(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd g = kernels::omp::gram(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  if (eig.info() != Eigen::Success) throw NumericError("Gram matrix eigendecomposition failed");

  // Eigen returns eigenvalues ascending.
  const Eigen::Index m = x.cols();
  const Eigen::Index q = std::min(x.rows(), m);
  SvdResult out;
  out.values.resize(q);
  for (Eigen::Index k = 0; k < q; ++k) out.values[k] = std::sqrt(std::max(0.0, eig.eigenvalues()[m - 1 - k]));

  // Eigenvalues of X^T X carry absolute error ~ m eps lambda_1, so singular
  // values below sqrt(m eps) sigma_1 have no reliable direction on this path.
  const double floor = std::sqrt(static_cast<double>(m) * std::numeric_limits<double>::epsilon());
  const double cutoff = std::max(kSingularDropTolerance, floor) * out.values[0];
  Eigen::Index kept = 0;
  while (kept < q && out.values[kept] > cutoff && out.values[kept] > 0.0) ++kept;

  out.right.resize(m, kept);
  for (Eigen::Index k = 0; k < kept; ++k) out.right.col(k) = eig.eigenvectors().col(m - 1 - k);
  out.left = x * out.right;
  for (Eigen::Index k = 0; k < kept; ++k) out.left.col(k) /= out.values[k];
  reorthonormalize(out.left);
  return out;
}

SvdResult svd_dense(const Eigen::MatrixXd& x) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out;
  out.values = svd.singularValues();
  const Eigen::Index q = out.values.size();
  const double cutoff = kSingularDropTolerance * (q > 0 ? out.values[0] : 0.0);
  Eigen::Index kept = 0;
  while (kept < q && out.values[kept] > cutoff && out.values[kept] > 0.0) ++kept;
  out.left = svd.matrixU().leftCols(kept);
  out.right = svd.matrixV().leftCols(kept);
  return out;
}

}  // namespace

SvdResult compute_svd(const Eigen::MatrixXd& x, SvdMethod method) {
  if (x.rows() < 1 || x.cols() < 1) throw EmptyInputError("cannot decompose an empty matrix");
  check_finite(x);
  if (method == SvdMethod::Auto) method = x.cols() <= x.rows() ? SvdMethod::Snapshots : SvdMethod::Dense;
  SvdResult out = method == SvdMethod::Snapshots ? svd_snapshots(x) : svd_dense(x);
  fix_signs(out.left, out.right);
  return out;
}

double accumulated_energy(std::span<const double> sigma, std::size_t r) {
  if (sigma.empty() || r < 1 || r > sigma.size()) {
    throw ArgumentError("rank " + std::to_string(r) + " outside [1, " + std::to_string(sigma.size()) + "]");
  }
  const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
  if (!(total > 0.0)) throw UndefinedEnergyError("accumulated energy is undefined for an all-zero spectrum");
  const double partial = std::accumulate(sigma.begin(), sigma.begin() + static_cast<std::ptrdiff_t>(r), 0.0);
  return partial / total;
}

std::size_t select_rank(std::span<const double> sigma, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ArgumentError("energy threshold must lie in (0, 1], got " + std::to_string(threshold));
  }
  if (sigma.empty()) throw ArgumentError("empty singular value vector");
  const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
  if (!(total > 0.0)) throw UndefinedEnergyError("accumulated energy is undefined for an all-zero spectrum");
  // Same left-to-right summation as accumulated_energy, so the two agree exactly.
  double partial = 0.0;
  for (std::size_t r = 1; r <= sigma.size(); ++r) {
    partial += sigma[r - 1];
    if (partial / total >= threshold) return r;
  }
  return sigma.size();
}

PodBasis truncate(const SvdResult& svd, std::size_t r, double energy_threshold) {
  if (r < 1 || static_cast<Eigen::Index>(r) > svd.rank()) {
    throw ArgumentError("cannot keep " + std::to_string(r) + " modes; the SVD has " + std::to_string(svd.rank()) +
                        " non-negligible modes");
  }
  return PodBasis{svd.left.leftCols(static_cast<Eigen::Index>(r)), svd.values, energy_threshold};
}

PodBasis build_basis(const Eigen::MatrixXd& x, double energy_threshold, SvdMethod method) {
  const SvdResult svd = compute_svd(x, method);
  std::size_t r = select_rank({svd.values.data(), static_cast<std::size_t>(svd.values.size())}, energy_threshold);
  // Modes under the drop tolerance carry no usable direction.
  r = std::min(r, static_cast<std::size_t>(svd.rank()));
  return truncate(svd, r, energy_threshold);
}

CoefficientMatrix project(const PodBasis& basis, const Eigen::MatrixXd& x) {
  return {kernels::omp::project(basis.modes, x)};
}

Eigen::MatrixXd reconstruct(const PodBasis& basis, const CoefficientMatrix& c) {
  return kernels::omp::reconstruct(basis.modes, c.data);
}

}  // namespace rbs
