#include <algorithm>

#include <omp.h>

#include "kernels_detail.hpp"
#include "rbs/kernels.hpp"

namespace rbs::kernels::omp {

namespace {

constexpr Eigen::Index kRowBlock = 4096;

bool worth_parallel(double work) { return work > static_cast<double>(kParallelThreshold); }

}  // namespace

Eigen::MatrixXd gram(const Eigen::MatrixXd& x) {
  const Eigen::Index m = x.cols();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd g(m, m);
  const bool par = worth_parallel(0.5 * static_cast<double>(m) * static_cast<double>(m) * static_cast<double>(n));
#pragma omp parallel for schedule(dynamic, 1) if (par)
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = detail::dot(x.data() + i * n, x.data() + j * n, n);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Eigen::MatrixXd project(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& x) {
  detail::check_project(basis, x);
  const Eigen::Index n = x.rows();
  const Eigen::Index r = basis.cols();
  Eigen::MatrixXd c(r, x.cols());
  const Eigen::Index total = r * x.cols();
  const bool par = worth_parallel(static_cast<double>(total) * static_cast<double>(n));
#pragma omp parallel for schedule(static) if (par)
  for (Eigen::Index e = 0; e < total; ++e) {
    const Eigen::Index k = e % r;
    const Eigen::Index j = e / r;
    c(k, j) = detail::dot(basis.data() + k * n, x.data() + j * n, n);
  }
  return c;
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& coeffs) {
  detail::check_reconstruct(basis, coeffs.rows());
  const Eigen::Index n = basis.rows();
  Eigen::MatrixXd out(n, coeffs.cols());
  const bool par =
      worth_parallel(static_cast<double>(n) * static_cast<double>(basis.cols()) * static_cast<double>(coeffs.cols()));
#pragma omp parallel for schedule(static) if (par)
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j) {
    detail::reconstruct_rows(basis, coeffs.data() + j * coeffs.rows(), out.data() + j * n, 0, n);
  }
  return out;
}

void reconstruct_into(const Eigen::MatrixXd& basis, std::span<const double> coeffs, std::span<double> out) {
  detail::check_reconstruct(basis, static_cast<Eigen::Index>(coeffs.size()));
  const Eigen::Index n = basis.rows();
  if (static_cast<Eigen::Index>(out.size()) != n) throw DimensionError("reconstruction: output size mismatch");
  const Eigen::Index blocks = (n + kRowBlock - 1) / kRowBlock;
  const bool par = worth_parallel(static_cast<double>(n) * static_cast<double>(basis.cols())) && blocks > 1;
#pragma omp parallel for schedule(static) if (par)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index begin = b * kRowBlock;
    detail::reconstruct_rows(basis, coeffs.data(), out.data(), begin, std::min(n, begin + kRowBlock));
  }
}

Eigen::VectorXd bound_constants(const Eigen::MatrixXd& basis, std::span<const double> scales) {
  detail::check_scales(basis, scales);
  const Eigen::Index n = basis.rows();
  Eigen::VectorXd kp(n);
  const double r = static_cast<double>(basis.cols());
  const bool par = worth_parallel(static_cast<double>(n) * r * r * 0.5);
#pragma omp parallel for schedule(static) if (par)
  for (Eigen::Index p = 0; p < n; ++p) kp[p] = detail::bound_constant_row(basis, scales, p);
  return kp;
}

}  // namespace rbs::kernels::omp
