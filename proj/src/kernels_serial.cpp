#include "kernels_detail.hpp"
#include "rbs/kernels.hpp"

namespace rbs::kernels::serial {

Eigen::MatrixXd gram(const Eigen::MatrixXd& x) {
  const Eigen::Index m = x.cols();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd g(m, m);
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
  Eigen::MatrixXd c(basis.cols(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index k = 0; k < basis.cols(); ++k) {
      c(k, j) = detail::dot(basis.data() + k * n, x.data() + j * n, n);
    }
  }
  return c;
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& coeffs) {
  detail::check_reconstruct(basis, coeffs.rows());
  Eigen::MatrixXd out(basis.rows(), coeffs.cols());
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j) {
    detail::reconstruct_rows(basis, coeffs.data() + j * coeffs.rows(), out.data() + j * basis.rows(), 0,
                             basis.rows());
  }
  return out;
}

void reconstruct_into(const Eigen::MatrixXd& basis, std::span<const double> coeffs, std::span<double> out) {
  detail::check_reconstruct(basis, static_cast<Eigen::Index>(coeffs.size()));
  if (static_cast<Eigen::Index>(out.size()) != basis.rows()) throw DimensionError("reconstruction: output size mismatch");
  detail::reconstruct_rows(basis, coeffs.data(), out.data(), 0, basis.rows());
}

Eigen::VectorXd bound_constants(const Eigen::MatrixXd& basis, std::span<const double> scales) {
  detail::check_scales(basis, scales);
  Eigen::VectorXd kp(basis.rows());
  for (Eigen::Index p = 0; p < basis.rows(); ++p) kp[p] = detail::bound_constant_row(basis, scales, p);
  return kp;
}

}  // namespace rbs::kernels::serial
