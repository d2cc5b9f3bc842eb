#pragma once

// Per-element bodies shared by the serial and OpenMP kernels. Keeping them
// in one place is what makes the two variants reduce in the same order.

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "rbs/error.hpp"

namespace rbs::kernels::detail {

inline double dot(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// Accumulates rows [begin, end) of B c into out.
inline void reconstruct_rows(const Eigen::MatrixXd& basis, const double* c, double* out, Eigen::Index begin,
                             Eigen::Index end) {
  const Eigen::Index n = basis.rows();
  for (Eigen::Index p = begin; p < end; ++p) out[p] = 0.0;
  for (Eigen::Index k = 0; k < basis.cols(); ++k) {
    const double ck = c[k];
    const double* col = basis.data() + k * n;
    for (Eigen::Index p = begin; p < end; ++p) out[p] += col[p] * ck;
  }
}

inline double bound_constant_row(const Eigen::MatrixXd& basis, std::span<const double> scales, Eigen::Index p) {
  const Eigen::Index r = basis.cols();
  double a = 0.0;
  double cross = 0.0;
  for (Eigen::Index h = 0; h < r; ++h) {
    const double wh = scales[static_cast<std::size_t>(h)] * basis(p, h);
    a += wh * wh;
    for (Eigen::Index l = h + 1; l < r; ++l) {
      cross += std::abs(wh) * std::abs(scales[static_cast<std::size_t>(l)] * basis(p, l));
    }
  }
  return std::sqrt(a + 2.0 * cross);
}

inline void check_project(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& x) {
  if (basis.rows() != x.rows()) {
    throw DimensionError("projection: basis has " + std::to_string(basis.rows()) + " rows, data has " +
                         std::to_string(x.rows()));
  }
}

inline void check_reconstruct(const Eigen::MatrixXd& basis, Eigen::Index coeff_rows) {
  if (basis.cols() != coeff_rows) {
    throw DimensionError("reconstruction: basis has " + std::to_string(basis.cols()) + " modes, coefficients have " +
                         std::to_string(coeff_rows) + " rows");
  }
}

inline void check_scales(const Eigen::MatrixXd& basis, std::span<const double> scales) {
  if (static_cast<Eigen::Index>(scales.size()) != basis.cols()) {
    throw DimensionError("bound constants: " + std::to_string(scales.size()) + " scales for " +
                         std::to_string(basis.cols()) + " modes");
  }
}

}  // namespace rbs::kernels::detail
