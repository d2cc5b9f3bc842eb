#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rbs {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SvrHyperparams {
  double epsilon = 0.01;  ///< tube half-width, standardized target units
  double c_reg = 1.0;     ///< box bound on each dual coefficient
  double sigma = 1.0;     ///< Gaussian kernel width

  void validate() const;
  friend bool operator==(const SvrHyperparams&, const SvrHyperparams&) = default;
};

/// Gaussian-kernel epsilon-SVR: f(x) = sum_i beta_i k(s_i, x) + bias.
struct SvrModel {
  RowMatrix support_inputs;  ///< n_sv x d
  Eigen::VectorXd dual_coefs;
  double bias = 0.0;
  SvrHyperparams hyper;

  Eigen::Index support_count() const noexcept { return dual_coefs.size(); }

  /// Bias-only model, used for modes with degenerate variance.
  static SvrModel constant(double value, Eigen::Index dims, const SvrHyperparams& hyper = {});
};

/// exp(-|a - b|^2 / (2 sigma^2)).
double kernel(std::span<const double> a, std::span<const double> b, double sigma);

struct SmoOptions {
  double tol = 1e-3;
  std::size_t max_iter = 1'000'000;
  /// Kernel rows kept in the LRU cache.
  std::size_t cache_rows = 2048;
};

struct SvrTraining {
  SvrModel model;
  Eigen::VectorXd beta;  ///< one dual coefficient per training point, zeros included
  std::size_t iterations = 0;
  double violation = 0.0;  ///< final maximal KKT violation
};

/// SMO on the epsilon-SVR dual. `inputs` holds one sample per row.
SvrTraining train_svr_detailed(const RowMatrix& inputs, std::span<const double> targets,
                               const SvrHyperparams& hyper, const SmoOptions& opts = {});

SvrModel train_svr(const RowMatrix& inputs, std::span<const double> targets, const SvrHyperparams& hyper,
                   const SmoOptions& opts = {});

double predict(const SvrModel& model, std::span<const double> input);

/// sqrt(mean((target - prediction)^2)) over the rows of `inputs`.
double validation_rmse(const SvrModel& model, const RowMatrix& inputs, std::span<const double> targets);

/// 0.5 beta^T K beta - z^T beta + epsilon * sum|beta_i|, the minimized dual.
double dual_objective(const RowMatrix& inputs, std::span<const double> targets, std::span<const double> beta,
                      const SvrHyperparams& hyper);

struct KktReport {
  double max_violation = 0.0;
  std::vector<std::size_t> violating_points;
  double dual_sum = 0.0;  ///< sum_i beta_i, zero at feasibility
};

/// Checks the epsilon-KKT conditions of a trained model against its
/// training data, in terms of prediction residuals r_i = z_i - f(x_i).
KktReport audit_kkt(const SvrModel& model, const RowMatrix& inputs, std::span<const double> targets,
                    std::span<const double> beta, double tol);

}  // namespace rbs
