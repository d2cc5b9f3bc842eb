#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "rbs/pipeline.hpp"

namespace rbs {

/// Run grouping of a run-major column layout (column k*T + j).
struct Grouping {
  std::size_t runs = 0;
  std::size_t steps = 0;
};

/// Relative error ratio exactly as the triple-averaged definition: mean
/// squared error norm over mean squared reference norm (no square root).
double rel_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g);
/// Mean absolute error over mean absolute reference.
double rel_ame(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g);

struct RunMetrics {
  double delta_rmse = 0.0;
  double delta_rmse_sqrt = 0.0;
  double delta_ame = 0.0;
};

struct MetricBlock {
  double delta_rmse = 0.0;       ///< ratio of mean squared norms
  double delta_rmse_sqrt = 0.0;  ///< its square root
  double delta_ame = 0.0;
  std::vector<RunMetrics> per_run;
};

MetricBlock compute_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g);

/// Metrics against raw snapshots and against their rank-r projections.
struct EvalReport {
  MetricBlock raw;
  MetricBlock projected;
  std::vector<std::size_t> runs;  ///< dataset run indices covered, in column order
};

/// K_p = sqrt(A + 2B) with A = sum_k (S_k B_pk)^2 and
/// B = sum_{h<l} |S_h B_ph| |S_l B_pl|.
Eigen::VectorXd compute_kp(const PodBasis& basis, const Standardizer& st);
/// The same constants through the perfect-square identity sum_k |S_k B_pk|.
Eigen::VectorXd compute_kp_abs_sum(const PodBasis& basis, const Standardizer& st);

struct BoundReport {
  Eigen::VectorXd lhs;  ///< RMS over validation columns of X_p - X_hat_p
  Eigen::VectorXd kp;
  double e = 0.0;
  std::vector<double> mode_errors;
  std::vector<Eigen::Index> violations;
  double max_ratio = 0.0;  ///< max_p lhs_p / (K_p e), over cells with K_p e > 0
  /// Diagnostic against raw snapshots, when given: max_p RMS of (raw - X_hat).
  std::optional<double> raw_gap_max;
};

inline constexpr double kBoundTolerance = 1e-9;

/// Per-cell bound check on validation data. `inputs` is an unstandardized
/// (1 + d) x m InputMatrix, `coeffs` the r x m true coefficients B^T X.
BoundReport verify_bound(const SurrogateModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coeffs,
                         const Eigen::MatrixXd* raw_snapshots = nullptr);

/// Same check from precomputed standardized predictions c_hat (r x m).
BoundReport verify_bound_from_predictions(const PodBasis& basis, const Standardizer& st, const Eigen::MatrixXd& coeffs,
                                          const Eigen::MatrixXd& predicted_standardized,
                                          const Eigen::MatrixXd* raw_snapshots = nullptr);

/// Inference on every column of `inputs`: n x m predicted fields.
Eigen::MatrixXd infer_columns(const SurrogateModel& model, const Eigen::MatrixXd& inputs);

/// Evaluates a model on the given runs of a dataset.
EvalReport evaluate_runs(const SurrogateModel& model, const std::vector<SimulationRun>& runs,
                         const std::vector<std::size_t>& which);

/// Bound check on the given runs of a dataset, with the raw-snapshot diagnostic.
BoundReport verify_bound_on_runs(const SurrogateModel& model, const std::vector<SimulationRun>& runs,
                                 const std::vector<std::size_t>& which);

nlohmann::json metrics_to_json(const MetricBlock& m);
nlohmann::json report_to_json(const EvalReport& eval, const BoundReport& bound);

}  // namespace rbs
