#include "rbs/evaluate.hpp"

#include <cassert>
#include <cmath>

#include "rbs/error.hpp"
#include "rbs/kernels.hpp"

namespace rbs {

namespace {

void check_metric_shapes(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
    throw DimensionError("prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         ", reference is " + std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()));
  }
  if (g.runs * g.steps != static_cast<std::size_t>(ref.cols()) || ref.rows() == 0) {
    throw DimensionError("grouping (N=" + std::to_string(g.runs) + ", T=" + std::to_string(g.steps) +
                         ") does not match " + std::to_string(ref.cols()) + " columns");
  }
}

/// (1/N) sum_k (1/T) sum_j (1/n) sum_i f(column), with per-column cell sums
/// already computed.
double triple_mean(const Eigen::VectorXd& column_sums, Grouping g, Eigen::Index cells) {
  double outer = 0.0;
  for (std::size_t k = 0; k < g.runs; ++k) {
    const auto seg = column_sums.segment(static_cast<Eigen::Index>(k * g.steps), static_cast<Eigen::Index>(g.steps));
    outer += (seg.array() / static_cast<double>(cells)).sum() / static_cast<double>(g.steps);
  }
  return outer / static_cast<double>(g.runs);
}

double ratio(double num, double den, const char* what) {
  if (!(den > 0.0)) throw UndefinedMetricError(std::string(what) + " is undefined for an all-zero reference");
  return num / den;
}

}  // namespace

double rel_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g) {
  check_metric_shapes(pred, ref, g);
  const Eigen::VectorXd err = (pred - ref).colwise().squaredNorm().transpose();
  const Eigen::VectorXd nrm = ref.colwise().squaredNorm().transpose();
  return ratio(triple_mean(err, g, ref.rows()), triple_mean(nrm, g, ref.rows()), "relative RMSE");
}

double rel_ame(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g) {
  check_metric_shapes(pred, ref, g);
  const Eigen::VectorXd err = (pred - ref).cwiseAbs().colwise().sum().transpose();
  const Eigen::VectorXd nrm = ref.cwiseAbs().colwise().sum().transpose();
  return ratio(triple_mean(err, g, ref.rows()), triple_mean(nrm, g, ref.rows()), "relative AME");
}

MetricBlock compute_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, Grouping g) {
  MetricBlock m;
  m.delta_rmse = rel_rmse(pred, ref, g);
  m.delta_rmse_sqrt = std::sqrt(m.delta_rmse);
  m.delta_ame = rel_ame(pred, ref, g);
  for (std::size_t k = 0; k < g.runs; ++k) {
    const auto first = static_cast<Eigen::Index>(k * g.steps);
    const auto width = static_cast<Eigen::Index>(g.steps);
    const Eigen::MatrixXd p = pred.middleCols(first, width);
    const Eigen::MatrixXd r = ref.middleCols(first, width);
    RunMetrics rm;
    // A run whose reference is identically zero has no relative error.
    if (r.cwiseAbs().maxCoeff() > 0.0) {
      rm.delta_rmse = rel_rmse(p, r, {1, g.steps});
      rm.delta_rmse_sqrt = std::sqrt(rm.delta_rmse);
      rm.delta_ame = rel_ame(p, r, {1, g.steps});
    }
    m.per_run.push_back(rm);
  }
  return m;
}

Eigen::VectorXd compute_kp(const PodBasis& basis, const Standardizer& st) {
  if (st.modes() != basis.rank()) {
    throw DimensionError("basis has " + std::to_string(basis.rank()) + " modes, standardizer has " +
                         std::to_string(st.modes()));
  }
  const std::span<const double> scales(st.coef_std.data(), static_cast<std::size_t>(st.coef_std.size()));
  Eigen::VectorXd kp = kernels::omp::bound_constants(basis.modes, scales);
#ifndef NDEBUG
  const Eigen::VectorXd alt = compute_kp_abs_sum(basis, st);
  for (Eigen::Index p = 0; p < kp.size(); ++p) assert(std::abs(kp[p] - alt[p]) <= 1e-9 * std::max(1.0, alt[p]));
#endif
  return kp;
}

Eigen::VectorXd compute_kp_abs_sum(const PodBasis& basis, const Standardizer& st) {
  if (st.modes() != basis.rank()) throw DimensionError("basis and standardizer disagree on the mode count");
  return (basis.modes.cwiseAbs() * st.coef_std.cwiseAbs());
}

BoundReport verify_bound_from_predictions(const PodBasis& basis, const Standardizer& st, const Eigen::MatrixXd& coeffs,
                                          const Eigen::MatrixXd& predicted_standardized,
                                          const Eigen::MatrixXd* raw_snapshots) {
  const Eigen::Index r = basis.rank();
  const Eigen::Index m = coeffs.cols();
  if (coeffs.rows() != r || predicted_standardized.rows() != r || predicted_standardized.cols() != m) {
    throw DimensionError("bound check: coefficient shapes do not match rank " + std::to_string(r));
  }
  if (m == 0) throw ArgumentError("bound check needs a non-empty validation set");

  BoundReport rep;
  const Eigen::MatrixXd dc = st.standardize_coeffs(coeffs) - predicted_standardized;
  rep.mode_errors.resize(static_cast<std::size_t>(r));
  for (Eigen::Index k = 0; k < r; ++k) {
    rep.mode_errors[static_cast<std::size_t>(k)] = std::sqrt(dc.row(k).squaredNorm() / static_cast<double>(m));
    rep.e = std::max(rep.e, rep.mode_errors[static_cast<std::size_t>(k)]);
  }

  const Eigen::MatrixXd x = kernels::omp::reconstruct(basis.modes, coeffs);
  const Eigen::MatrixXd x_hat = kernels::omp::reconstruct(basis.modes, st.restore_coeffs(predicted_standardized));
  rep.lhs = ((x - x_hat).rowwise().squaredNorm() / static_cast<double>(m)).cwiseSqrt();
  rep.kp = compute_kp(basis, st);
  for (Eigen::Index p = 0; p < rep.lhs.size(); ++p) {
    const double bound = rep.kp[p] * rep.e;
    if (rep.lhs[p] > bound + kBoundTolerance) rep.violations.push_back(p);
    if (bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, rep.lhs[p] / bound);
  }
  if (raw_snapshots != nullptr) {
    if (raw_snapshots->rows() != x.rows() || raw_snapshots->cols() != m) {
      throw DimensionError("raw snapshot matrix does not match the validation set");
    }
    rep.raw_gap_max = ((*raw_snapshots - x_hat).rowwise().squaredNorm() / static_cast<double>(m)).cwiseSqrt().maxCoeff();
  }
  return rep;
}

BoundReport verify_bound(const SurrogateModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& coeffs,
                         const Eigen::MatrixXd* raw_snapshots) {
  return verify_bound_from_predictions(model.basis, model.standardizer, coeffs, predict_standardized(model, inputs),
                                       raw_snapshots);
}

Eigen::MatrixXd infer_columns(const SurrogateModel& model, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd c = model.standardizer.restore_coeffs(predict_standardized(model, inputs));
  return kernels::omp::reconstruct(model.basis.modes, c);
}

EvalReport evaluate_runs(const SurrogateModel& model, const std::vector<SimulationRun>& runs,
                         const std::vector<std::size_t>& which) {
  if (which.empty()) throw ArgumentError("no runs selected for evaluation");
  std::vector<SimulationRun> subset;
  for (std::size_t k : which) {
    if (k >= runs.size()) throw ArgumentError("run index " + std::to_string(k) + " out of range");
    subset.push_back(runs[k]);
  }
  const auto [x, inputs] = build_snapshot_matrix(subset);
  if (x.cells() != model.cells()) {
    throw DimensionError("dataset has " + std::to_string(x.cells()) + " cells, model has " +
                         std::to_string(model.cells()));
  }
  const Eigen::MatrixXd pred = infer_columns(model, inputs.data);
  const Eigen::MatrixXd projected =
      kernels::omp::reconstruct(model.basis.modes, kernels::omp::project(model.basis.modes, x.data));
  const Grouping g{x.runs, x.steps};
  return {compute_metrics(pred, x.data, g), compute_metrics(pred, projected, g), which};
}

BoundReport verify_bound_on_runs(const SurrogateModel& model, const std::vector<SimulationRun>& runs,
                                 const std::vector<std::size_t>& which) {
  if (which.empty()) throw ArgumentError("no runs selected for the bound check");
  std::vector<SimulationRun> subset;
  for (std::size_t k : which) {
    if (k >= runs.size()) throw ArgumentError("run index " + std::to_string(k) + " out of range");
    subset.push_back(runs[k]);
  }
  const auto [x, inputs] = build_snapshot_matrix(subset);
  if (x.cells() != model.cells()) {
    throw DimensionError("dataset has " + std::to_string(x.cells()) + " cells, model has " +
                         std::to_string(model.cells()));
  }
  const Eigen::MatrixXd coeffs = kernels::omp::project(model.basis.modes, x.data);
  return verify_bound(model, inputs.data, coeffs, &x.data);
}

nlohmann::json metrics_to_json(const MetricBlock& m) {
  nlohmann::json per_run = nlohmann::json::array();
  for (const auto& r : m.per_run) {
    per_run.push_back({{"delta_rmse", r.delta_rmse}, {"delta_rmse_sqrt", r.delta_rmse_sqrt}, {"delta_ame", r.delta_ame}});
  }
  return {{"delta_rmse", m.delta_rmse},
          {"delta_rmse_sqrt", m.delta_rmse_sqrt},
          {"delta_ame", m.delta_ame},
          {"per_run", per_run}};
}

nlohmann::json report_to_json(const EvalReport& eval, const BoundReport& bound) {
  nlohmann::json violations = nlohmann::json::array();
  for (auto p : bound.violations) {
    violations.push_back({{"cell", p}, {"lhs", bound.lhs[p]}, {"bound", bound.kp[p] * bound.e}});
  }
  nlohmann::json b = {{"e", bound.e},
                      {"e_k", bound.mode_errors},
                      {"max_ratio", bound.max_ratio},
                      {"tolerance", kBoundTolerance},
                      {"violation_count", bound.violations.size()},
                      {"violations", violations}};
  if (bound.raw_gap_max) b["raw_snapshot_gap_max"] = *bound.raw_gap_max;
  return {{"metrics", {{"raw", metrics_to_json(eval.raw)}, {"projected", metrics_to_json(eval.projected)}}},
          {"runs", eval.runs},
          {"bound", b}};
}

}  // namespace rbs
