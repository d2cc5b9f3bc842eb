#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rbs/error.hpp"
#include "rbs/pipeline.hpp"
#include "support.hpp"

using namespace rbs;

namespace {

const FitResult& shared_fit() {
  static const FitResult result = [] {
    const auto runs = generate_synthetic(test::small_synthetic(42));
    return fit(runs, test::quick_fit_config(16));
  }();
  return result;
}

const std::vector<SimulationRun>& shared_runs() {
  static const auto runs = generate_synthetic(test::small_synthetic(42));
  return runs;
}

}  // namespace

TEST(Standardizer, PopulationStatistics) {
  Eigen::MatrixXd c(2, 4);
  c << 1, 3, 1, 3,
       2, 2, 2, 2;
  Eigen::MatrixXd in(2, 4);
  in << 0, 1, 2, 3,
        5, 5, 5, 5;
  const auto [st, degenerate] = Standardizer::fit(c, in);
  EXPECT_DOUBLE_EQ(st.coef_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(st.coef_std[0], 1.0);
  EXPECT_DOUBLE_EQ(st.coef_mean[1], 2.0);
  EXPECT_DOUBLE_EQ(st.coef_std[1], 1.0);
  EXPECT_EQ(degenerate, (std::vector<bool>{false, true}));
  EXPECT_DOUBLE_EQ(st.input_mean[0], 1.5);
  EXPECT_DOUBLE_EQ(st.input_std[0], std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(st.input_std[1], 1.0);
  const Eigen::MatrixXd z = st.standardize_coeffs(c);
  EXPECT_DOUBLE_EQ(z(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(z(1, 2), 0.0);
  EXPECT_THROW(Standardizer::fit(c, Eigen::MatrixXd::Zero(2, 3)), DimensionError);
  EXPECT_THROW(st.standardize_coeffs(Eigen::MatrixXd::Zero(3, 1)), DimensionError);
}

TEST(Standardizer, RoundTripAndMoments) {
  const Eigen::MatrixXd c = test::random_matrix(4, 30, 1) * 7.0 + Eigen::MatrixXd::Constant(4, 30, 3.0);
  const Eigen::MatrixXd in = test::random_matrix(3, 30, 2);
  const auto [st, degenerate] = Standardizer::fit(c, in);
  const Eigen::MatrixXd z = st.standardize_coeffs(c);
  for (Eigen::Index k = 0; k < 4; ++k) {
    EXPECT_NEAR(z.row(k).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(z.row(k).array().square().mean()), 1.0, 1e-12);
  }
  EXPECT_LE((st.restore_coeffs(z) - c).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd zi = st.standardize_inputs(in);
  std::vector<double> out(3);
  const double lambda[] = {in(1, 5), in(2, 5)};
  st.standardize_input_into(in(0, 5), lambda, out);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out[static_cast<std::size_t>(i)], zi(i, 5));
}

TEST(Fit, SyntheticEndToEnd) {
  const auto& res = shared_fit();
  const auto& m = res.model;
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.rank(), 2);
  EXPECT_EQ(m.cells(), 16);
  EXPECT_EQ(m.param_dims(), 3);
  EXPECT_GE(m.meta.energy_at_rank, 0.98);
  EXPECT_EQ(m.meta.parameter_names, (std::vector<std::string>{"p1", "p2", "p3"}));
  ASSERT_EQ(m.meta.mode_errors.size(), 2u);
  EXPECT_DOUBLE_EQ(m.meta.objective, std::max(m.meta.mode_errors[0], m.meta.mode_errors[1]));
  EXPECT_DOUBLE_EQ(m.meta.objective, res.tuning.best.objective);
  EXPECT_EQ(res.tuning.history.size(), 16u);
  EXPECT_EQ(m.meta.created, "2000-01-01T00:00:00Z");
  EXPECT_EQ(res.space.size(), 6u);

  std::set<std::size_t> all(res.split.train_runs.begin(), res.split.train_runs.end());
  for (auto v : res.split.val_runs) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 20u);
  EXPECT_EQ(res.split.val_runs.size(), 4u);
  EXPECT_EQ(m.meta.extra["split"]["val_runs"].get<std::vector<std::size_t>>(), res.split.val_runs);

  // Input ranges come from the training columns only.
  for (std::size_t i = 0; i < m.meta.input_ranges.size(); ++i) {
    EXPECT_LE(m.meta.input_ranges[i].lo, m.meta.input_ranges[i].hi);
  }
  EXPECT_DOUBLE_EQ(m.meta.input_ranges[0].lo, 0.0);
  EXPECT_DOUBLE_EQ(m.meta.input_ranges[0].hi, 1.0);
}

TEST(Fit, StandardizerUsesTrainingColumnsOnly) {
  const auto& res = shared_fit();
  auto [x, in] = build_snapshot_matrix(shared_runs());
  const Eigen::MatrixXd train = select_columns(x.data, run_columns(res.split.train_runs, x.steps));
  const Eigen::MatrixXd c = project(res.model.basis, train).data;
  const Eigen::VectorXd mean = c.rowwise().mean();
  EXPECT_LE((mean - res.model.standardizer.coef_mean).cwiseAbs().maxCoeff(), 1e-12 * mean.cwiseAbs().maxCoeff());
}

TEST(Fit, Deterministic) {
  const auto runs = generate_synthetic(test::small_synthetic(7));
  const auto a = serialize_model(fit(runs, test::quick_fit_config(6)).model);
  const auto b = serialize_model(fit(runs, test::quick_fit_config(6)).model);
  EXPECT_EQ(a, b);
}

TEST(Fit, CollapsedParameterRange) {
  auto cfg = test::small_synthetic(3);
  cfg.alpha = {1.0, 1.0};
  const auto res = fit(generate_synthetic(cfg), test::quick_fit_config(4));
  EXPECT_DOUBLE_EQ(res.model.standardizer.input_std[2], 1.0);
  EXPECT_NO_THROW(res.model.validate());
}

TEST(Fit, ConfigErrors) {
  const auto runs = generate_synthetic(test::small_synthetic(1));
  auto cfg = test::quick_fit_config(2);
  cfg.energy_threshold = 0.0;
  EXPECT_THROW(fit(runs, cfg), ArgumentError);
  cfg = test::quick_fit_config(2);
  cfg.val_fraction = 1.0;
  EXPECT_THROW(fit(runs, cfg), ArgumentError);
  cfg = test::quick_fit_config(0);
  EXPECT_THROW(fit(runs, cfg), ArgumentError);
  EXPECT_THROW(fit({runs[0]}, test::quick_fit_config(2)), StageError);
}

TEST(Fit, ParameterNamesFromDatasetMeta) {
  const auto runs = generate_synthetic(test::small_synthetic(2));
  const nlohmann::json meta = {{"parameter_names", synthetic_parameter_names()}, {"grid_side", 4}};
  const auto res = fit(runs, test::quick_fit_config(2), meta);
  EXPECT_EQ(res.model.meta.parameter_names, synthetic_parameter_names());
  EXPECT_EQ(res.model.meta.extra["grid_side"], 4);
}

TEST(Infer, MatchesColumnPathAndBuffers) {
  const auto& m = shared_fit().model;
  auto [x, in] = build_snapshot_matrix(shared_runs());
  const Eigen::MatrixXd pred = m.basis.modes * m.standardizer.restore_coeffs(predict_standardized(m, in.data));
  for (Eigen::Index col = 0; col < in.columns(); col += 17) {
    const double lambda[] = {in.data(1, col), in.data(2, col), in.data(3, col)};
    const auto field = infer(m, in.data(0, col), lambda);
    ASSERT_EQ(field.size(), 16u);
    std::vector<double> buf(16);
    infer_into(m, in.data(0, col), lambda, buf);
    EXPECT_EQ(field, buf);
    for (Eigen::Index p = 0; p < 16; ++p) EXPECT_NEAR(field[static_cast<std::size_t>(p)], pred(p, col), 1e-12);

    // Coefficients come straight from the per-mode SVRs.
    const auto c = predict_coefficients(m, in.data(0, col), lambda);
    std::vector<double> z(4);
    m.standardizer.standardize_input_into(in.data(0, col), lambda, z);
    for (std::size_t k = 0; k < c.size(); ++k) EXPECT_DOUBLE_EQ(c[k], predict(m.svrs[k], z));
  }
}

TEST(Infer, ReproducesTrainingColumns) {
  // Search ranges pinned near well-fitting hyperparameters, so the check is on
  // inference rather than on how far the tuner gets within a few trials.
  auto cfg = test::quick_fit_config(4);
  cfg.ranges.epsilon = {"epsilon", 1e-3, 2e-3};
  cfg.ranges.c_reg = {"c_reg", 500.0, 2000.0};
  cfg.ranges.sigma = {"sigma", 1.5, 2.5};
  const auto res = fit(shared_runs(), cfg);
  auto [x, in] = build_snapshot_matrix(shared_runs());
  double worst = 0.0;
  for (std::size_t k : res.split.train_runs) {
    for (std::size_t j = 0; j < x.steps; ++j) {
      const auto col = static_cast<Eigen::Index>(k * x.steps + j);
      const double norm = x.data.col(col).norm();
      if (norm == 0.0) continue;  // the t = 0 frame is identically zero
      const double lambda[] = {in.data(1, col), in.data(2, col), in.data(3, col)};
      const auto field = infer(res.model, in.data(0, col), lambda);
      const Eigen::Map<const Eigen::VectorXd> f(field.data(), x.data.rows());
      worst = std::max(worst, (f - x.data.col(col)).norm() / norm);
    }
  }
  EXPECT_LE(worst, 0.05);
}

TEST(Infer, Errors) {
  const auto& m = shared_fit().model;
  const double two[] = {1.0, 1.0};
  EXPECT_THROW(infer(m, 1.0, two), DimensionError);
  const double bad[] = {1.0, std::nan(""), 1.0};
  EXPECT_THROW(infer(m, 1.0, bad), NumericError);
  const double ok[] = {1.5, 1.0, 1.0};
  EXPECT_THROW(infer(m, INFINITY, ok), NumericError);
  std::vector<double> small(3);
  EXPECT_THROW(infer_into(m, 1.0, ok, small), DimensionError);
}

TEST(Infer, Extrapolation) {
  const auto& m = shared_fit().model;
  const auto& r = m.meta.input_ranges;
  const double inside[] = {0.5 * (r[1].lo + r[1].hi), 0.5 * (r[2].lo + r[2].hi), 0.5 * (r[3].lo + r[3].hi)};
  EXPECT_FALSE(is_extrapolated(m, 0.5, inside));
  EXPECT_TRUE(is_extrapolated(m, 1.5, inside));
  const double outside[] = {r[1].hi * 2.0, inside[1], inside[2]};
  EXPECT_TRUE(is_extrapolated(m, 0.5, outside));
  // Extrapolated queries still return a field.
  EXPECT_EQ(infer(m, 1.5, outside).size(), 16u);
}

TEST(Latency, ReportStatistics) {
  const auto model = synthetic_reference_model(500, 4, 3, 50, 1);
  EXPECT_NO_THROW(model.validate());
  const Eigen::MatrixXd g = model.basis.modes.transpose() * model.basis.modes;
  EXPECT_LE((g - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  const auto rep = bench_latency(model, 50, 2);
  EXPECT_EQ(rep.samples_us.size(), 50u);
  EXPECT_GT(rep.mean_us, 0.0);
  EXPECT_LE(rep.min_us, rep.p50_us);
  EXPECT_LE(rep.p50_us, rep.p99_us);
  EXPECT_LE(rep.p99_us, rep.max_us);
  EXPECT_EQ(rep.cells, 500);
  EXPECT_EQ(rep.rank, 4);
  EXPECT_EQ(rep.param_dims, 3);
  EXPECT_THROW(bench_latency(model, 0, 1), ArgumentError);
  EXPECT_THROW(synthetic_reference_model(3, 4, 1, 10, 1), ArgumentError);
}
