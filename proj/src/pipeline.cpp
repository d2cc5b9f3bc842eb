#include "rbs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include "rbs/error.hpp"
#include "rbs/evaluate.hpp"
#include "rbs/kernels.hpp"

namespace rbs {

// -- Standardizer ----------------------------------------------------------------

namespace {

void row_stats(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const auto cols = static_cast<double>(m.cols());
  mean = m.rowwise().sum() / cols;
  sd.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    sd[i] = std::sqrt((m.row(i).array() - mean[i]).square().sum() / cols);
  }
}

}  // namespace

std::pair<Standardizer, std::vector<bool>> Standardizer::fit(const Eigen::MatrixXd& coeffs,
                                                             const Eigen::MatrixXd& inputs) {
  if (coeffs.cols() < 1 || coeffs.cols() != inputs.cols()) {
    throw DimensionError("standardizer needs matching, non-empty coefficient and input columns");
  }
  Standardizer st;
  row_stats(coeffs, st.coef_mean, st.coef_std);
  row_stats(inputs, st.input_mean, st.input_std);

  const double max_s = st.coef_std.size() > 0 ? st.coef_std.maxCoeff() : 0.0;
  std::vector<bool> degenerate(static_cast<std::size_t>(st.coef_std.size()), false);
  for (Eigen::Index k = 0; k < st.coef_std.size(); ++k) {
    if (!(st.coef_std[k] > kDegenerateRatio * max_s) || st.coef_std[k] == 0.0) {
      st.coef_std[k] = 1.0;
      degenerate[static_cast<std::size_t>(k)] = true;
    }
  }
  // A constant input component (e.g. a parameter held fixed) carries no information.
  for (Eigen::Index i = 0; i < st.input_std.size(); ++i) {
    if (!(st.input_std[i] > kDegenerateRatio * std::max(1.0, std::abs(st.input_mean[i])))) st.input_std[i] = 1.0;
  }
  return {std::move(st), std::move(degenerate)};
}

Eigen::MatrixXd Standardizer::standardize_coeffs(const Eigen::MatrixXd& coeffs) const {
  if (coeffs.rows() != modes()) throw DimensionError("coefficient rows do not match the standardizer");
  return (coeffs.colwise() - coef_mean).array().colwise() / coef_std.array();
}

Eigen::MatrixXd Standardizer::restore_coeffs(const Eigen::MatrixXd& standardized) const {
  if (standardized.rows() != modes()) throw DimensionError("coefficient rows do not match the standardizer");
  return (standardized.array().colwise() * coef_std.array()).matrix().colwise() + coef_mean;
}

Eigen::MatrixXd Standardizer::standardize_inputs(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dims()) throw DimensionError("input rows do not match the standardizer");
  return (inputs.colwise() - input_mean).array().colwise() / input_std.array();
}

void Standardizer::standardize_input_into(double t, std::span<const double> lambda, std::span<double> out) const {
  out[0] = (t - input_mean[0]) / input_std[0];
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i + 1);
    out[i + 1] = (lambda[i] - input_mean[row]) / input_std[row];
  }
}

// -- SurrogateModel -----------------------------------------------------------------

void SurrogateModel::validate() const {
  const Eigen::Index r = basis.rank();
  if (static_cast<Eigen::Index>(svrs.size()) != r) {
    throw DimensionError("model has " + std::to_string(svrs.size()) + " SVRs for rank " + std::to_string(r));
  }
  if (standardizer.modes() != r || standardizer.coef_std.size() != r) {
    throw DimensionError("standardizer mode count does not match the basis rank");
  }
  if (bound_constants.size() != basis.cells()) throw DimensionError("bound constants do not cover every cell");
  if (standardizer.input_std.size() != standardizer.input_dims() || standardizer.input_dims() < 2) {
    throw DimensionError("model input standardizer is malformed");
  }
  for (const auto& svr : svrs) {
    if (svr.support_inputs.cols() != standardizer.input_dims()) {
      throw DimensionError("SVR input width does not match the model input dimension");
    }
  }
}

void FitConfig::validate() const {
  if (!(energy_threshold > 0.0 && energy_threshold <= 1.0)) {
    throw ArgumentError("energy threshold must lie in (0, 1], got " + std::to_string(energy_threshold));
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  if (tuner.n_trials < 1) throw ArgumentError("tuner needs at least one trial");
}

// -- fit -------------------------------------------------------------------------------

ModeDataset make_mode_dataset(const Standardizer& st, const std::vector<bool>& constant_modes,
                              const Eigen::MatrixXd& train_coeffs, const Eigen::MatrixXd& train_inputs,
                              const Eigen::MatrixXd& val_coeffs, const Eigen::MatrixXd& val_inputs) {
  ModeDataset data;
  data.train_inputs = st.standardize_inputs(train_inputs).transpose();
  data.val_inputs = st.standardize_inputs(val_inputs).transpose();
  const Eigen::MatrixXd ct = st.standardize_coeffs(train_coeffs);
  const Eigen::MatrixXd cv = st.standardize_coeffs(val_coeffs);
  for (Eigen::Index k = 0; k < ct.rows(); ++k) {
    data.train_targets.emplace_back(ct.row(k).begin(), ct.row(k).end());
    data.val_targets.emplace_back(cv.row(k).begin(), cv.row(k).end());
  }
  data.constant_mode = constant_modes;
  return data;
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<Interval> row_ranges(const Eigen::MatrixXd& m) {
  std::vector<Interval> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back({m.row(i).minCoeff(), m.row(i).maxCoeff()});
  return out;
}

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

FitResult fit(const std::vector<SimulationRun>& runs, const FitConfig& cfg, const nlohmann::json& dataset_meta) {
  cfg.validate();
  if (runs.size() < 2) throw StageError("input", "fit needs at least 2 runs, got " + std::to_string(runs.size()));

  auto [x, inputs] = stage("snapshot matrix", [&] { return build_snapshot_matrix(runs); });
  const SvdResult svd = stage("svd", [&] { return compute_svd(x.data, cfg.svd_method); });
  const std::span<const double> sigma(svd.values.data(), static_cast<std::size_t>(svd.values.size()));
  const std::size_t r = stage("rank selection", [&] {
    return std::min(select_rank(sigma, cfg.energy_threshold), static_cast<std::size_t>(svd.rank()));
  });

  FitResult result;
  SurrogateModel& model = result.model;
  model.basis = truncate(svd, r, cfg.energy_threshold);

  const DatasetSplit split = stage("split", [&] { return split_by_run(x, inputs, cfg.val_fraction, cfg.split_seed); });
  result.split = split.runs;
  const Eigen::MatrixXd c_train = project(model.basis, split.train.snapshots.data).data;
  const Eigen::MatrixXd c_val = project(model.basis, split.val.snapshots.data).data;

  auto [st, degenerate] = stage("standardize", [&] { return Standardizer::fit(c_train, split.train.inputs.data); });
  model.standardizer = std::move(st);
  const ModeDataset data = make_mode_dataset(model.standardizer, degenerate, c_train, split.train.inputs.data, c_val,
                                             split.val.inputs.data);

  result.space = svr_search_space(r, cfg.ranges);
  result.tuning = stage("tune", [&] {
    return tune([&](const std::vector<double>& p) { return objective_worst_error(data, p, cfg.smo); }, result.space,
                cfg.tuner);
  });

  model.svrs = stage("final training", [&] {
    try {
      return train_modes(data, result.tuning.best_params, cfg.smo);
    } catch (const TrialFailure& f) {
      throw ConvergenceError(f.message, 0.0);
    }
  });
  model.bound_constants = compute_kp(model.basis, model.standardizer);

  ModelMeta& meta = model.meta;
  meta.parameter_names = cfg.parameter_names;
  if (meta.parameter_names.empty() && dataset_meta.contains("parameter_names")) {
    meta.parameter_names = dataset_meta["parameter_names"].get<std::vector<std::string>>();
  }
  const auto d = static_cast<std::size_t>(inputs.dims() - 1);
  if (meta.parameter_names.size() != d) {
    meta.parameter_names.clear();
    for (std::size_t i = 1; i <= d; ++i) meta.parameter_names.push_back("p" + std::to_string(i));
  }
  meta.input_ranges = row_ranges(split.train.inputs.data);
  meta.energy_threshold = cfg.energy_threshold;
  meta.energy_at_rank = accumulated_energy(sigma, r);
  meta.mode_errors.resize(r);
  for (std::size_t k = 0; k < r; ++k) {
    meta.mode_errors[k] = validation_rmse(model.svrs[k], data.val_inputs, data.val_targets[k]);
  }
  meta.objective = *std::max_element(meta.mode_errors.begin(), meta.mode_errors.end());
  meta.constant_modes = degenerate;
  meta.created = cfg.created.empty() ? utc_now() : cfg.created;
  meta.extra["split"] = {{"val_fraction", cfg.val_fraction},
                         {"seed", cfg.split_seed},
                         {"val_runs", split.runs.val_runs},
                         {"train_runs", split.runs.train_runs}};
  meta.extra["tuning"] = {{"trials", cfg.tuner.n_trials},
                          {"seed", cfg.tuner.seed},
                          {"mode", cfg.tuner.mode == TuneMode::Joint ? "joint" : "independent"}};
  meta.extra["dataset"] = {{"runs", x.runs}, {"steps", x.steps}, {"cells", x.cells()}};
  if (dataset_meta.contains("grid_side")) meta.extra["grid_side"] = dataset_meta["grid_side"];
  if (dataset_meta.contains("provenance")) meta.extra["provenance"] = dataset_meta["provenance"];
  model.validate();
  return result;
}

// -- inference --------------------------------------------------------------------------

namespace {

void check_query(const SurrogateModel& model, double t, std::span<const double> lambda) {
  if (static_cast<Eigen::Index>(lambda.size()) != model.param_dims()) {
    throw DimensionError("lambda has " + std::to_string(lambda.size()) + " components, model expects " +
                         std::to_string(model.param_dims()));
  }
  if (!std::isfinite(t)) throw NumericError("time is not finite");
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!std::isfinite(lambda[i])) throw NumericError("lambda[" + std::to_string(i) + "] is not finite");
  }
}

}  // namespace

std::vector<double> predict_coefficients(const SurrogateModel& model, double t, std::span<const double> lambda) {
  check_query(model, t, lambda);
  std::vector<double> x(static_cast<std::size_t>(model.standardizer.input_dims()));
  model.standardizer.standardize_input_into(t, lambda, x);
  std::vector<double> c(model.svrs.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = predict(model.svrs[k], x);
  return c;
}

void infer_into(const SurrogateModel& model, double t, std::span<const double> lambda, std::span<double> out) {
  if (static_cast<Eigen::Index>(out.size()) != model.cells()) throw DimensionError("output buffer has wrong length");
  std::vector<double> c = predict_coefficients(model, t, lambda);
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    c[k] = model.standardizer.coef_std[kk] * c[k] + model.standardizer.coef_mean[kk];
  }
  kernels::omp::reconstruct_into(model.basis.modes, c, out);
}

std::vector<double> infer(const SurrogateModel& model, double t, std::span<const double> lambda) {
  std::vector<double> field(static_cast<std::size_t>(model.cells()));
  infer_into(model, t, lambda, field);
  return field;
}

bool is_extrapolated(const SurrogateModel& model, double t, std::span<const double> lambda) {
  const auto& ranges = model.meta.input_ranges;
  if (ranges.size() != lambda.size() + 1) return false;
  auto outside = [](double v, const Interval& iv) { return v < iv.lo || v > iv.hi; };
  if (outside(t, ranges[0])) return true;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (outside(lambda[i], ranges[i + 1])) return true;
  }
  return false;
}

Eigen::MatrixXd predict_standardized(const SurrogateModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != model.standardizer.input_dims()) throw DimensionError("input matrix has wrong row count");
  const RowMatrix x = model.standardizer.standardize_inputs(inputs).transpose();
  Eigen::MatrixXd out(model.rank(), inputs.cols());
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const std::span<const double> row(x.row(j).data(), static_cast<std::size_t>(x.cols()));
    for (Eigen::Index k = 0; k < model.rank(); ++k) out(k, j) = predict(model.svrs[static_cast<std::size_t>(k)], row);
  }
  return out;
}

// -- latency ----------------------------------------------------------------------------

LatencyReport bench_latency(const SurrogateModel& model, std::size_t n_queries, std::uint64_t seed) {
  if (n_queries < 1) throw ArgumentError("need at least one query");
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(model.param_dims());
  auto draw = [&](std::size_t i) {
    if (i < model.meta.input_ranges.size()) {
      const auto& iv = model.meta.input_ranges[i];
      return std::uniform_real_distribution<double>(iv.lo, std::max(iv.hi, iv.lo))(rng);
    }
    return std::normal_distribution<double>(model.standardizer.input_mean[static_cast<Eigen::Index>(i)],
                                            model.standardizer.input_std[static_cast<Eigen::Index>(i)])(rng);
  };

  LatencyReport rep;
  rep.cells = model.cells();
  rep.rank = model.rank();
  rep.param_dims = model.param_dims();
  rep.samples_us.reserve(n_queries);
  std::vector<double> lambda(d);
  for (std::size_t q = 0; q < n_queries; ++q) {
    const double t = draw(0);
    for (std::size_t i = 0; i < d; ++i) lambda[i] = draw(i + 1);
    const auto start = std::chrono::steady_clock::now();
    const std::vector<double> field = infer(model, t, lambda);
    const auto stop = std::chrono::steady_clock::now();
    rep.samples_us.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
  }

  const auto n = static_cast<double>(n_queries);
  double sum = 0.0;
  for (double s : rep.samples_us) sum += s;
  rep.mean_us = sum / n;
  double var = 0.0;
  for (double s : rep.samples_us) var += (s - rep.mean_us) * (s - rep.mean_us);
  rep.std_us = std::sqrt(var / n);
  std::vector<double> sorted = rep.samples_us;
  std::sort(sorted.begin(), sorted.end());
  rep.min_us = sorted.front();
  rep.max_us = sorted.back();
  // Nearest-rank percentiles.
  auto pct = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  };
  rep.p50_us = pct(50.0);
  rep.p99_us = pct(99.0);
  return rep;
}

SurrogateModel synthetic_reference_model(Eigen::Index cells, Eigen::Index rank, Eigen::Index param_dims,
                                         Eigen::Index support_vectors, std::uint64_t seed) {
  if (cells < rank || rank < 1 || param_dims < 1 || support_vectors < 0) {
    throw ArgumentError("reference model needs cells >= rank >= 1 and param_dims >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
  };

  SurrogateModel model;
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(cells, rank));
  model.basis.modes = qr.householderQ() * Eigen::MatrixXd::Identity(cells, rank);
  model.basis.singular_values.resize(rank);
  for (Eigen::Index k = 0; k < rank; ++k) model.basis.singular_values[k] = std::pow(0.5, static_cast<double>(k));
  model.basis.energy_threshold = 1.0;

  const Eigen::Index d = param_dims + 1;
  model.standardizer.coef_mean = gaussian(rank, 1).col(0);
  model.standardizer.coef_std = (gaussian(rank, 1).col(0).array().abs() + 0.5).matrix();
  model.standardizer.input_mean = Eigen::VectorXd::Constant(d, 0.5);
  model.standardizer.input_std = Eigen::VectorXd::Constant(d, std::sqrt(1.0 / 12.0));
  for (Eigen::Index k = 0; k < rank; ++k) {
    SvrModel svr;
    svr.hyper = {0.01, 10.0, 1.0 + unit(rng)};
    svr.support_inputs = gaussian(support_vectors, d);
    svr.dual_coefs.resize(support_vectors);
    for (Eigen::Index s = 0; s < support_vectors; ++s) svr.dual_coefs[s] = svr.hyper.c_reg * (2.0 * unit(rng) - 1.0);
    svr.bias = normal(rng);
    model.svrs.push_back(std::move(svr));
  }
  model.bound_constants = compute_kp(model.basis, model.standardizer);

  auto& meta = model.meta;
  for (Eigen::Index i = 1; i <= param_dims; ++i) meta.parameter_names.push_back("p" + std::to_string(i));
  meta.input_ranges.assign(static_cast<std::size_t>(d), Interval{0.0, 1.0});
  meta.energy_threshold = 1.0;
  meta.energy_at_rank = 1.0;
  meta.mode_errors.assign(static_cast<std::size_t>(rank), 0.0);
  meta.constant_modes.assign(static_cast<std::size_t>(rank), false);
  meta.created = "1970-01-01T00:00:00Z";
  meta.extra["provenance"] = "synthetic reference model (seed " + std::to_string(seed) + ")";
  model.validate();
  return model;
}

}  // namespace rbs
