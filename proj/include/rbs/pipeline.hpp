#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "rbs/dataset.hpp"
#include "rbs/pod.hpp"
#include "rbs/svr.hpp"
#include "rbs/tuner.hpp"

namespace rbs {

/// Centering and reduction of POD coefficients (per mode) and of the
/// (t, lambda) inputs (per component), fitted on training columns.
struct Standardizer {
  Eigen::VectorXd coef_mean;   ///< E_k
  Eigen::VectorXd coef_std;    ///< S_k
  Eigen::VectorXd input_mean;  ///< length d = 1 + d_lambda
  Eigen::VectorXd input_std;

  /// Relative cutoff under which a mode's spread counts as degenerate.
  static constexpr double kDegenerateRatio = 1e-12;

  /// Returns the standardizer and, per mode, whether its spread was degenerate
  /// (then S_k = 1 and the mode gets a constant predictor).
  static std::pair<Standardizer, std::vector<bool>> fit(const Eigen::MatrixXd& coeffs, const Eigen::MatrixXd& inputs);

  Eigen::MatrixXd standardize_coeffs(const Eigen::MatrixXd& coeffs) const;
  Eigen::MatrixXd restore_coeffs(const Eigen::MatrixXd& standardized) const;
  Eigen::MatrixXd standardize_inputs(const Eigen::MatrixXd& inputs) const;
  void standardize_input_into(double t, std::span<const double> lambda, std::span<double> out) const;

  Eigen::Index modes() const noexcept { return coef_mean.size(); }
  Eigen::Index input_dims() const noexcept { return input_mean.size(); }
};

struct ModelMeta {
  std::vector<std::string> parameter_names;
  /// Training range per input component: index 0 is time.
  std::vector<Interval> input_ranges;
  double energy_threshold = 1.0;
  double energy_at_rank = 1.0;
  double objective = 0.0;            ///< e = max_k e_k
  std::vector<double> mode_errors;   ///< e_k on the validation split
  std::vector<bool> constant_modes;
  std::string created;
  /// Anything else worth keeping: split description, dataset provenance, grid_side.
  nlohmann::json extra = nlohmann::json::object();
};

/// Deployable surrogate: POD basis, standardizer, r SVRs and bound constants.
struct SurrogateModel {
  PodBasis basis;
  Standardizer standardizer;
  std::vector<SvrModel> svrs;
  Eigen::VectorXd bound_constants;  ///< K_p per cell
  ModelMeta meta;

  Eigen::Index cells() const noexcept { return basis.cells(); }
  Eigen::Index rank() const noexcept { return basis.rank(); }
  Eigen::Index param_dims() const noexcept { return standardizer.input_dims() - 1; }

  /// Throws DimensionError if the parts disagree on n, r or d.
  void validate() const;
};

struct FitConfig {
  double energy_threshold = 0.98;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
  TuneOptions tuner;
  SvrSearchRanges ranges;
  SmoOptions smo;
  SvdMethod svd_method = SvdMethod::Auto;
  /// Creation timestamp written to META; empty means current UTC time.
  std::string created;
  std::vector<std::string> parameter_names;

  void validate() const;
};

struct FitResult {
  SurrogateModel model;
  TuneResult tuning;
  SearchSpace space;
  RunSplit split;
};

FitResult fit(const std::vector<SimulationRun>& runs, const FitConfig& cfg,
              const nlohmann::json& dataset_meta = nlohmann::json::object());

/// Field at (t, lambda): standardize, predict r coefficients, de-standardize, B * C.
std::vector<double> infer(const SurrogateModel& model, double t, std::span<const double> lambda);
void infer_into(const SurrogateModel& model, double t, std::span<const double> lambda, std::span<double> out);

/// Standardized SVR outputs c_hat at (t, lambda).
std::vector<double> predict_coefficients(const SurrogateModel& model, double t, std::span<const double> lambda);

/// True if any input component lies outside its recorded training range.
bool is_extrapolated(const SurrogateModel& model, double t, std::span<const double> lambda);

/// Standardized predictions c_hat (r x k) for the columns of an InputMatrix.
Eigen::MatrixXd predict_standardized(const SurrogateModel& model, const Eigen::MatrixXd& inputs);

/// Builds the per-mode regression sets for a split.
ModeDataset make_mode_dataset(const Standardizer& st, const std::vector<bool>& constant_modes,
                              const Eigen::MatrixXd& train_coeffs, const Eigen::MatrixXd& train_inputs,
                              const Eigen::MatrixXd& val_coeffs, const Eigen::MatrixXd& val_inputs);

// -- RBSM v1 model files ------------------------------------------------------------

inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const SurrogateModel& model);
SurrogateModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const SurrogateModel& model, const std::string& path);
SurrogateModel load_model(const std::string& path);

struct SectionInfo {
  std::string tag;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t crc = 0;
};

/// Section table of a serialized model, for inspection and tests.
std::vector<SectionInfo> model_sections(std::span<const std::uint8_t> bytes);

nlohmann::json meta_to_json(const SurrogateModel& model);

// -- latency ---------------------------------------------------------------------------

struct LatencyReport {
  std::vector<double> samples_us;
  double mean_us = 0.0;
  double std_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
  Eigen::Index cells = 0;
  Eigen::Index rank = 0;
  Eigen::Index param_dims = 0;
};

/// Times n_queries single-input infer calls at random in-range inputs.
LatencyReport bench_latency(const SurrogateModel& model, std::size_t n_queries, std::uint64_t seed);

/// Random model of a given size: orthonormal basis, random SVRs. Used for
/// latency work where only the shape of the model matters.
SurrogateModel synthetic_reference_model(Eigen::Index cells, Eigen::Index rank, Eigen::Index param_dims,
                                         Eigen::Index support_vectors, std::uint64_t seed);

}  // namespace rbs
