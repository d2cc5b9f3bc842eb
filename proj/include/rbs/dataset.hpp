#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace rbs {

/// One solver run: a parameter vector and T frames of a discretized field.
struct SimulationRun {
  std::vector<double> params;
  std::vector<double> times;
  std::vector<std::vector<double>> fields;

  std::size_t steps() const noexcept { return times.size(); }
  std::size_t cells() const noexcept { return fields.empty() ? 0 : fields.front().size(); }

  /// Throws if frames are ragged, times are not strictly increasing, or any
  /// value is non-finite.
  void validate() const;

  friend bool operator==(const SimulationRun&, const SimulationRun&) = default;
};

/// n x m field matrix; column k*T + j holds run k, step j.
struct SnapshotMatrix {
  Eigen::MatrixXd data;
  std::size_t runs = 0;
  std::size_t steps = 0;

  Eigen::Index cells() const noexcept { return data.rows(); }
  Eigen::Index columns() const noexcept { return data.cols(); }
};

/// (1 + d) x m input matrix; row 0 is time, rows 1..d the parameters.
struct InputMatrix {
  Eigen::MatrixXd data;

  Eigen::Index dims() const noexcept { return data.rows(); }
  Eigen::Index columns() const noexcept { return data.cols(); }
};

std::pair<SnapshotMatrix, InputMatrix> build_snapshot_matrix(const std::vector<SimulationRun>& runs);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Rank-2 synthetic field family on a G x G grid driven by a Frohlich-type
/// nonlinearity mu(H) = mu0 + alpha / (beta + H), H = |I|.
struct SyntheticConfig {
  std::size_t grid_side = 8;
  std::size_t steps = 10;
  std::size_t runs = 20;
  Interval current{1.0, 2.0};
  Interval alpha{0.5, 1.5};
  Interval beta{0.5, 1.5};
  double mu0 = 1.0;
  std::uint64_t seed = 42;
  /// Disables the 0.2 * I * cos(2 pi t) * x term, leaving a rank-1 family.
  bool cos_term = true;

  void validate() const;
};

double frohlich_permeability(double h, double mu0, double alpha, double beta);

/// Field of one synthetic run at time t for parameters (I, alpha, beta).
std::vector<double> synthetic_frame(const SyntheticConfig& cfg, double t, double current, double alpha,
                                    double beta);

std::vector<SimulationRun> generate_synthetic(const SyntheticConfig& cfg);

std::vector<std::string> synthetic_parameter_names();

/// Run-level partition of an ensemble.
struct RunSplit {
  std::vector<std::size_t> train_runs;
  std::vector<std::size_t> val_runs;
};

/// Picks ceil(val_fraction * N) whole runs for validation.
RunSplit split_runs(std::size_t n_runs, double val_fraction, std::uint64_t seed);

/// Column indices covered by `runs` in an (N, T) run-major layout, ascending.
std::vector<Eigen::Index> run_columns(const std::vector<std::size_t>& runs, std::size_t steps);

/// Copies the given columns of `m`.
Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols);

struct DatasetPart {
  SnapshotMatrix snapshots;
  InputMatrix inputs;
};

struct DatasetSplit {
  DatasetPart train;
  DatasetPart val;
  RunSplit runs;
};

DatasetSplit split_by_run(const SnapshotMatrix& x, const InputMatrix& inputs, double val_fraction,
                          std::uint64_t seed);

/// RBSD v1 binary format; see README for the layout.
void save_dataset(const std::vector<SimulationRun>& runs, const std::string& path);
std::vector<SimulationRun> load_dataset(const std::string& path);

struct DatasetHeader {
  std::uint64_t runs = 0;
  std::uint64_t steps = 0;
  std::uint64_t cells = 0;
  std::uint64_t params = 0;
};

DatasetHeader read_dataset_header(const std::string& path);

/// Sidecar metadata path: "<stem>.meta.json" next to the dataset file.
std::string dataset_meta_path(const std::string& path);
void save_dataset_meta(const std::string& path, const nlohmann::json& meta);
/// Returns an empty object if no sidecar exists.
nlohmann::json load_dataset_meta(const std::string& path);

}  // namespace rbs
