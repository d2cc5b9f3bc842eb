#include "rbs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "rbs/binary_io.hpp"
#include "rbs/error.hpp"

namespace rbs {

namespace {

constexpr char kDatasetMagic[] = "RBSD0001";
constexpr std::size_t kMagicSize = 8;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void SimulationRun::validate() const {
  if (params.empty()) throw ArgumentError("run has no parameters");
  if (times.empty()) throw ArgumentError("run has no time steps");
  if (fields.size() != times.size()) {
    throw DimensionError("run has " + std::to_string(times.size()) + " time stamps but " +
                         std::to_string(fields.size()) + " frames");
  }
  const std::size_t n = fields.front().size();
  if (n == 0) throw DimensionError("run frames are empty");
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (fields[j].size() != n) {
      throw DimensionError("frame " + std::to_string(j) + " has " + std::to_string(fields[j].size()) +
                           " values, expected " + std::to_string(n));
    }
    if (!all_finite(fields[j])) throw NumericError("frame " + std::to_string(j) + " has non-finite values");
  }
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) throw ArgumentError("time stamps are not strictly increasing");
  }
  if (!all_finite(times) || !all_finite(params)) throw NumericError("run has non-finite times or parameters");
}

std::pair<SnapshotMatrix, InputMatrix> build_snapshot_matrix(const std::vector<SimulationRun>& runs) {
  if (runs.empty()) throw EmptyInputError("cannot build a snapshot matrix from zero runs");
  const auto& first = runs.front();
  first.validate();
  const std::size_t n = first.cells();
  const std::size_t steps = first.steps();
  const std::size_t d = first.params.size();
  for (std::size_t k = 1; k < runs.size(); ++k) {
    runs[k].validate();
    if (runs[k].cells() != n || runs[k].steps() != steps || runs[k].params.size() != d) {
      throw DimensionError("run " + std::to_string(k) + " has shape (n=" + std::to_string(runs[k].cells()) +
                           ", T=" + std::to_string(runs[k].steps()) + ", d=" + std::to_string(runs[k].params.size()) +
                           "), expected (n=" + std::to_string(n) + ", T=" + std::to_string(steps) +
                           ", d=" + std::to_string(d) + ")");
    }
  }

  const auto m = static_cast<Eigen::Index>(runs.size() * steps);
  SnapshotMatrix x{Eigen::MatrixXd(static_cast<Eigen::Index>(n), m), runs.size(), steps};
  InputMatrix inputs{Eigen::MatrixXd(static_cast<Eigen::Index>(1 + d), m)};
  for (std::size_t k = 0; k < runs.size(); ++k) {
    for (std::size_t j = 0; j < steps; ++j) {
      const auto col = static_cast<Eigen::Index>(k * steps + j);
      x.data.col(col) = Eigen::Map<const Eigen::VectorXd>(runs[k].fields[j].data(), static_cast<Eigen::Index>(n));
      inputs.data(0, col) = runs[k].times[j];
      for (std::size_t p = 0; p < d; ++p) inputs.data(static_cast<Eigen::Index>(1 + p), col) = runs[k].params[p];
    }
  }
  return {std::move(x), std::move(inputs)};
}

// -- synthetic generator ------------------------------------------------------

void SyntheticConfig::validate() const {
  if (grid_side < 2) throw GeneratorConfigError("grid side must be at least 2");
  if (steps < 2) throw GeneratorConfigError("need at least 2 time steps");
  if (runs < 4) throw GeneratorConfigError("need at least 4 runs");
  for (const auto& [name, iv] : {std::pair{"current", current}, {"alpha", alpha}, {"beta", beta}}) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo <= iv.hi)) {
      throw GeneratorConfigError(std::string(name) + " range is invalid");
    }
  }
  if (!std::isfinite(mu0)) throw GeneratorConfigError("mu0 must be finite");
  // Smallest |I| reachable in the current range.
  const double min_h = (current.lo <= 0.0 && current.hi >= 0.0)
                           ? 0.0
                           : std::min(std::abs(current.lo), std::abs(current.hi));
  if (!(beta.lo + min_h > 0.0)) {
    throw GeneratorConfigError("beta + |I| can reach " + std::to_string(beta.lo + min_h) +
                               "; the permeability denominator must stay positive");
  }
}

double frohlich_permeability(double h, double mu0, double alpha, double beta) {
  const double denom = beta + h;
  if (!(denom > 0.0)) {
    throw GeneratorConfigError("non-positive permeability denominator beta + H = " + std::to_string(denom));
  }
  return mu0 + alpha / denom;
}

std::vector<double> synthetic_frame(const SyntheticConfig& cfg, double t, double current, double alpha,
                                    double beta) {
  const std::size_t g = cfg.grid_side;
  const double mu = frohlich_permeability(std::abs(current), cfg.mu0, alpha, beta);
  const double s = std::sin(2.0 * std::numbers::pi * t);
  const double c = cfg.cos_term ? 0.2 * current * std::cos(2.0 * std::numbers::pi * t) : 0.0;
  std::vector<double> frame(g * g);
  for (std::size_t iy = 0; iy < g; ++iy) {
    const double y = static_cast<double>(iy) / static_cast<double>(g - 1);
    for (std::size_t ix = 0; ix < g; ++ix) {
      const double x = static_cast<double>(ix) / static_cast<double>(g - 1);
      const double r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
      frame[iy * g + ix] = mu * s * std::exp(-r2 / 0.1) + c * x;
    }
  }
  return frame;
}

std::vector<SimulationRun> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto draw = [&rng](Interval iv) {
    return iv.lo + (iv.hi - iv.lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  };

  std::vector<double> times(cfg.steps);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    times[j] = static_cast<double>(j) / static_cast<double>(cfg.steps - 1);
  }

  std::vector<SimulationRun> runs;
  runs.reserve(cfg.runs);
  for (std::size_t k = 0; k < cfg.runs; ++k) {
    const double current = draw(cfg.current);
    const double alpha = draw(cfg.alpha);
    const double beta = draw(cfg.beta);
    SimulationRun run;
    run.params = {current, alpha, beta};
    run.times = times;
    run.fields.reserve(cfg.steps);
    for (double t : times) run.fields.push_back(synthetic_frame(cfg, t, current, alpha, beta));
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<std::string> synthetic_parameter_names() { return {"I", "alpha", "beta"}; }

// -- splitting ------------------------------------------------------------------

RunSplit split_runs(std::size_t n_runs, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  if (n_runs < 2) throw CannotSplitError("need at least 2 runs to split, got " + std::to_string(n_runs));
  // The small slack keeps products like 0.2 * 5 from rounding up to 2.
  const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n_runs) - 1e-9));
  if (n_val >= n_runs) {
    throw CannotSplitError("validation fraction " + std::to_string(val_fraction) + " leaves no training runs out of " +
                           std::to_string(n_runs));
  }

  std::vector<std::size_t> order(n_runs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  RunSplit split;
  split.val_runs.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train_runs.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.val_runs.begin(), split.val_runs.end());
  std::sort(split.train_runs.begin(), split.train_runs.end());
  return split;
}

std::vector<Eigen::Index> run_columns(const std::vector<std::size_t>& runs, std::size_t steps) {
  std::vector<Eigen::Index> cols;
  cols.reserve(runs.size() * steps);
  for (std::size_t k : runs) {
    for (std::size_t j = 0; j < steps; ++j) cols.push_back(static_cast<Eigen::Index>(k * steps + j));
  }
  return cols;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  return out;
}

DatasetSplit split_by_run(const SnapshotMatrix& x, const InputMatrix& inputs, double val_fraction,
                          std::uint64_t seed) {
  if (x.columns() != inputs.columns()) {
    throw DimensionError("snapshot and input matrices have different column counts");
  }
  if (static_cast<std::size_t>(x.columns()) != x.runs * x.steps) {
    throw DimensionError("snapshot matrix column count does not match its run grouping");
  }
  DatasetSplit out;
  out.runs = split_runs(x.runs, val_fraction, seed);
  const auto train_cols = run_columns(out.runs.train_runs, x.steps);
  const auto val_cols = run_columns(out.runs.val_runs, x.steps);
  out.train.snapshots = {select_columns(x.data, train_cols), out.runs.train_runs.size(), x.steps};
  out.train.inputs = {select_columns(inputs.data, train_cols)};
  out.val.snapshots = {select_columns(x.data, val_cols), out.runs.val_runs.size(), x.steps};
  out.val.inputs = {select_columns(inputs.data, val_cols)};
  return out;
}

// -- RBSD v1 --------------------------------------------------------------------

void save_dataset(const std::vector<SimulationRun>& runs, const std::string& path) {
  if (runs.empty()) throw EmptyInputError("cannot save an empty dataset");
  // Validates shapes consistently with the snapshot builder.
  for (std::size_t k = 0; k < runs.size(); ++k) {
    runs[k].validate();
    if (runs[k].cells() != runs[0].cells() || runs[k].steps() != runs[0].steps() ||
        runs[k].params.size() != runs[0].params.size()) {
      throw DimensionError("run " + std::to_string(k) + " shape differs from run 0");
    }
  }
  io::ByteWriter w;
  w.text({kDatasetMagic, kMagicSize});
  w.u64(runs.size());
  w.u64(runs[0].steps());
  w.u64(runs[0].cells());
  w.u64(runs[0].params.size());
  for (const auto& run : runs) {
    w.f64s(run.params);
    w.f64s(run.times);
    for (const auto& frame : run.fields) w.f64s(frame);
  }
  io::write_file(path, w.buffer());
}

namespace {

DatasetHeader parse_header(io::ByteReader& r) {
  const std::string magic = r.text(kMagicSize, "magic");
  if (magic != std::string_view(kDatasetMagic, kMagicSize)) {
    throw FormatError("bad magic: expected \"RBSD0001\"", 0);
  }
  DatasetHeader h;
  h.runs = r.u64("run count");
  h.steps = r.u64("step count");
  h.cells = r.u64("cell count");
  h.params = r.u64("parameter count");
  if (h.runs == 0 || h.steps == 0 || h.cells == 0 || h.params == 0) {
    throw FormatError("dimension header has a zero entry (N=" + std::to_string(h.runs) + ", T=" +
                          std::to_string(h.steps) + ", n=" + std::to_string(h.cells) +
                          ", d=" + std::to_string(h.params) + ")",
                      8);
  }
  return h;
}

}  // namespace

DatasetHeader read_dataset_header(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  return parse_header(r);
}

std::vector<SimulationRun> load_dataset(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  const DatasetHeader h = parse_header(r);

  // Guard against absurd headers before allocating.
  const double per_run = static_cast<double>(h.params + h.steps + h.steps * h.cells) * 8.0;
  if (per_run * static_cast<double>(h.runs) > static_cast<double>(r.remaining())) {
    const auto expected = static_cast<std::uint64_t>(per_run * static_cast<double>(h.runs));
    throw FormatError("truncated file: header (N=" + std::to_string(h.runs) + ", T=" + std::to_string(h.steps) +
                          ", n=" + std::to_string(h.cells) + ", d=" + std::to_string(h.params) + ") needs " +
                          std::to_string(expected) + " payload bytes, " + std::to_string(r.remaining()) +
                          " available",
                      r.offset());
  }

  std::vector<SimulationRun> runs(h.runs);
  for (auto& run : runs) {
    run.params.resize(h.params);
    r.f64s(run.params, "parameters");
    run.times.resize(h.steps);
    r.f64s(run.times, "time stamps");
    run.fields.assign(h.steps, std::vector<double>(h.cells));
    for (auto& frame : run.fields) r.f64s(frame, "frame data");
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after the last run", r.offset());
  }
  return runs;
}

std::string dataset_meta_path(const std::string& path) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + ".meta.json")).string();
}

void save_dataset_meta(const std::string& path, const nlohmann::json& meta) {
  std::ofstream out(dataset_meta_path(path));
  if (!out) throw IoError("cannot write " + dataset_meta_path(path));
  out << meta.dump(2) << '\n';
}

nlohmann::json load_dataset_meta(const std::string& path) {
  const auto meta_path = dataset_meta_path(path);
  std::ifstream in(meta_path);
  if (!in) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid metadata sidecar " + meta_path + ": " + e.what());
  }
}

namespace io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace io

}  // namespace rbs
