#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "rbs/binary_io.hpp"
#include "rbs/dataset.hpp"
#include "rbs/error.hpp"
#include "support.hpp"

using namespace rbs;

namespace {

SimulationRun make_run(std::vector<double> params, std::vector<double> times, std::vector<std::vector<double>> fields) {
  SimulationRun r;
  r.params = std::move(params);
  r.times = std::move(times);
  r.fields = std::move(fields);
  return r;
}

std::vector<SimulationRun> random_runs(std::size_t n_runs, std::size_t steps, std::size_t cells, std::size_t d,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<SimulationRun> runs;
  for (std::size_t k = 0; k < n_runs; ++k) {
    SimulationRun r;
    for (std::size_t i = 0; i < d; ++i) r.params.push_back(normal(rng));
    for (std::size_t j = 0; j < steps; ++j) {
      r.times.push_back(static_cast<double>(j) * 0.5);
      std::vector<double> f(cells);
      for (auto& v : f) v = normal(rng);
      r.fields.push_back(f);
    }
    runs.push_back(r);
  }
  return runs;
}

}  // namespace

TEST(SnapshotMatrix, TwoRunsLayout) {
  const std::vector<SimulationRun> runs = {make_run({5}, {0, 1}, {{1}, {2}}), make_run({6}, {0, 1}, {{3}, {4}})};
  const auto [x, in] = build_snapshot_matrix(runs);
  Eigen::MatrixXd want_x(1, 4);
  want_x << 1, 2, 3, 4;
  Eigen::MatrixXd want_in(2, 4);
  want_in << 0, 1, 0, 1, 5, 5, 6, 6;
  EXPECT_EQ(x.data, want_x);
  EXPECT_EQ(in.data, want_in);
  EXPECT_EQ(x.runs, 2u);
  EXPECT_EQ(x.steps, 2u);
}

TEST(SnapshotMatrix, SingleColumn) {
  const auto [x, in] = build_snapshot_matrix({make_run({1, 2}, {0.25}, {{7, 8, 9}})});
  ASSERT_EQ(x.columns(), 1);
  EXPECT_EQ(x.data.col(0), Eigen::Vector3d(7, 8, 9));
  EXPECT_EQ(in.data.col(0), Eigen::Vector3d(0.25, 1, 2));
}

TEST(SnapshotMatrix, LayoutMatchesLoopOracle) {
  const auto runs = random_runs(3, 4, 10, 2, 11);
  const auto [x, in] = build_snapshot_matrix(runs);
  EXPECT_EQ(x.data.rows(), 10);
  EXPECT_EQ(x.data.cols(), 12);
  EXPECT_EQ(in.data.rows(), 3);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const auto col = static_cast<Eigen::Index>(i * 4 + j);
      for (std::size_t p = 0; p < 10; ++p) EXPECT_EQ(x.data(static_cast<Eigen::Index>(p), col), runs[i].fields[j][p]);
      EXPECT_EQ(in.data(0, col), runs[i].times[j]);
      EXPECT_EQ(in.data(1, col), runs[i].params[0]);
      EXPECT_EQ(in.data(2, col), runs[i].params[1]);
    }
  }
  // Column 7 is run 1, frame 3.
  for (std::size_t p = 0; p < 10; ++p) EXPECT_EQ(x.data(static_cast<Eigen::Index>(p), 7), runs[1].fields[3][p]);
}

TEST(SnapshotMatrix, Errors) {
  EXPECT_THROW(build_snapshot_matrix({}), EmptyInputError);
  auto runs = random_runs(2, 3, 4, 1, 1);
  runs[1].fields[0].push_back(1.0);
  EXPECT_THROW(build_snapshot_matrix(runs), Error);
  runs = random_runs(2, 3, 4, 1, 1);
  runs[1].params.push_back(0.0);
  EXPECT_THROW(build_snapshot_matrix(runs), DimensionError);
  runs = random_runs(2, 3, 4, 1, 1);
  runs[1].times.pop_back();
  runs[1].fields.pop_back();
  EXPECT_THROW(build_snapshot_matrix(runs), DimensionError);
  runs = random_runs(2, 3, 4, 1, 1);
  runs[0].fields[1][2] = std::nan("");
  EXPECT_THROW(build_snapshot_matrix(runs), Error);
}

TEST(Synthetic, FrohlichLaw) {
  EXPECT_DOUBLE_EQ(frohlich_permeability(0.0, 0.0, 1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(frohlich_permeability(2.0, 1.0, 3.0, 1.0), 2.0);
  EXPECT_THROW(frohlich_permeability(1.0, 0.0, 1.0, -1.0), GeneratorConfigError);
}

TEST(Synthetic, ZeroFrameWhenBothTermsVanish) {
  SyntheticConfig cfg;
  cfg.mu0 = 0.0;
  const auto frame = synthetic_frame(cfg, 0.0, 0.0, 1.0, 1.0);
  ASSERT_EQ(frame.size(), 64u);
  for (double v : frame) EXPECT_EQ(v, 0.0);
}

TEST(Synthetic, FrameMatchesClosedForm) {
  SyntheticConfig cfg;
  cfg.grid_side = 3;
  const double t = 0.3, current = 1.4, alpha = 0.7, beta = 0.9;
  const auto frame = synthetic_frame(cfg, t, current, alpha, beta);
  const double mu = cfg.mu0 + alpha / (beta + current);
  for (std::size_t iy = 0; iy < 3; ++iy) {
    for (std::size_t ix = 0; ix < 3; ++ix) {
      const double x = static_cast<double>(ix) / 2.0, y = static_cast<double>(iy) / 2.0;
      const double want = mu * std::sin(2 * M_PI * t) * std::exp(-((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) / 0.1) +
                          0.2 * current * std::cos(2 * M_PI * t) * x;
      EXPECT_NEAR(frame[iy * 3 + ix], want, 1e-14);
    }
  }
}

TEST(Synthetic, ShapesRangesAndDeterminism) {
  SyntheticConfig cfg;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 20u);
  for (const auto& r : a) {
    EXPECT_EQ(r.steps(), 10u);
    EXPECT_EQ(r.cells(), 64u);
    ASSERT_EQ(r.params.size(), 3u);
    EXPECT_GE(r.params[0], cfg.current.lo);
    EXPECT_LE(r.params[0], cfg.current.hi);
    EXPECT_GE(r.params[1], cfg.alpha.lo);
    EXPECT_LE(r.params[1], cfg.alpha.hi);
    EXPECT_DOUBLE_EQ(r.times.front(), 0.0);
    EXPECT_DOUBLE_EQ(r.times.back(), 1.0);
  }
  cfg.seed = 43;
  EXPECT_NE(generate_synthetic(cfg), a);
}

TEST(Synthetic, RankAtMostTwo) {
  for (std::uint64_t seed : {1u, 42u, 99u}) {
    for (std::size_t runs : {2u, 5u, 20u}) {
      SyntheticConfig cfg;
      cfg.seed = seed;
      cfg.runs = std::max<std::size_t>(runs, 4);
      const auto [x, in] = build_snapshot_matrix(generate_synthetic(cfg));
      const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(x.data).singularValues();
      for (Eigen::Index k = 2; k < s.size(); ++k) EXPECT_LE(s[k], 1e-8 * s[0]);
    }
  }
}

TEST(Synthetic, ConfigValidation) {
  SyntheticConfig cfg;
  cfg.grid_side = 1;
  EXPECT_THROW(cfg.validate(), GeneratorConfigError);
  cfg = {};
  cfg.runs = 3;
  EXPECT_THROW(cfg.validate(), GeneratorConfigError);
  cfg = {};
  cfg.alpha = {2.0, 1.0};
  EXPECT_THROW(cfg.validate(), GeneratorConfigError);
  cfg = {};
  cfg.beta = {-5.0, -4.0};
  EXPECT_THROW(generate_synthetic(cfg), GeneratorConfigError);
}

TEST(Split, CeilingCount) {
  const auto s = split_runs(5, 0.2, 1);
  EXPECT_EQ(s.val_runs.size(), 1u);
  EXPECT_EQ(s.train_runs.size(), 4u);
  EXPECT_EQ(split_runs(20, 0.2, 1).val_runs.size(), 4u);
  EXPECT_EQ(split_runs(10, 0.25, 1).val_runs.size(), 3u);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_runs(5, 0.0, 1), ArgumentError);
  EXPECT_THROW(split_runs(5, 1.0, 1), ArgumentError);
  EXPECT_THROW(split_runs(1, 0.5, 1), CannotSplitError);
  EXPECT_THROW(split_runs(4, 0.9, 1), CannotSplitError);
}

TEST(Split, DeterministicPartition) {
  const auto runs = random_runs(10, 2, 3, 1, 5);
  const auto [x, in] = build_snapshot_matrix(runs);
  const auto a = split_by_run(x, in, 0.3, 7);
  const auto b = split_by_run(x, in, 0.3, 7);
  EXPECT_EQ(a.runs.val_runs, b.runs.val_runs);
  EXPECT_EQ(a.train.snapshots.data, b.train.snapshots.data);
  EXPECT_EQ(a.val.snapshots.columns(), 6);
  EXPECT_EQ(a.train.snapshots.columns(), 14);

  std::set<std::size_t> all(a.runs.train_runs.begin(), a.runs.train_runs.end());
  for (auto k : a.runs.val_runs) EXPECT_TRUE(all.insert(k).second);
  EXPECT_EQ(all.size(), 10u);

  // Whole runs move together and inputs stay paired with their columns.
  const auto val_cols = run_columns(a.runs.val_runs, 2);
  for (std::size_t c = 0; c < val_cols.size(); ++c) {
    EXPECT_EQ(a.val.snapshots.data.col(static_cast<Eigen::Index>(c)), x.data.col(val_cols[c]));
    EXPECT_EQ(a.val.inputs.data.col(static_cast<Eigen::Index>(c)), in.data.col(val_cols[c]));
  }
}

TEST(Split, SeedsDiffer) {
  bool differs = false;
  const auto base = split_runs(20, 0.2, 0).val_runs;
  for (std::uint64_t s = 1; s < 10 && !differs; ++s) differs = split_runs(20, 0.2, s).val_runs != base;
  EXPECT_TRUE(differs);
}

TEST(DatasetFile, RoundTripBitExact) {
  test::TempDir dir;
  auto runs = random_runs(4, 3, 7, 2, 21);
  runs[0].fields[0][0] = 1e-310;  // subnormal survives
  runs[1].fields[2][3] = -0.0;
  const std::string path = dir.file("d.rbsd");
  save_dataset(runs, path);
  const auto back = load_dataset(path);
  ASSERT_EQ(back.size(), runs.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t p = 0; p < 7; ++p) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(back[k].fields[j][p]), std::bit_cast<std::uint64_t>(runs[k].fields[j][p]));
      }
    }
  }
  EXPECT_EQ(back, runs);
  const auto h = read_dataset_header(path);
  EXPECT_EQ(h.runs, 4u);
  EXPECT_EQ(h.steps, 3u);
  EXPECT_EQ(h.cells, 7u);
  EXPECT_EQ(h.params, 2u);
}

TEST(DatasetFile, WrongMagic) {
  test::TempDir dir;
  const std::string path = dir.file("bad.rbsd");
  save_dataset(random_runs(2, 2, 2, 1, 1), path);
  auto bytes = io::read_file(path);
  bytes[0] = 'X';
  io::write_file(path, bytes);
  try {
    load_dataset(path);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("RBSD0001"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, TruncationReportsOffset) {
  test::TempDir dir;
  const std::string path = dir.file("t.rbsd");
  // Header says T = 5 but only four frames are present.
  save_dataset(random_runs(1, 5, 3, 1, 2), path);
  auto bytes = io::read_file(path);
  bytes.resize(bytes.size() - 3 * sizeof(double));
  io::write_file(path, bytes);
  try {
    load_dataset(path);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, TrailingBytesRejected) {
  test::TempDir dir;
  const std::string path = dir.file("x.rbsd");
  save_dataset(random_runs(1, 2, 2, 1, 2), path);
  auto bytes = io::read_file(path);
  bytes.push_back(0);
  io::write_file(path, bytes);
  EXPECT_THROW(load_dataset(path), FormatError);
}

TEST(DatasetFile, MissingFile) { EXPECT_THROW(load_dataset("/nonexistent/d.rbsd"), IoError); }

TEST(DatasetFile, MetaSidecar) {
  test::TempDir dir;
  const std::string path = dir.file("d.rbsd");
  EXPECT_TRUE(load_dataset_meta(path).empty());
  save_dataset_meta(path, {{"grid_side", 8}});
  EXPECT_EQ(load_dataset_meta(path)["grid_side"], 8);
  EXPECT_EQ(dataset_meta_path(path), dir.file("d.meta.json"));
}
