#pragma once

// Shared fixtures and independent reference computations for the test suites.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rbs/dataset.hpp"
#include "rbs/pipeline.hpp"
#include "rbs/svr.hpp"

namespace rbs::test {

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("rbs_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline Eigen::MatrixXd random_orthonormal(Eigen::Index n, Eigen::Index r, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(n, r, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
}

/// Small synthetic ensemble that fits in well under a second.
inline SyntheticConfig small_synthetic(std::uint64_t seed, std::size_t grid = 4) {
  SyntheticConfig cfg;
  cfg.grid_side = grid;
  cfg.steps = 10;
  cfg.runs = 20;
  cfg.seed = seed;
  return cfg;
}

inline FitConfig quick_fit_config(std::size_t trials = 8, std::uint64_t seed = 3) {
  FitConfig cfg;
  cfg.tuner.n_trials = trials;
  cfg.tuner.seed = seed;
  cfg.split_seed = seed;
  cfg.created = "2000-01-01T00:00:00Z";
  return cfg;
}

// -- metric oracles ----------------------------------------------------------------------

/// Literal triple loop over runs, steps and cells.
inline double loop_rel_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, std::size_t runs,
                            std::size_t steps) {
  const auto n = static_cast<std::size_t>(ref.rows());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < runs; ++k) {
    double num_k = 0.0;
    double den_k = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
      double num_j = 0.0;
      double den_j = 0.0;
      const auto col = static_cast<Eigen::Index>(k * steps + j);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pred(static_cast<Eigen::Index>(i), col) - ref(static_cast<Eigen::Index>(i), col);
        num_j += d * d;
        den_j += ref(static_cast<Eigen::Index>(i), col) * ref(static_cast<Eigen::Index>(i), col);
      }
      num_k += num_j / static_cast<double>(n);
      den_k += den_j / static_cast<double>(n);
    }
    num += num_k / static_cast<double>(steps);
    den += den_k / static_cast<double>(steps);
  }
  return (num / static_cast<double>(runs)) / (den / static_cast<double>(runs));
}

inline double loop_rel_ame(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& ref, std::size_t runs,
                           std::size_t steps) {
  const auto n = static_cast<std::size_t>(ref.rows());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < runs; ++k) {
    double num_k = 0.0;
    double den_k = 0.0;
    for (std::size_t j = 0; j < steps; ++j) {
      double num_j = 0.0;
      double den_j = 0.0;
      const auto col = static_cast<Eigen::Index>(k * steps + j);
      for (std::size_t i = 0; i < n; ++i) {
        num_j += std::abs(pred(static_cast<Eigen::Index>(i), col) - ref(static_cast<Eigen::Index>(i), col));
        den_j += std::abs(ref(static_cast<Eigen::Index>(i), col));
      }
      num_k += num_j / static_cast<double>(n);
      den_k += den_j / static_cast<double>(n);
    }
    num += num_k / static_cast<double>(steps);
    den += den_k / static_cast<double>(steps);
  }
  return (num / static_cast<double>(runs)) / (den / static_cast<double>(runs));
}

// -- SVR dual oracles ---------------------------------------------------------------------

inline Eigen::MatrixXd gaussian_gram(const RowMatrix& x, double sigma) {
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      k(i, j) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / (2.0 * sigma * sigma));
    }
  }
  return k;
}

inline double dual_value(const Eigen::MatrixXd& k, const Eigen::VectorXd& z, const Eigen::VectorXd& beta,
                         double eps) {
  return 0.5 * beta.dot(k * beta) - z.dot(beta) + eps * beta.cwiseAbs().sum();
}

/// Exhaustive search of the dual over the lattice {-C, -C + h, ..., C}^(m-1), the
/// last coefficient fixed by sum(beta) = 0. Feasible for m <= 4.
inline double lattice_dual_minimum(const RowMatrix& x, const Eigen::VectorXd& z, const SvrHyperparams& hp,
                                   int steps_per_side) {
  const Eigen::Index m = x.rows();
  const Eigen::MatrixXd k = gaussian_gram(x, hp.sigma);
  const double h = hp.c_reg / steps_per_side;
  const int width = 2 * steps_per_side + 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(m - 1), 0);
  Eigen::VectorXd beta(m);
  for (;;) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
      beta[i] = -hp.c_reg + h * idx[static_cast<std::size_t>(i)];
      sum += beta[i];
    }
    beta[m - 1] = -sum;
    if (std::abs(beta[m - 1]) <= hp.c_reg + 1e-12) best = std::min(best, dual_value(k, z, beta, hp.epsilon));
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == width) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  return best;
}

/// Accelerated projected gradient on the split dual (a, a*) in [0, C]^2m with
/// sum(a - a*) = 0; the projection solves for the multiplier by bisection.
inline double projected_gradient_dual_minimum(const RowMatrix& x, const Eigen::VectorXd& z,
                                              const SvrHyperparams& hp, int iterations = 200000) {
  const Eigen::Index m = x.rows();
  const Eigen::MatrixXd k = gaussian_gram(x, hp.sigma);
  const double c = hp.c_reg;
  auto project = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& as, Eigen::VectorXd& pa, Eigen::VectorXd& pas) {
    auto residual = [&](double nu) {
      return ((a.array() - nu).max(0.0).min(c) - (as.array() + nu).max(0.0).min(c)).sum();
    };
    double lo = -2.0 * c - a.cwiseAbs().maxCoeff() - as.cwiseAbs().maxCoeff() - 1.0;
    double hi = -lo;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (residual(mid) > 0.0 ? lo : hi) = mid;
    }
    const double nu = 0.5 * (lo + hi);
    pa = (a.array() - nu).max(0.0).min(c);
    pas = (as.array() + nu).max(0.0).min(c);
  };
  const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m), as = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd ya = a, yas = as;
  double t = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd kb = k * (ya - yas);
    const Eigen::VectorXd ga = kb.array() + hp.epsilon - z.array();
    const Eigen::VectorXd gas = -kb.array() + hp.epsilon + z.array();
    Eigen::VectorXd na, nas;
    project(ya - step * ga, yas - step * gas, na, nas);
    const double moved = (na - a).squaredNorm() + (nas - as).squaredNorm();
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    ya = na + ((t - 1.0) / tn) * (na - a);
    yas = nas + ((t - 1.0) / tn) * (nas - as);
    a = na;
    as = nas;
    t = tn;
    if (moved < 1e-30 * std::max(1.0, c * c)) break;
  }
  return dual_value(k, z, a - as, hp.epsilon);
}

}  // namespace rbs::test
