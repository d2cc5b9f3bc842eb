#include "rbs/svr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <unordered_map>

#include "rbs/error.hpp"

namespace rbs {

void SvrHyperparams::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(epsilon) || !ok(c_reg) || !ok(sigma)) {
    throw ArgumentError("SVR hyperparameters must be finite and positive (epsilon=" + std::to_string(epsilon) +
                        ", C=" + std::to_string(c_reg) + ", sigma=" + std::to_string(sigma) + ")");
  }
}

SvrModel SvrModel::constant(double value, Eigen::Index dims, const SvrHyperparams& hyper) {
  SvrModel m;
  m.support_inputs.resize(0, dims);
  m.dual_coefs.resize(0);
  m.bias = value;
  m.hyper = hyper;
  return m;
}

namespace {

double squared_distance(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

/// Rows of the m x m Gaussian Gram matrix with least-recently-used eviction.
class KernelCache {
public:
  KernelCache(const RowMatrix& x, double gamma, std::size_t capacity)
      : x_(x), gamma_(gamma), capacity_(std::max<std::size_t>(capacity, 2)) {}

  const std::vector<double>& row(Eigen::Index i) {
    if (auto it = rows_.find(i); it != rows_.end()) {
      order_.splice(order_.begin(), order_, it->second.second);
      return it->second.first;
    }
    if (rows_.size() >= capacity_) {
      rows_.erase(order_.back());
      order_.pop_back();
    }
    std::vector<double> values(static_cast<std::size_t>(x_.rows()));
    const double* xi = x_.row(i).data();
    for (Eigen::Index j = 0; j < x_.rows(); ++j) {
      values[static_cast<std::size_t>(j)] = std::exp(-gamma_ * squared_distance(xi, x_.row(j).data(), x_.cols()));
    }
    order_.push_front(i);
    auto [it, inserted] = rows_.emplace(i, std::pair{std::move(values), order_.begin()});
    return it->second.first;
  }

private:
  const RowMatrix& x_;
  double gamma_;
  std::size_t capacity_;
  std::list<Eigen::Index> order_;
  std::unordered_map<Eigen::Index, std::pair<std::vector<double>, std::list<Eigen::Index>::iterator>> rows_;
};

void check_training_inputs(const RowMatrix& inputs, std::span<const double> targets) {
  if (inputs.rows() < 1) throw ArgumentError("SVR training needs at least one sample");
  if (static_cast<Eigen::Index>(targets.size()) != inputs.rows()) {
    throw DimensionError("SVR training: " + std::to_string(inputs.rows()) + " inputs but " +
                         std::to_string(targets.size()) + " targets");
  }
  if (!inputs.allFinite()) throw NumericError("SVR training inputs contain non-finite values");
  for (double z : targets) {
    if (!std::isfinite(z)) throw NumericError("SVR training targets contain non-finite values");
  }
}

}  // namespace

double kernel(std::span<const double> a, std::span<const double> b, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("kernel width must be positive");
  if (a.size() != b.size()) throw DimensionError("kernel arguments differ in length");
  const double d2 = squared_distance(a.data(), b.data(), static_cast<Eigen::Index>(a.size()));
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

SvrTraining train_svr_detailed(const RowMatrix& inputs, std::span<const double> targets,
                               const SvrHyperparams& hyper, const SmoOptions& opts) {
  hyper.validate();
  check_training_inputs(inputs, targets);
  if (!(opts.tol > 0.0)) throw ArgumentError("SMO tolerance must be positive");

  // Variables 0..m-1 are alpha_i (y = +1), m..2m-1 are alpha_i^* (y = -1).
  const Eigen::Index m = inputs.rows();
  const Eigen::Index l = 2 * m;
  const double c = hyper.c_reg;
  const double gamma = 1.0 / (2.0 * hyper.sigma * hyper.sigma);
  constexpr double kTau = 1e-12;

  auto sign = [m](Eigen::Index t) { return t < m ? 1.0 : -1.0; };
  auto base = [m](Eigen::Index t) { return t < m ? t : t - m; };

  std::vector<double> alpha(static_cast<std::size_t>(l), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(l));
  for (Eigen::Index t = 0; t < m; ++t) {
    grad[static_cast<std::size_t>(t)] = hyper.epsilon - targets[static_cast<std::size_t>(t)];
    grad[static_cast<std::size_t>(t + m)] = hyper.epsilon + targets[static_cast<std::size_t>(t)];
  }
  auto in_up = [&](Eigen::Index t) {
    const double a = alpha[static_cast<std::size_t>(t)];
    return t < m ? a < c : a > 0.0;
  };
  auto in_low = [&](Eigen::Index t) {
    const double a = alpha[static_cast<std::size_t>(t)];
    return t < m ? a > 0.0 : a < c;
  };

  KernelCache cache(inputs, gamma, opts.cache_rows);
  SvrTraining out;
  double violation = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  for (;; ++iter) {
    // First index: maximal violator. Second index: largest second-order decrease among the
    // indices that violate against it. The stopping test uses the maximal violating pair.
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < l; ++t) {
      const double v = -sign(t) * grad[static_cast<std::size_t>(t)];
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) g_min = v;
    }
    violation = g_max - g_min;
    if (i < 0 || !(violation >= opts.tol)) break;
    if (iter >= opts.max_iter) {
      throw ConvergenceError("SMO did not converge in " + std::to_string(opts.max_iter) +
                                 " pair updates (KKT violation " + std::to_string(violation) + ")",
                             violation);
    }
    Eigen::Index j = -1;
    {
      const auto& ki_sel = cache.row(base(i));
      double best_gain = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < l; ++t) {
        if (!in_low(t)) continue;
        const double b = g_max + sign(t) * grad[static_cast<std::size_t>(t)];
        if (b <= 0.0) continue;
        double a = 2.0 - 2.0 * ki_sel[static_cast<std::size_t>(base(t))];
        if (a <= 0.0) a = kTau;
        const double gain = -(b * b) / a;
        if (gain < best_gain) {
          best_gain = gain;
          j = t;
        }
      }
    }
    if (j < 0) break;

    const auto& ki = cache.row(base(i));
    const auto& kj_row = cache.row(base(j));
    // The second lookup may evict the first only when capacity < 2, which the cache forbids.
    const double yi = sign(i);
    const double yj = sign(j);
    const double kij = ki[static_cast<std::size_t>(base(j))];
    double& ai = alpha[static_cast<std::size_t>(i)];
    double& aj = alpha[static_cast<std::size_t>(j)];
    const double old_ai = ai;
    const double old_aj = aj;
    const double gi = grad[static_cast<std::size_t>(i)];
    const double gj = grad[static_cast<std::size_t>(j)];

    if (yi != yj) {
      double quad = 2.0 - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-gi - gj) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > c) {
          ai = c;
          aj = c - diff;
        }
      } else if (aj > c) {
        aj = c;
        ai = c + diff;
      }
    } else {
      double quad = 2.0 - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (gi - gj) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) {
          ai = c;
          aj = sum - c;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > c) {
        if (aj > c) {
          aj = c;
          ai = sum - c;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }

    const double dai = ai - old_ai;
    const double daj = aj - old_aj;
    for (Eigen::Index t = 0; t < l; ++t) {
      const auto bt = static_cast<std::size_t>(base(t));
      grad[static_cast<std::size_t>(t)] += sign(t) * (yi * ki[bt] * dai + yj * kj_row[bt] * daj);
    }
  }

  // Offset: average of y_t * grad_t over free variables, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t n_free = 0;
  for (Eigen::Index t = 0; t < l; ++t) {
    const double a = alpha[static_cast<std::size_t>(t)];
    const double y = sign(t);
    const double yg = y * grad[static_cast<std::size_t>(t)];
    if (a >= c) {
      if (y < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a <= 0.0) {
      if (y > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : 0.5 * (ub + lb);

  out.beta.resize(m);
  Eigen::Index n_sv = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    out.beta[t] = alpha[static_cast<std::size_t>(t)] - alpha[static_cast<std::size_t>(t + m)];
    if (out.beta[t] != 0.0) ++n_sv;
  }
  out.model.hyper = hyper;
  out.model.bias = -rho;
  out.model.support_inputs.resize(n_sv, inputs.cols());
  out.model.dual_coefs.resize(n_sv);
  for (Eigen::Index t = 0, s = 0; t < m; ++t) {
    if (out.beta[t] == 0.0) continue;
    out.model.support_inputs.row(s) = inputs.row(t);
    out.model.dual_coefs[s] = out.beta[t];
    ++s;
  }
  out.iterations = iter;
  out.violation = violation;
  return out;
}

SvrModel train_svr(const RowMatrix& inputs, std::span<const double> targets, const SvrHyperparams& hyper,
                   const SmoOptions& opts) {
  return train_svr_detailed(inputs, targets, hyper, opts).model;
}

double predict(const SvrModel& model, std::span<const double> input) {
  const Eigen::Index d = model.support_inputs.cols();
  if (static_cast<Eigen::Index>(input.size()) != d) {
    throw DimensionError("SVR input has " + std::to_string(input.size()) + " components, model expects " +
                         std::to_string(d));
  }
  const double gamma = 1.0 / (2.0 * model.hyper.sigma * model.hyper.sigma);
  double f = 0.0;
  for (Eigen::Index s = 0; s < model.support_count(); ++s) {
    f += model.dual_coefs[s] * std::exp(-gamma * squared_distance(model.support_inputs.row(s).data(), input.data(), d));
  }
  return f + model.bias;
}

double validation_rmse(const SvrModel& model, const RowMatrix& inputs, std::span<const double> targets) {
  if (inputs.rows() == 0) throw ArgumentError("validation set is empty");
  if (static_cast<Eigen::Index>(targets.size()) != inputs.rows()) {
    throw DimensionError("validation inputs and targets differ in length");
  }
  double sum = 0.0;
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    const double r = targets[static_cast<std::size_t>(t)] -
                     predict(model, {inputs.row(t).data(), static_cast<std::size_t>(inputs.cols())});
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(inputs.rows()));
}

double dual_objective(const RowMatrix& inputs, std::span<const double> targets, std::span<const double> beta,
                      const SvrHyperparams& hyper) {
  const Eigen::Index m = inputs.rows();
  if (static_cast<Eigen::Index>(beta.size()) != m || static_cast<Eigen::Index>(targets.size()) != m) {
    throw DimensionError("dual objective: inconsistent sizes");
  }
  const double gamma = 1.0 / (2.0 * hyper.sigma * hyper.sigma);
  double quad = 0.0;
  double lin = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double bi = beta[static_cast<std::size_t>(i)];
    lin += -targets[static_cast<std::size_t>(i)] * bi + hyper.epsilon * std::abs(bi);
    for (Eigen::Index j = 0; j < m; ++j) {
      quad += bi * beta[static_cast<std::size_t>(j)] *
              std::exp(-gamma * squared_distance(inputs.row(i).data(), inputs.row(j).data(), inputs.cols()));
    }
  }
  return 0.5 * quad + lin;
}

KktReport audit_kkt(const SvrModel& model, const RowMatrix& inputs, std::span<const double> targets,
                    std::span<const double> beta, double tol) {
  const Eigen::Index m = inputs.rows();
  if (static_cast<Eigen::Index>(beta.size()) != m || static_cast<Eigen::Index>(targets.size()) != m) {
    throw DimensionError("KKT audit: inconsistent sizes");
  }
  const double c = model.hyper.c_reg;
  const double eps = model.hyper.epsilon;
  // Slack for rounding in the box tests.
  const double box_slack = 1e-12 * std::max(1.0, c);
  KktReport report;
  for (Eigen::Index t = 0; t < m; ++t) {
    const double b = beta[static_cast<std::size_t>(t)];
    report.dual_sum += b;
    const double r =
        targets[static_cast<std::size_t>(t)] - predict(model, {inputs.row(t).data(), static_cast<std::size_t>(inputs.cols())});
    double v = 0.0;
    if (std::abs(b) > c + box_slack) v = std::max(v, std::abs(b) - c);
    // Outside the tube: the coefficient must sit at the bound of matching sign.
    if (r > eps && b < c - box_slack) v = std::max(v, r - eps);
    if (r < -eps && b > -c + box_slack) v = std::max(v, -r - eps);
    // Strictly inside the tube: the coefficient must vanish.
    if (b > 0.0 && r < eps) v = std::max(v, eps - r);
    if (b < 0.0 && r > -eps) v = std::max(v, r + eps);
    if (v > report.max_violation) report.max_violation = v;
    if (v > tol) report.violating_points.push_back(static_cast<std::size_t>(t));
  }
  report.max_violation = std::max(report.max_violation, std::abs(report.dual_sum));
  return report;
}

}  // namespace rbs
