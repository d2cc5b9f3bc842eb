#include "rbs/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "rbs/error.hpp"

namespace rbs {

void SearchSpace::validate() const {
  if (dims.empty()) throw ArgumentError("search space has no dimensions");
  for (const auto& d : dims) {
    if (!(d.lo > 0.0) || !(d.lo < d.hi) || !std::isfinite(d.hi)) {
      throw ArgumentError("dimension " + d.name + " needs 0 < lo < hi, got [" + std::to_string(d.lo) + ", " +
                          std::to_string(d.hi) + "]");
    }
  }
}

bool SearchSpace::contains(const std::vector<double>& x) const {
  if (x.size() != dims.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= dims[i].lo && x[i] <= dims[i].hi)) return false;
  }
  return true;
}

SearchSpace svr_search_space(std::size_t modes, const SvrSearchRanges& ranges) {
  SearchSpace space;
  for (std::size_t k = 1; k <= modes; ++k) {
    const std::string suffix = "_" + std::to_string(k);
    space.dims.push_back({ranges.epsilon.name + suffix, ranges.epsilon.lo, ranges.epsilon.hi});
    space.dims.push_back({ranges.c_reg.name + suffix, ranges.c_reg.lo, ranges.c_reg.hi});
    space.dims.push_back({ranges.sigma.name + suffix, ranges.sigma.lo, ranges.sigma.hi});
  }
  return space;
}

SvrHyperparams mode_hyperparams(const std::vector<double>& params, std::size_t k) {
  if (params.size() < 3 * (k + 1)) throw DimensionError("parameter vector too short for mode " + std::to_string(k));
  return {params[3 * k], params[3 * k + 1], params[3 * k + 2]};
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Truncated Gaussian mixture over [lo, hi] in log space.
class ParzenEstimator {
public:
  ParzenEstimator(std::vector<double> points, double lo, double hi, double floor_fraction) : lo_(lo), hi_(hi) {
    const double range = hi - lo;
    // Bandwidths never drop below range / min(100, 1 + n), the usual TPE clip.
    const double clip = 1.0 / std::min(100.0, 1.0 + static_cast<double>(points.size()));
    const double floor = std::max(floor_fraction, clip) * range;
    std::sort(points.begin(), points.end());
    // Bandwidth is the wider of the gaps to the neighbouring points; the outermost
    // points only see their inner neighbour, and a lone point gets the full range.
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double left = i == 0 ? 0.0 : points[i] - points[i - 1];
      const double right = i + 1 == points.size() ? 0.0 : points[i + 1] - points[i];
      const double spacing = points.size() == 1 ? range : std::max(left, right);
      add(points[i], std::clamp(spacing, floor, range));
    }
    // Broad prior so neither density vanishes anywhere in the box.
    add(0.5 * (lo + hi), range);
  }

  double log_pdf(double u) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_.size(); ++i) {
      const double z = (u - mu_[i]) / sd_[i];
      sum += std::exp(-0.5 * z * z) / (sd_[i] * mass_[i]);
    }
    return std::log(sum / (std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(mu_.size())));
  }

  double sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, mu_.size() - 1);
    const std::size_t i = pick(rng);
    std::normal_distribution<double> normal(mu_[i], sd_[i]);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double u = normal(rng);
      if (u >= lo_ && u <= hi_) return u;
    }
    return std::clamp(mu_[i], lo_, hi_);
  }

private:
  void add(double mu, double sd) {
    mu_.push_back(mu);
    sd_.push_back(sd);
    const double mass = normal_cdf((hi_ - mu) / sd) - normal_cdf((lo_ - mu) / sd);
    mass_.push_back(std::max(mass, 1e-300));
  }

  double lo_;
  double hi_;
  std::vector<double> mu_;
  std::vector<double> sd_;
  std::vector<double> mass_;
};

std::vector<double> random_point(const SearchSpace& space, std::mt19937_64& rng) {
  std::vector<double> x(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double a = std::log(space.dims[i].lo);
    const double b = std::log(space.dims[i].hi);
    x[i] = std::clamp(std::exp(std::uniform_real_distribution<double>(a, b)(rng)), space.dims[i].lo, space.dims[i].hi);
  }
  return x;
}

/// Fills dims [begin, end) of `out` by TPE, ranking trials by `score`.
void suggest_block(const std::vector<const Trial*>& completed, const SearchSpace& space, std::size_t begin,
                   std::size_t end, const std::function<double(const Trial&)>& score, std::mt19937_64& rng,
                   const TpeOptions& opts, std::vector<double>& out) {
  std::vector<const Trial*> ranked = completed;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](const Trial* a, const Trial* b) { return score(*a) < score(*b); });
  const auto n = ranked.size();
  const std::size_t n_good =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(opts.gamma * static_cast<double>(n))), 1, n);

  std::vector<ParzenEstimator> good;
  std::vector<ParzenEstimator> bad;
  for (std::size_t d = begin; d < end; ++d) {
    const double lo = std::log(space.dims[d].lo);
    const double hi = std::log(space.dims[d].hi);
    std::vector<double> g;
    std::vector<double> b;
    for (std::size_t i = 0; i < n; ++i) (i < n_good ? g : b).push_back(std::log(ranked[i]->params[d]));
    good.emplace_back(std::move(g), lo, hi, opts.bandwidth_floor);
    bad.emplace_back(std::move(b), lo, hi, opts.bandwidth_floor);
  }

  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> best(end - begin);
  std::vector<double> cand(end - begin);
  for (std::size_t c = 0; c < std::max<std::size_t>(opts.n_candidates, 1); ++c) {
    double s = 0.0;
    for (std::size_t d = 0; d < cand.size(); ++d) {
      cand[d] = good[d].sample(rng);
      s += good[d].log_pdf(cand[d]) - bad[d].log_pdf(cand[d]);
    }
    if (s > best_score) {
      best_score = s;
      best = cand;
    }
  }
  for (std::size_t d = begin; d < end; ++d) {
    out[d] = std::clamp(std::exp(best[d - begin]), space.dims[d].lo, space.dims[d].hi);
  }
}

std::vector<const Trial*> completed_trials(const std::vector<Trial>& history) {
  std::vector<const Trial*> out;
  for (const auto& t : history) {
    if (t.status == TrialStatus::Completed) out.push_back(&t);
  }
  return out;
}

std::vector<double> suggest(const std::vector<Trial>& history, const SearchSpace& space, std::mt19937_64& rng,
                            const TpeOptions& opts, TuneMode mode, std::size_t block_size) {
  space.validate();
  const auto completed = completed_trials(history);
  if (completed.size() < std::max<std::size_t>(opts.n_startup, 1)) return random_point(space, rng);

  std::vector<double> out(space.size());
  if (mode == TuneMode::Joint) {
    suggest_block(completed, space, 0, space.size(), [](const Trial& t) { return t.objective; }, rng, opts, out);
    return out;
  }
  const std::size_t bs = std::max<std::size_t>(block_size, 1);
  for (std::size_t begin = 0; begin < space.size(); begin += bs) {
    const std::size_t k = begin / bs;
    const std::size_t end = std::min(space.size(), begin + bs);
    suggest_block(
        completed, space, begin, end,
        [k](const Trial& t) { return k < t.per_mode_errors.size() ? t.per_mode_errors[k] : t.objective; }, rng, opts,
        out);
  }
  return out;
}

}  // namespace

std::vector<double> tpe_suggest(const std::vector<Trial>& history, const SearchSpace& space, std::mt19937_64& rng,
                                const TpeOptions& opts) {
  return suggest(history, space, rng, opts, TuneMode::Joint, 3);
}

TuneResult tune(const Objective& objective, const SearchSpace& space, const TuneOptions& opts) {
  space.validate();
  if (opts.n_trials < 1) throw ArgumentError("need at least one trial");
  std::mt19937_64 rng(opts.seed);
  TuneResult result;
  result.history.reserve(opts.n_trials);
  for (std::size_t i = 0; i < opts.n_trials; ++i) {
    const auto params = suggest(result.history, space, rng, opts.tpe, opts.mode, opts.block_size);
    Trial trial;
    try {
      trial = objective(params);
    } catch (const TrialFailure& f) {
      trial.status = TrialStatus::Failed;
      trial.failed_mode = f.mode;
      trial.message = f.message;
      trial.objective = std::numeric_limits<double>::infinity();
    }
    trial.params = params;
    result.history.push_back(std::move(trial));
  }

  const auto completed = completed_trials(result.history);
  if (completed.empty()) {
    throw TuningFailedError("all " + std::to_string(opts.n_trials) + " trials failed; last: " +
                            result.history.back().message);
  }

  if (opts.mode == TuneMode::Joint) {
    const Trial* best = completed.front();
    for (const Trial* t : completed) {
      if (t->objective < best->objective) best = t;
    }
    result.best = *best;
  } else {
    // Per block, keep the parameters of the trial with the lowest e_k, then evaluate the combination.
    std::vector<double> combined(space.size());
    const std::size_t bs = std::max<std::size_t>(opts.block_size, 1);
    for (std::size_t begin = 0; begin < space.size(); begin += bs) {
      const std::size_t k = begin / bs;
      auto err = [k](const Trial* t) { return k < t->per_mode_errors.size() ? t->per_mode_errors[k] : t->objective; };
      const Trial* best = completed.front();
      for (const Trial* t : completed) {
        if (err(t) < err(best)) best = t;
      }
      for (std::size_t d = begin; d < std::min(space.size(), begin + bs); ++d) combined[d] = best->params[d];
    }
    try {
      result.best = objective(combined);
      result.best.params = combined;
    } catch (const TrialFailure& f) {
      throw TuningFailedError("combined per-mode parameters failed on mode " + std::to_string(f.mode) + ": " +
                              f.message);
    }
  }
  result.best_params = result.best.params;
  return result;
}

std::vector<SvrModel> train_modes(const ModeDataset& data, const std::vector<double>& params, const SmoOptions& smo) {
  const std::size_t r = data.modes();
  if (params.size() != 3 * r) {
    throw DimensionError("expected " + std::to_string(3 * r) + " hyperparameters, got " + std::to_string(params.size()));
  }
  std::vector<SvrModel> models(r);
  std::vector<std::string> errors(r);
  std::vector<char> failed(r, 0);
  std::vector<double> violation(r, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < r; ++k) {
    const SvrHyperparams hyper = mode_hyperparams(params, k);
    if (!data.constant_mode.empty() && data.constant_mode[k]) {
      models[k] = SvrModel::constant(0.0, data.train_inputs.cols(), hyper);
      continue;
    }
    try {
      models[k] = train_svr(data.train_inputs, data.train_targets[k], hyper, smo);
    } catch (const std::exception& e) {
      failed[k] = 1;
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < r; ++k) {
    if (failed[k]) throw TrialFailure{k, "mode " + std::to_string(k + 1) + ": " + errors[k]};
  }
  return models;
}

Trial objective_worst_error(const ModeDataset& data, const std::vector<double>& params, const SmoOptions& smo) {
  const auto models = train_modes(data, params, smo);
  Trial trial;
  trial.params = params;
  trial.per_mode_errors.resize(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    trial.per_mode_errors[k] = validation_rmse(models[k], data.val_inputs, data.val_targets[k]);
  }
  trial.objective = *std::max_element(trial.per_mode_errors.begin(), trial.per_mode_errors.end());
  return trial;
}

nlohmann::json trial_to_json(const Trial& trial, std::size_t index, const SearchSpace& space) {
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t d = 0; d < trial.params.size() && d < space.size(); ++d) params[space.dims[d].name] = trial.params[d];
  nlohmann::json j = {
      {"index", index},
      {"params", params},
      {"per_mode_errors", trial.per_mode_errors},
      {"status", trial.status == TrialStatus::Completed ? "completed" : "failed"},
  };
  if (trial.status == TrialStatus::Completed) {
    j["objective"] = trial.objective;
  } else {
    j["objective"] = nullptr;
    if (trial.failed_mode) j["failed_mode"] = *trial.failed_mode + 1;
    j["message"] = trial.message;
  }
  return j;
}

std::string history_to_jsonl(const std::vector<Trial>& history, const SearchSpace& space) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    out += trial_to_json(history[i], i, space).dump();
    out += '\n';
  }
  return out;
}

}  // namespace rbs
