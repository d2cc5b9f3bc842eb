#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "rbs/svr.hpp"

namespace rbs {

/// One log-uniform search dimension.
struct SearchDim {
  std::string name;
  double lo = 1.0;
  double hi = 10.0;
};

struct SearchSpace {
  std::vector<SearchDim> dims;

  void validate() const;
  std::size_t size() const noexcept { return dims.size(); }
  bool contains(const std::vector<double>& x) const;
};

struct SvrSearchRanges {
  SearchDim epsilon{"epsilon", 1e-4, 1.0};
  SearchDim c_reg{"c_reg", 1e-2, 1e4};
  SearchDim sigma{"sigma", 1e-2, 1e2};
};

/// 3r dimensions ordered (epsilon_k, c_reg_k, sigma_k) for k = 1..r.
SearchSpace svr_search_space(std::size_t modes, const SvrSearchRanges& ranges = {});

/// Hyperparameters of mode k read from a 3r parameter vector.
SvrHyperparams mode_hyperparams(const std::vector<double>& params, std::size_t k);

enum class TrialStatus { Completed, Failed };

struct Trial {
  std::vector<double> params;
  double objective = 0.0;
  std::vector<double> per_mode_errors;
  TrialStatus status = TrialStatus::Completed;
  /// Mode whose training failed, for failed trials.
  std::optional<std::size_t> failed_mode;
  std::string message;
};

/// Thrown by an objective to mark the trial failed.
struct TrialFailure {
  std::size_t mode;
  std::string message;
};

struct TpeOptions {
  std::size_t n_startup = 10;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
  /// Minimum Parzen bandwidth as a fraction of each dimension's log-range.
  double bandwidth_floor = 0.01;
};

/// Next point to evaluate. Random log-uniform until `n_startup` completed
/// trials exist, then the candidate maximizing l(x) / g(x).
std::vector<double> tpe_suggest(const std::vector<Trial>& history, const SearchSpace& space, std::mt19937_64& rng,
                                const TpeOptions& opts = {});

enum class TuneMode {
  Joint,        ///< one TPE over all 3r dimensions, objective max_k e_k
  Independent,  ///< per-mode TPE blocks, each ranked by its own e_k
};

struct TuneOptions {
  std::size_t n_trials = 50;
  std::uint64_t seed = 0;
  TpeOptions tpe;
  TuneMode mode = TuneMode::Joint;
  /// Dimensions per independent block (3 for SVR hyperparameters).
  std::size_t block_size = 3;
};

struct TuneResult {
  std::vector<double> best_params;
  Trial best;
  std::vector<Trial> history;
};

/// Evaluates a parameter vector into (objective, per-mode errors).
using Objective = std::function<Trial(const std::vector<double>& params)>;

TuneResult tune(const Objective& objective, const SearchSpace& space, const TuneOptions& opts);

/// Training and validation sets for the r coefficient regressors, already standardized.
struct ModeDataset {
  RowMatrix train_inputs;
  std::vector<std::vector<double>> train_targets;  ///< r vectors
  RowMatrix val_inputs;
  std::vector<std::vector<double>> val_targets;
  /// Modes served by a constant predictor; their SVR is not trained.
  std::vector<bool> constant_mode;

  std::size_t modes() const noexcept { return train_targets.size(); }
};

/// Trains r SVRs with the given 3r hyperparameters; e = max_k e_k.
Trial objective_worst_error(const ModeDataset& data, const std::vector<double>& params, const SmoOptions& smo = {});

/// Trains the r SVRs of a parameter vector.
std::vector<SvrModel> train_modes(const ModeDataset& data, const std::vector<double>& params, const SmoOptions& smo = {});

nlohmann::json trial_to_json(const Trial& trial, std::size_t index, const SearchSpace& space);
/// One JSON object per line.
std::string history_to_jsonl(const std::vector<Trial>& history, const SearchSpace& space);

}  // namespace rbs
