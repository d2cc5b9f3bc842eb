#include "rbs/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <thread>

#include "CLI11.hpp"

#include "rbs/binary_io.hpp"
#include "rbs/dataset.hpp"
#include "rbs/error.hpp"
#include "rbs/evaluate.hpp"
#include "rbs/pipeline.hpp"
#include "rbs/server.hpp"

namespace rbs::cli {

namespace {

using json = nlohmann::json;

/// Bad flag values or unusable output paths.
class UsageError : public Error {
public:
  using Error::Error;
};

/// Unreadable or inconsistent dataset and model files.
class DataError : public Error {
public:
  using Error::Error;
};

/// Listening address unavailable.
class BindError : public Error {
public:
  using Error::Error;
};

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed, const char* what) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cout << what << " seed (drawn): " << s << "\n";
  return s;
}

std::vector<SimulationRun> read_dataset(const std::string& path) {
  try {
    return load_dataset(path);
  } catch (const Error& e) {
    throw DataError("dataset " + path + ": " + e.what());
  }
}

SurrogateModel read_model(const std::string& path) {
  try {
    return load_model(path);
  } catch (const Error& e) {
    throw DataError("model " + path + ": " + e.what());
  }
}

template <class F>
void write_output(const std::string& path, F&& write) {
  try {
    write();
  } catch (const IoError& e) {
    throw UsageError("cannot write output " + path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  write_output(path, [&] {
    io::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  });
}

Interval to_interval(const std::vector<double>& v, const char* flag) {
  if (v.size() != 2) throw UsageError(std::string(flag) + " expects lo,hi");
  return {v[0], v[1]};
}

std::string utc_from_epoch(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// -- generate ---------------------------------------------------------------------------

struct GenerateArgs {
  SyntheticConfig cfg;
  std::optional<std::uint64_t> seed;
  std::vector<double> current{1.0, 2.0};
  std::vector<double> alpha{0.5, 1.5};
  std::vector<double> beta{0.5, 1.5};
  bool no_cos = false;
  std::string output;
};

void add_generate(CLI::App& app, GenerateArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("generate", "Write a synthetic rank-2 dataset");
  cmd->add_option("--grid", a.cfg.grid_side, "Grid side G (n = G^2 cells)")->capture_default_str();
  cmd->add_option("--steps", a.cfg.steps, "Time steps per run")->capture_default_str();
  cmd->add_option("--runs", a.cfg.runs, "Number of runs")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Sampling seed (drawn from entropy when omitted)");
  cmd->add_option("--current", a.current, "Range of I as lo,hi")->expected(2)->delimiter(',')->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "Range of alpha as lo,hi")->expected(2)->delimiter(',')->capture_default_str();
  cmd->add_option("--beta", a.beta, "Range of beta as lo,hi")->expected(2)->delimiter(',')->capture_default_str();
  cmd->add_option("--mu0", a.cfg.mu0, "Permeability offset")->capture_default_str();
  cmd->add_flag("--no-cos", a.no_cos, "Drop the cosine term (rank-1 family)");
  cmd->add_option("-o,--output", a.output, "Dataset file")->required();
  cmd->callback([&] {
    action = [&a] {
      a.cfg.current = to_interval(a.current, "--current");
      a.cfg.alpha = to_interval(a.alpha, "--alpha");
      a.cfg.beta = to_interval(a.beta, "--beta");
      a.cfg.cos_term = !a.no_cos;
      a.cfg.seed = resolve_seed(a.seed, "generator");
      try {
        a.cfg.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const auto runs = generate_synthetic(a.cfg);
      write_output(a.output, [&] { save_dataset(runs, a.output); });
      const json meta = {
          {"grid_side", a.cfg.grid_side},
          {"parameter_names", synthetic_parameter_names()},
          {"provenance", "synthetic"},
          {"generator",
           {{"grid_side", a.cfg.grid_side},
            {"steps", a.cfg.steps},
            {"runs", a.cfg.runs},
            {"seed", a.cfg.seed},
            {"current", {a.cfg.current.lo, a.cfg.current.hi}},
            {"alpha", {a.cfg.alpha.lo, a.cfg.alpha.hi}},
            {"beta", {a.cfg.beta.lo, a.cfg.beta.hi}},
            {"mu0", a.cfg.mu0},
            {"cos_term", a.cfg.cos_term}}}};
      write_output(dataset_meta_path(a.output), [&] { save_dataset_meta(a.output, meta); });
      std::cout << "N " << runs.size() << "\nT " << a.cfg.steps << "\nn " << a.cfg.grid_side * a.cfg.grid_side
                << "\nseed " << a.cfg.seed << "\nwrote " << a.output << "\n";
      return kExitOk;
    };
  });
}

// -- fit --------------------------------------------------------------------------------

struct FitArgs {
  std::string dataset;
  std::string output;
  std::string history;
  FitConfig cfg;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> tuner_seed;
  std::string tune_mode = "joint";
  std::string svd = "auto";
  std::vector<double> eps_range{1e-4, 1.0};
  std::vector<double> c_range{1e-2, 1e4};
  std::vector<double> sigma_range{1e-2, 1e2};
  std::optional<std::string> timestamp;
};

void add_fit(CLI::App& app, FitArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("fit", "Fit a surrogate model to a dataset");
  cmd->add_option("dataset", a.dataset, "Dataset file (RBSD)")->required();
  cmd->add_option("-o,--output", a.output, "Model file (RBSM)")->required();
  cmd->add_option("--history", a.history, "Tuning history JSONL (default <model>.history.jsonl)");
  cmd->add_option("--energy", a.cfg.energy_threshold, "Accumulated energy threshold")->capture_default_str();
  cmd->add_option("--val-fraction", a.cfg.val_fraction, "Fraction of runs held out")->capture_default_str();
  cmd->add_option("--split-seed", a.split_seed, "Run split seed (drawn when omitted)");
  cmd->add_option("--trials", a.cfg.tuner.n_trials, "Tuner budget")->capture_default_str();
  cmd->add_option("--seed", a.tuner_seed, "Tuner seed (drawn when omitted)");
  cmd->add_option("--tune-mode", a.tune_mode, "joint or independent")
      ->check(CLI::IsMember({"joint", "independent"}))
      ->capture_default_str();
  cmd->add_option("--startup", a.cfg.tuner.tpe.n_startup, "Random trials before TPE")->capture_default_str();
  cmd->add_option("--gamma", a.cfg.tuner.tpe.gamma, "TPE good-set quantile")->capture_default_str();
  cmd->add_option("--candidates", a.cfg.tuner.tpe.n_candidates, "TPE candidates per suggestion")
      ->capture_default_str();
  cmd->add_option("--epsilon-range", a.eps_range, "epsilon search range lo,hi")->expected(2)->delimiter(',');
  cmd->add_option("--c-range", a.c_range, "C search range lo,hi")->expected(2)->delimiter(',');
  cmd->add_option("--sigma-range", a.sigma_range, "sigma search range lo,hi")->expected(2)->delimiter(',');
  cmd->add_option("--tol", a.cfg.smo.tol, "SMO KKT tolerance")->capture_default_str();
  cmd->add_option("--max-iter", a.cfg.smo.max_iter, "SMO pair-update cap")->capture_default_str();
  cmd->add_option("--svd", a.svd, "auto, snapshots or dense")
      ->check(CLI::IsMember({"auto", "snapshots", "dense"}))
      ->capture_default_str();
  cmd->add_option("--timestamp", a.timestamp, "Creation time written to the model (default: now or SOURCE_DATE_EPOCH)");
  cmd->callback([&] {
    action = [&a] {
      a.cfg.tuner.mode = a.tune_mode == "joint" ? TuneMode::Joint : TuneMode::Independent;
      a.cfg.svd_method = a.svd == "dense" ? SvdMethod::Dense : a.svd == "snapshots" ? SvdMethod::Snapshots : SvdMethod::Auto;
      a.cfg.ranges.epsilon = {"epsilon", a.eps_range[0], a.eps_range[1]};
      a.cfg.ranges.c_reg = {"c_reg", a.c_range[0], a.c_range[1]};
      a.cfg.ranges.sigma = {"sigma", a.sigma_range[0], a.sigma_range[1]};
      if (a.timestamp) {
        a.cfg.created = *a.timestamp;
      } else if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde != nullptr && *sde != '\0') {
        a.cfg.created = utc_from_epoch(static_cast<std::time_t>(std::strtoll(sde, nullptr, 10)));
      }
      try {
        a.cfg.validate();
        svr_search_space(1, a.cfg.ranges).validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      a.cfg.split_seed = resolve_seed(a.split_seed, "split");
      a.cfg.tuner.seed = resolve_seed(a.tuner_seed, "tuner");

      const auto runs = read_dataset(a.dataset);
      const json dataset_meta = load_dataset_meta(a.dataset);
      const auto start = std::chrono::steady_clock::now();
      const FitResult res = fit(runs, a.cfg, dataset_meta);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto report = evaluate_runs(res.model, runs, res.split.val_runs);

      write_output(a.output, [&] { save_model(res.model, a.output); });
      const std::string history = a.history.empty() ? a.output + ".history.jsonl" : a.history;
      write_text(history, history_to_jsonl(res.tuning.history, res.space));

      const auto& m = res.model.meta;
      std::cout << "r " << res.model.rank() << "\nenergy " << shortest(m.energy_at_rank) << "\ne "
                << shortest(m.objective) << "\n";
      for (std::size_t k = 0; k < m.mode_errors.size(); ++k) {
        std::cout << "e_" << k + 1 << " " << shortest(m.mode_errors[k]) << "\n";
      }
      std::cout << "trials " << res.tuning.history.size() << "\nval_delta_rmse_sqrt "
                << shortest(report.raw.delta_rmse_sqrt) << "\nseconds " << fixed2(seconds) << "\nwrote "
                << a.output << "\nwrote " << history << "\n";
      return kExitOk;
    };
  });
}

// -- eval -------------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string report;
  std::optional<std::uint64_t> split_seed;
  std::optional<double> val_fraction;
  bool all_runs = false;
};

std::vector<std::size_t> recorded_val_runs(const SurrogateModel& model) {
  const auto& extra = model.meta.extra;
  if (!extra.contains("split") || !extra["split"].contains("val_runs")) {
    throw DataError("model has no recorded split; pass --split-seed or --all-runs");
  }
  return extra["split"]["val_runs"].get<std::vector<std::size_t>>();
}

void add_eval(CLI::App& app, EvalArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("eval", "Evaluate a model: relative errors and the per-cell bound");
  cmd->add_option("model", a.model, "Model file (RBSM)")->required();
  cmd->add_option("dataset", a.dataset, "Dataset file (RBSD)")->required();
  cmd->add_option("--report", a.report, "JSON report (default <model>.eval.json)");
  cmd->add_option("--split-seed", a.split_seed, "Recompute the run split with this seed");
  cmd->add_option("--val-fraction", a.val_fraction, "Validation fraction for --split-seed");
  cmd->add_flag("--all-runs", a.all_runs, "Evaluate on every run");
  cmd->callback([&] {
    action = [&a] {
      if (a.all_runs && a.split_seed) throw UsageError("--all-runs and --split-seed are exclusive");
      const SurrogateModel model = read_model(a.model);
      const auto runs = read_dataset(a.dataset);
      if (runs.front().cells() != static_cast<std::size_t>(model.cells())) {
        throw DataError("dataset " + a.dataset + " has " + std::to_string(runs.front().cells()) +
                        " cells, model has " + std::to_string(model.cells()));
      }
      std::vector<std::size_t> which;
      std::string scope;
      if (a.all_runs) {
        for (std::size_t k = 0; k < runs.size(); ++k) which.push_back(k);
        scope = "all runs";
      } else if (a.split_seed) {
        double f = a.val_fraction.value_or(0.2);
        if (!a.val_fraction && model.meta.extra.contains("split")) f = model.meta.extra["split"]["val_fraction"].get<double>();
        try {
          which = split_runs(runs.size(), f, *a.split_seed).val_runs;
        } catch (const ArgumentError& e) {
          throw UsageError(e.what());
        }
        scope = "validation runs (split seed " + std::to_string(*a.split_seed) + ")";
      } else {
        which = recorded_val_runs(model);
        if (std::any_of(which.begin(), which.end(), [&](std::size_t k) { return k >= runs.size(); })) {
          throw DataError("recorded split does not fit dataset " + a.dataset);
        }
        scope = "validation runs (recorded split)";
      }

      const EvalReport eval = evaluate_runs(model, runs, which);
      const BoundReport bound = verify_bound_on_runs(model, runs, which);
      json report = report_to_json(eval, bound);
      report["model"] = a.model;
      report["dataset"] = a.dataset;
      report["scope"] = scope;
      const std::string path = a.report.empty() ? a.model + ".eval.json" : a.report;
      write_text(path, report.dump(2) + "\n");

      std::cout << "scope " << scope << " (" << which.size() << " runs)\n"
                << "delta_rmse " << shortest(eval.raw.delta_rmse) << "\n"
                << "delta_rmse_sqrt " << shortest(eval.raw.delta_rmse_sqrt) << "\n"
                << "delta_ame " << shortest(eval.raw.delta_ame) << "\n"
                << "projected_delta_rmse_sqrt " << shortest(eval.projected.delta_rmse_sqrt) << "\n"
                << "bound_e " << shortest(bound.e) << "\n"
                << "bound_max_ratio " << shortest(bound.max_ratio) << "\n"
                << "bound_violations " << bound.violations.size() << "\n"
                << "wrote " << path << "\n";
      return kExitOk;
    };
  });
}

// -- bench ------------------------------------------------------------------------------

struct BenchArgs {
  std::string model;
  std::size_t queries = 100;
  std::optional<std::uint64_t> seed;
  std::size_t ref_cells = 0;
  std::size_t ref_rank = 10;
  std::size_t ref_dims = 3;
  std::size_t ref_support = 200;
  std::string json_path;
};

void add_bench(CLI::App& app, BenchArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("bench", "Measure single-query inference latency");
  cmd->add_option("model", a.model, "Model file (RBSM); omit with --reference-cells");
  cmd->add_option("--queries", a.queries, "Number of timed queries")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", a.seed, "Query sampling seed (drawn when omitted)");
  cmd->add_option("--reference-cells", a.ref_cells, "Benchmark a random reference model with this many cells");
  cmd->add_option("--reference-rank", a.ref_rank, "Reference model rank")->capture_default_str();
  cmd->add_option("--reference-dims", a.ref_dims, "Reference model parameter count")->capture_default_str();
  cmd->add_option("--reference-support", a.ref_support, "Support vectors per reference SVR")->capture_default_str();
  cmd->add_option("--json", a.json_path, "Also write the samples as JSON");
  cmd->callback([&] {
    action = [&a] {
      if (a.model.empty() == (a.ref_cells == 0)) throw UsageError("give either a model file or --reference-cells");
      const std::uint64_t seed = resolve_seed(a.seed, "query");
      const SurrogateModel model =
          a.model.empty()
              ? synthetic_reference_model(static_cast<Eigen::Index>(a.ref_cells), static_cast<Eigen::Index>(a.ref_rank),
                                          static_cast<Eigen::Index>(a.ref_dims),
                                          static_cast<Eigen::Index>(a.ref_support), seed)
              : read_model(a.model);
      const LatencyReport rep = bench_latency(model, a.queries, seed);
      std::cout << "queries   " << rep.samples_us.size() << "\n"
                << "cells     " << rep.cells << "\n"
                << "rank      " << rep.rank << "\n"
                << "d_lambda  " << rep.param_dims << "\n"
                << "mean_ms   " << fixed2(rep.mean_us / 1000.0) << "\n"
                << "std_ms    " << fixed2(rep.std_us / 1000.0) << "\n"
                << "p50_ms    " << fixed2(rep.p50_us / 1000.0) << "\n"
                << "p99_ms    " << fixed2(rep.p99_us / 1000.0) << "\n"
                << "min_ms    " << fixed2(rep.min_us / 1000.0) << "\n"
                << "max_ms    " << fixed2(rep.max_us / 1000.0) << "\n";
      if (!a.json_path.empty()) {
        const json j = {{"cells", rep.cells},         {"rank", rep.rank},     {"d_lambda", rep.param_dims},
                        {"samples_us", rep.samples_us}, {"mean_us", rep.mean_us}, {"std_us", rep.std_us},
                        {"p50_us", rep.p50_us},         {"p99_us", rep.p99_us}, {"min_us", rep.min_us},
                        {"max_us", rep.max_us}};
        write_text(a.json_path, j.dump(2) + "\n");
      }
      return kExitOk;
    };
  });
}

// -- infer ------------------------------------------------------------------------------

struct InferArgs {
  std::string model;
  double t = 0.0;
  std::vector<double> lambda;
  bool binary = false;
  std::string output;
};

void add_infer(CLI::App& app, InferArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("infer", "Reconstruct one field");
  cmd->add_option("model", a.model, "Model file (RBSM)")->required();
  cmd->add_option("--t", a.t, "Time")->required();
  cmd->add_option("--lambda", a.lambda, "Parameters, comma separated")->delimiter(',')->required();
  cmd->add_flag("--binary", a.binary, "Raw little-endian f64 output instead of CSV");
  cmd->add_option("-o,--output", a.output, "Output file (default stdout)");
  cmd->callback([&] {
    action = [&a] {
      const SurrogateModel model = read_model(a.model);
      if (static_cast<Eigen::Index>(a.lambda.size()) != model.param_dims()) {
        throw UsageError("--lambda has " + std::to_string(a.lambda.size()) + " values, model expects d_lambda = " +
                         std::to_string(model.param_dims()));
      }
      if (!std::isfinite(a.t) || std::any_of(a.lambda.begin(), a.lambda.end(), [](double v) { return !std::isfinite(v); })) {
        throw UsageError("--t and --lambda must be finite");
      }
      const std::vector<double> field = infer(model, a.t, a.lambda);
      std::string out;
      if (a.binary) {
        io::ByteWriter w;
        w.f64s(field);
        out.assign(reinterpret_cast<const char*>(w.buffer().data()), w.size());
      } else {
        for (double v : field) (out += shortest(v)) += '\n';
      }
      if (a.output.empty()) {
        std::cout.write(out.data(), static_cast<std::streamsize>(out.size()));
        std::cout.flush();
      } else {
        write_text(a.output, out);
      }
      return kExitOk;
    };
  });
}

// -- serve ------------------------------------------------------------------------------

struct ServeArgs {
  std::string model;
  std::string bind = "127.0.0.1:8080";
  std::size_t batch_cap = 1024;
  std::string cors = "*";
  std::string static_dir;
};

std::pair<std::string, int> split_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("--bind expects host:port, got " + addr);
  int port = -1;
  const std::string p = addr.substr(colon + 1);
  const auto res = std::from_chars(p.data(), p.data() + p.size(), port);
  if (res.ec != std::errc{} || res.ptr != p.data() + p.size() || port < 0 || port > 65535) {
    throw UsageError("invalid port in --bind " + addr);
  }
  return {addr.substr(0, colon), port};
}

int serve(const ServeArgs& a) {
  auto [host, port] = split_address(a.bind);
  auto model = std::make_shared<const SurrogateModel>(read_model(a.model));
  ServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.batch_cap = a.batch_cap;
  opts.cors = a.cors == "none" ? "" : a.cors;
  opts.static_dir = a.static_dir;
  std::unique_ptr<InferenceServer> server;
  try {
    server = std::make_unique<InferenceServer>(model, opts);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
  int bound = 0;
  try {
    bound = server->bind();
  } catch (const IoError& e) {
    throw BindError(e.what());
  }

  // Handle SIGINT/SIGTERM on a dedicated thread; every other thread inherits the blocked mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGUSR1);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread watcher([&set, &server] {
    int sig = 0;
    sigwait(&set, &sig);
    if (sig != SIGUSR1) server->stop();
  });

  std::cout << "listening on http://" << host << ":" << bound << " (n " << model->cells() << ", r " << model->rank()
            << ")" << std::endl;
  server->run();
  pthread_kill(watcher.native_handle(), SIGUSR1);
  watcher.join();
  std::cout << "stopped" << std::endl;
  return kExitOk;
}

void add_serve(CLI::App& app, ServeArgs& a, std::function<int()>& action) {
  auto* cmd = app.add_subcommand("serve", "Serve inference over HTTP");
  cmd->add_option("--model", a.model, "Model file (RBSM)")->envname("RBS_MODEL")->required();
  cmd->add_option("--bind", a.bind, "host:port (port 0 picks a free one)")->envname("RBS_BIND")->capture_default_str();
  cmd->add_option("--batch-cap", a.batch_cap, "Largest accepted /infer_batch request")
      ->envname("RBS_BATCH_CAP")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--cors", a.cors, "Allowed origin, * or none")->envname("RBS_CORS")->capture_default_str();
  cmd->add_option("--static", a.static_dir, "Directory served at / (web UI)")->envname("RBS_STATIC");
  cmd->callback([&] {
    action = [&a] { return serve(a); };
  });
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ArgumentError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;

  std::ifstream in(*path);
  if (!in) throw ArgumentError("cannot read config file " + *path);
  const json cfg = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (cfg.is_discarded() || !cfg.is_object()) throw ArgumentError("config file " + *path + " must hold a JSON object");

  auto scalar = [&](const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number()) return shortest(v.get<double>());
    throw ArgumentError("config key " + key + " has an unsupported value");
  };
  std::vector<std::string> flags;
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (value.is_boolean()) {
      if (value.get<bool>()) flags.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i) joined += (i ? "," : "") + scalar(key, value[i]);
      flags.push_back(flag);
      flags.push_back(joined);
    } else if (value.is_object() || value.is_null()) {
      throw ArgumentError("config key " + key + " must be a scalar or an array");
    } else {
      flags.push_back(flag);
      flags.push_back(scalar(key, value));
    }
  }
  // Insert after the first non-flag token (the subcommand).
  const auto sub = std::find_if(rest.begin(), rest.end(), [](const std::string& s) { return s.empty() || s[0] != '-'; });
  if (sub == rest.end()) throw ArgumentError("--config needs a subcommand");
  rest.insert(sub + 1, flags.begin(), flags.end());
  return rest;
}

int run(const std::vector<std::string>& raw_args) {
  CLI::App app{"Reduced-basis surrogate toolkit: POD + SVR regression of simulation fields", "rbs"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  std::function<int()> action;
  GenerateArgs gen;
  FitArgs fit_args;
  EvalArgs eval_args;
  BenchArgs bench;
  InferArgs infer_args;
  ServeArgs serve_args;
  add_generate(app, gen, action);
  add_fit(app, fit_args, action);
  add_eval(app, eval_args, action);
  add_bench(app, bench, action);
  add_infer(app, infer_args, action);
  add_serve(app, serve_args, action);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const BindError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace rbs::cli
