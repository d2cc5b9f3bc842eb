#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "rbs/pipeline.hpp"

namespace rbs {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 picks a free port
  std::size_t batch_cap = 1024;
  /// Value of Access-Control-Allow-Origin; empty disables CORS headers.
  std::string cors = "*";
  /// Directory served under "/" for the web UI; empty disables static files.
  std::string static_dir;
};

/// HTTP front end over one immutable model. Handlers share no mutable state.
class InferenceServer {
public:
  InferenceServer(std::shared_ptr<const SurrogateModel> model, ServerOptions opts);
  ~InferenceServer();
  InferenceServer(const InferenceServer&) = delete;
  InferenceServer& operator=(const InferenceServer&) = delete;

  /// Binds the listening socket and returns the bound port; throws IoError if
  /// the address cannot be bound.
  int bind();
  /// Serves until stop() is called. Requires a prior bind().
  void run();
  void stop();
  bool running() const;

  const std::string& host() const { return opts_.host; }

private:
  struct Impl;
  std::shared_ptr<const SurrogateModel> model_;
  ServerOptions opts_;
  std::unique_ptr<Impl> impl_;
};

/// Body of GET /meta.
nlohmann::json server_meta(const SurrogateModel& model);

}  // namespace rbs
