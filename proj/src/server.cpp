#include "rbs/server.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "httplib.h"

#include "rbs/error.hpp"

namespace rbs {

namespace {

using json = nlohmann::json;

struct RequestError {
  int status;
  std::string message;
};

struct Query {
  double t = 0.0;
  std::vector<double> lambda;
};

json error_body(const std::string& message) { return json{{"error", message}}; }

// `where` prefixes messages for batch entries ("request 3: ...").
Query parse_query(const json& j, Eigen::Index d_lambda, const std::string& where) {
  if (!j.is_object()) throw RequestError{400, where + "request must be a JSON object with fields t and lambda"};
  if (!j.contains("t")) throw RequestError{400, where + "missing field t"};
  if (!j.contains("lambda")) throw RequestError{400, where + "missing field lambda"};
  const json& t = j.at("t");
  const json& lambda = j.at("lambda");
  if (!lambda.is_array()) throw RequestError{400, where + "lambda must be an array"};
  if (static_cast<Eigen::Index>(lambda.size()) != d_lambda) {
    throw RequestError{422, where + "lambda has " + std::to_string(lambda.size()) + " components, model expects " +
                                std::to_string(d_lambda)};
  }
  Query q;
  if (!t.is_number() || !std::isfinite(t.get<double>())) throw RequestError{422, where + "t is not a finite number"};
  q.t = t.get<double>();
  q.lambda.reserve(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (!lambda[i].is_number() || !std::isfinite(lambda[i].get<double>())) {
      throw RequestError{422, where + "lambda[" + std::to_string(i) + "] is not a finite number"};
    }
    q.lambda.push_back(lambda[i].get<double>());
  }
  return q;
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded()) throw RequestError{400, "malformed JSON body"};
  return body;
}

struct Answer {
  std::vector<double> field;
  std::int64_t latency_us = 0;
  bool extrapolated = false;
};

Answer answer(const SurrogateModel& model, const Query& q) {
  Answer a;
  a.field.resize(static_cast<std::size_t>(model.cells()));
  const auto start = std::chrono::steady_clock::now();
  infer_into(model, q.t, q.lambda, a.field);
  const auto stop = std::chrono::steady_clock::now();
  a.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count();
  a.extrapolated = is_extrapolated(model, q.t, q.lambda);
  return a;
}

json answer_json(const Answer& a) {
  return json{{"field", a.field}, {"latency_us", a.latency_us}, {"extrapolated", a.extrapolated}};
}

bool wants_binary(const httplib::Request& req) {
  return req.get_header_value("Accept").find("application/octet-stream") != std::string::npos;
}

std::string raw_f64(std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little, "binary responses assume a little-endian host");
  std::string out(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

json server_meta(const SurrogateModel& model) {
  return meta_to_json(model);
}

struct InferenceServer::Impl {
  httplib::Server http;
  int port = -1;
};

InferenceServer::InferenceServer(std::shared_ptr<const SurrogateModel> model, ServerOptions opts)
    : model_(std::move(model)), opts_(std::move(opts)), impl_(std::make_unique<Impl>()) {
  if (!model_) throw ArgumentError("server needs a model");
  model_->validate();
  if (opts_.batch_cap == 0) throw ArgumentError("batch cap must be positive");

  auto& http = impl_->http;
  // httplib's default also sets SO_REUSEPORT, which would let a second server share the port silently.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  const auto model_ref = model_;
  const std::string meta_body = server_meta(*model_).dump();
  const std::size_t cap = opts_.batch_cap;

  if (!opts_.cors.empty()) {
    const std::string origin = opts_.cors;
    http.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Accept");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Expose-Headers", "X-Latency-Us, X-Extrapolated");
    });
    http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  http.Get("/meta", [meta_body](const httplib::Request&, httplib::Response& res) {
    res.set_content(meta_body, "application/json");
  });

  http.Post("/infer", [model_ref](const httplib::Request& req, httplib::Response& res) {
    try {
      const Query q = parse_query(parse_body(req), model_ref->param_dims(), "");
      const Answer a = answer(*model_ref, q);
      if (wants_binary(req)) {
        res.set_header("X-Latency-Us", std::to_string(a.latency_us));
        res.set_header("X-Extrapolated", a.extrapolated ? "true" : "false");
        res.set_content(raw_f64(a.field), "application/octet-stream");
      } else {
        send_json(res, 200, answer_json(a));
      }
    } catch (const RequestError& e) {
      send_json(res, e.status, error_body(e.message));
    } catch (const Error& e) {
      send_json(res, 422, error_body(e.what()));
    }
  });

  http.Post("/infer_batch", [model_ref, cap](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = parse_body(req);
      if (!body.is_array()) throw RequestError{400, "batch body must be a JSON array of requests"};
      if (body.size() > cap) {
        throw RequestError{413, "batch of " + std::to_string(body.size()) + " requests exceeds the cap of " +
                                    std::to_string(cap)};
      }
      std::vector<Query> queries;
      queries.reserve(body.size());
      for (std::size_t i = 0; i < body.size(); ++i) {
        try {
          queries.push_back(parse_query(body[i], model_ref->param_dims(), "request " + std::to_string(i) + ": "));
        } catch (RequestError& e) {
          // A structurally broken entry is still a valid JSON document; reject the batch as unprocessable.
          e.status = 422;
          throw;
        }
      }
      json out = json::array();
      for (const auto& q : queries) out.push_back(answer_json(answer(*model_ref, q)));
      send_json(res, 200, out);
    } catch (const RequestError& e) {
      send_json(res, e.status, error_body(e.message));
    } catch (const Error& e) {
      send_json(res, 422, error_body(e.what()));
    }
  });

  http.Get(R"(/mode/(-?\d+))", [model_ref](const httplib::Request& req, httplib::Response& res) {
    const std::string text = req.matches[1].str();
    long long k = 0;
    try {
      k = std::stoll(text);
    } catch (const std::exception&) {
      k = -1;
    }
    if (k < 1 || k > model_ref->rank()) {
      send_json(res, 404, error_body("mode " + text + " out of range 1.." + std::to_string(model_ref->rank())));
      return;
    }
    const Eigen::VectorXd col = model_ref->basis.modes.col(static_cast<Eigen::Index>(k - 1));
    const std::span<const double> values(col.data(), static_cast<std::size_t>(col.size()));
    if (wants_binary(req)) {
      res.set_content(raw_f64(values), "application/octet-stream");
    } else {
      send_json(res, 200, json{{"k", k}, {"mode", std::vector<double>(values.begin(), values.end())}});
    }
  });

  if (!opts_.static_dir.empty()) {
    if (!http.set_mount_point("/", opts_.static_dir)) {
      throw IoError("static directory not found: " + opts_.static_dir);
    }
  }
}

InferenceServer::~InferenceServer() { stop(); }

int InferenceServer::bind() {
  auto& http = impl_->http;
  if (opts_.port == 0) {
    impl_->port = http.bind_to_any_port(opts_.host);
  } else {
    impl_->port = http.bind_to_port(opts_.host, opts_.port) ? opts_.port : -1;
  }
  if (impl_->port < 0) {
    throw IoError("cannot bind " + opts_.host + ":" + std::to_string(opts_.port) + " (address in use or invalid)");
  }
  return impl_->port;
}

void InferenceServer::run() {
  if (impl_->port < 0) throw ArgumentError("server must be bound before run()");
  impl_->http.listen_after_bind();
}

void InferenceServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

bool InferenceServer::running() const { return impl_->http.is_running(); }

}  // namespace rbs
