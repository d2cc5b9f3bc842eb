#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <future>
#include <random>
#include <thread>

// Eigen before httplib: resolv.h defines a _res macro that collides with Eigen internals.
#include "support.hpp"

#include "httplib.h"
#include "rbs/error.hpp"
#include "rbs/server.hpp"

using namespace rbs;
using nlohmann::json;

namespace {

std::shared_ptr<const SurrogateModel> shared_model() {
  static const auto model = [] {
    const auto runs = generate_synthetic(test::small_synthetic(11));
    const json meta = {{"grid_side", 4}, {"parameter_names", synthetic_parameter_names()}};
    return std::make_shared<const SurrogateModel>(fit(runs, test::quick_fit_config(4), meta).model);
  }();
  return model;
}

/// Server on an ephemeral port, running on a background thread.
class Running {
public:
  explicit Running(ServerOptions opts = {}) : server_(shared_model(), [&] {
    opts.port = 0;
    return opts;
  }()) {
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.run(); });
    for (int i = 0; i < 200 && !server_.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }
  int port() const { return port_; }

private:
  InferenceServer server_;
  int port_ = 0;
  std::thread thread_;
};

json request(double t, const std::vector<double>& lambda) { return json{{"t", t}, {"lambda", lambda}}; }

httplib::Result post(const httplib::Client& c, const std::string& path, const std::string& body) {
  return const_cast<httplib::Client&>(c).Post(path, body, "application/json");
}

}  // namespace

TEST(Server, Meta) {
  Running s;
  auto c = s.client();
  auto a = c.Get("/meta");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->status, 200);
  const json j = json::parse(a->body);
  EXPECT_EQ(j["n"], 16);
  EXPECT_EQ(j["r"], shared_model()->rank());
  EXPECT_EQ(j["d_lambda"], 3);
  EXPECT_EQ(j["grid_side"], 4);
  EXPECT_EQ(j["parameter_names"], json(synthetic_parameter_names()));
  EXPECT_TRUE(j["training_ranges"].contains("t"));
  EXPECT_TRUE(j.contains("e_k"));

  auto f1 = std::async(std::launch::async, [&] { return s.client().Get("/meta")->body; });
  auto f2 = std::async(std::launch::async, [&] { return s.client().Get("/meta")->body; });
  EXPECT_EQ(f1.get(), f2.get());
}

TEST(Server, InferMatchesPipelineBitExactly) {
  Running s;
  auto c = s.client();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> lambda{1.0 + u(rng), 0.5 + u(rng), 0.5 + u(rng)};
    const double t = u(rng);
    auto res = post(c, "/infer", request(t, lambda).dump());
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const json j = json::parse(res->body);
    EXPECT_EQ(j["field"].get<std::vector<double>>(), infer(*shared_model(), t, lambda));
    EXPECT_GE(j["latency_us"].get<std::int64_t>(), 0);
    EXPECT_EQ(j["extrapolated"].get<bool>(), is_extrapolated(*shared_model(), t, lambda));
  }
}

TEST(Server, BinaryResponse) {
  Running s;
  auto c = s.client();
  const std::vector<double> lambda{1.5, 1.0, 1.0};
  httplib::Headers h{{"Accept", "application/octet-stream"}};
  auto res = c.Post("/infer", h, request(0.5, lambda).dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/octet-stream");
  ASSERT_EQ(res->body.size(), 16u * 8u);
  std::vector<double> field(16);
  std::memcpy(field.data(), res->body.data(), res->body.size());
  EXPECT_EQ(field, infer(*shared_model(), 0.5, lambda));
  EXPECT_TRUE(res->has_header("X-Latency-Us"));
  EXPECT_EQ(res->get_header_value("X-Extrapolated"), "false");
}

TEST(Server, InferErrors) {
  Running s;
  auto c = s.client();
  auto bad_json = post(c, "/infer", "{not json");
  ASSERT_TRUE(bad_json);
  EXPECT_EQ(bad_json->status, 400);
  EXPECT_TRUE(json::parse(bad_json->body).contains("error"));

  EXPECT_EQ(post(c, "/infer", R"({"lambda": [1, 1, 1]})")->status, 400);
  EXPECT_EQ(post(c, "/infer", R"([1, 2])")->status, 400);

  auto wrong = post(c, "/infer", request(0.5, {1.0, 1.0}).dump());
  EXPECT_EQ(wrong->status, 422);
  const std::string msg = json::parse(wrong->body)["error"];
  EXPECT_NE(msg.find("2 components"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expects 3"), std::string::npos) << msg;

  auto text = post(c, "/infer", R"({"t": 0.5, "lambda": [1, "x", 1]})");
  EXPECT_EQ(text->status, 422);
  EXPECT_NE(json::parse(text->body)["error"].get<std::string>().find("lambda[1]"), std::string::npos);
}

TEST(Server, ExtrapolationIsFlaggedNotBlocked) {
  Running s;
  auto res = post(s.client(), "/infer", request(50.0, {1.5, 1.0, 1.0}).dump());
  ASSERT_EQ(res->status, 200);
  EXPECT_TRUE(json::parse(res->body)["extrapolated"].get<bool>());
}

TEST(Server, BatchMatchesSingles) {
  Running s;
  auto c = s.client();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  json batch = json::array();
  for (int i = 0; i < 100; ++i) batch.push_back(request(u(rng), {1.0 + u(rng), 0.5 + u(rng), 0.5 + u(rng)}));
  auto res = post(c, "/infer_batch", batch.dump());
  ASSERT_EQ(res->status, 200);
  const json out = json::parse(res->body);
  ASSERT_EQ(out.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) {
    const json single = json::parse(post(c, "/infer", batch[i].dump())->body);
    EXPECT_EQ(out[i]["field"], single["field"]);
    EXPECT_EQ(out[i]["extrapolated"], single["extrapolated"]);
  }

  json one = json::array({batch[0]});
  EXPECT_EQ(json::parse(post(c, "/infer_batch", one.dump())->body)[0]["field"],
            json::parse(post(c, "/infer", batch[0].dump())->body)["field"]);

  batch[3]["lambda"] = {1.0};
  auto bad = post(c, "/infer_batch", batch.dump());
  EXPECT_EQ(bad->status, 422);
  EXPECT_NE(json::parse(bad->body)["error"].get<std::string>().find("request 3"), std::string::npos);
  EXPECT_EQ(post(c, "/infer_batch", R"({"t": 1})")->status, 400);
}

TEST(Server, BatchCap) {
  ServerOptions opts;
  opts.batch_cap = 5;
  Running s(opts);
  json batch = json::array();
  for (int i = 0; i < 6; ++i) batch.push_back(request(0.5, {1.5, 1.0, 1.0}));
  auto res = post(s.client(), "/infer_batch", batch.dump());
  EXPECT_EQ(res->status, 413);
  batch.erase(batch.begin());
  EXPECT_EQ(post(s.client(), "/infer_batch", batch.dump())->status, 200);
}

TEST(Server, Modes) {
  Running s;
  auto c = s.client();
  const auto r = shared_model()->rank();
  for (Eigen::Index k = 1; k <= r; ++k) {
    auto res = c.Get("/mode/" + std::to_string(k));
    ASSERT_EQ(res->status, 200);
    const auto mode = json::parse(res->body)["mode"].get<std::vector<double>>();
    const Eigen::Map<const Eigen::VectorXd> v(mode.data(), static_cast<Eigen::Index>(mode.size()));
    EXPECT_NEAR(v.norm(), 1.0, 1e-10);

    // Same bytes as the BASIS section column.
    const auto bytes = serialize_model(*shared_model());
    for (const auto& sec : model_sections(bytes)) {
      if (sec.tag != "BASIS") continue;
      const std::size_t off = sec.offset + static_cast<std::size_t>(k - 1) * 16 * 8;
      EXPECT_EQ(std::memcmp(bytes.data() + off, mode.data(), 16 * 8), 0);
    }
    httplib::Headers h{{"Accept", "application/octet-stream"}};
    auto bin = c.Get("/mode/" + std::to_string(k), h);
    ASSERT_EQ(bin->body.size(), 16u * 8u);
    EXPECT_EQ(std::memcmp(bin->body.data(), mode.data(), 16 * 8), 0);
  }
  EXPECT_EQ(c.Get("/mode/" + std::to_string(r + 1))->status, 404);
  EXPECT_EQ(c.Get("/mode/0")->status, 404);
  EXPECT_EQ(c.Get("/mode/-1")->status, 404);
}

TEST(Server, Cors) {
  {
    Running s;
    auto c = s.client();
    auto res = c.Get("/meta");
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
    auto pre = c.Options("/infer");
    ASSERT_TRUE(pre);
    EXPECT_EQ(pre->status, 204);
  }
  {
    ServerOptions opts;
    opts.cors = "http://ui.example";
    Running s(opts);
    EXPECT_EQ(s.client().Get("/meta")->get_header_value("Access-Control-Allow-Origin"), "http://ui.example");
  }
  {
    ServerOptions opts;
    opts.cors.clear();
    Running s(opts);
    EXPECT_FALSE(s.client().Get("/meta")->has_header("Access-Control-Allow-Origin"));
  }
}

TEST(Server, StaticMount) {
  test::TempDir dir;
  std::ofstream(dir.file("index.html")) << "<html>ui</html>";
  ServerOptions opts;
  opts.static_dir = dir.path().string();
  Running s(opts);
  auto res = s.client().Get("/index.html");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "<html>ui</html>");
  EXPECT_EQ(s.client().Get("/meta")->status, 200);

  ServerOptions missing;
  missing.static_dir = dir.file("nope");
  EXPECT_THROW(InferenceServer(shared_model(), missing), IoError);
}

TEST(Server, BindConflictAndOptions) {
  Running s;
  ServerOptions same;
  same.port = s.port();
  InferenceServer second(shared_model(), same);
  try {
    second.bind();
    FAIL() << "expected a bind failure";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(s.port())), std::string::npos);
  }
  EXPECT_THROW(InferenceServer(nullptr, {}), ArgumentError);
  ServerOptions zero;
  zero.batch_cap = 0;
  EXPECT_THROW(InferenceServer(shared_model(), zero), ArgumentError);
}
