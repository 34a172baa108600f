#include "crayon/http_selector.hpp"
#include "crayon/http_service.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace crayon;

namespace {

/// Runs an httplib server on a free local port for the lifetime of the object.
class LiveServer {
 public:
  LiveServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

class HttpApi : public ::testing::Test {
 protected:
  void SetUp() override {
    mount_service(live_.server(), service_);
  }

  Json post(const std::string& path, const Json& body, int expect) {
    auto cli = live_.client();
    const auto res = cli.Post(path, body.dump(), "application/json");
    return check(res, expect);
  }
  Json get(const std::string& path, int expect) {
    auto cli = live_.client();
    return check(cli.Get(path), expect);
  }
  Json check(const httplib::Result& res, int expect) {
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    EXPECT_EQ(res->get_header_value(kFingerprintHeader), service_.fingerprint());
    return Json::parse(res->body);
  }

  /// Creates a drawer session over HTTP whose ground-truth prompt exists.
  std::pair<std::string, Json> open_session() {
    for (std::uint64_t seed = 1; seed < 50; ++seed) {
      const Json j = post("/session", {{"kind", "drawer"}, {"seed", seed}}, 201);
      const Json& f = j.at("frame");
      const SceneRef ref = scene_ref_from_json(f.at("scene"));
      const CameraIntrinsics k = intrinsics_from_json(f.at("camera_params").at("intrinsics"));
      const CameraExtrinsics e = extrinsics_from_json(f.at("camera_params").at("extrinsics"));
      Rng rng(3);
      try {
        const GroundTruthAction gt = collect_ground_truth(materialize(ref), k, e, rng);
        const PromptRecord rec{derive_2d_prompts(gt, k, e).prompt, ref, f.at("camera").get<std::string>()};
        return {j.at("session").get<std::string>(), to_json(rec)};
      } catch (const Error&) {
      }
    }
    throw std::runtime_error("no usable seed");
  }

  Service service_{ServiceConfig{}};
  LiveServer live_;
};

}  // namespace

TEST_F(HttpApi, FullSessionFlow) {
  const auto [id, prompt] = open_session();
  const Json frame = get("/session/" + id + "/frame", 200);
  EXPECT_EQ(frame.at("config_fingerprint"), service_.fingerprint());
  EXPECT_EQ(frame.at("width"), 336);
  EXPECT_EQ(frame.at("key_frame"), 0);
  const RgbImage img = decode_ppm(detail::base64_decode(frame.at("rgb_ppm_base64").get<std::string>()));
  EXPECT_EQ(img, service_.frame(id).render.rgb);

  const Json preview = post("/session/" + id + "/prompt", {{"prompt", prompt}}, 200);
  EXPECT_EQ(preview.at("primitive"), "pull");
  EXPECT_EQ(preview.at("sense"), "open");
  EXPECT_FALSE(preview.at("waypoints").empty());
  EXPECT_EQ(preview.at("prompt"), prompt);

  const Json step = post("/session/" + id + "/execute", Json::object(), 200);
  EXPECT_TRUE(step.at("step").at("success").get<bool>());
  EXPECT_EQ(step.at("frame").at("key_frame"), 1);

  const Json hist = get("/session/" + id + "/history", 200);
  EXPECT_EQ(hist.at("steps").size(), 1u);
  EXPECT_EQ(hist.at("config_fingerprint"), service_.fingerprint());
  const Scene replayed = replay_history(history_from_json(hist), service_.config());
  EXPECT_DOUBLE_EQ(replayed.joint.state, hist.at("final_joint_state").get<double>());
}

TEST_F(HttpApi, ErrorsCarryCodesAndStatus) {
  const auto code = [](const Json& j) { return j.at("error").at("code").get<std::string>(); };
  EXPECT_EQ(code(get("/session/nope/frame", 404)), "not_found");
  EXPECT_EQ(code(post("/session", {{"kind", "sofa"}}, 400)), "validation");
  EXPECT_EQ(code(post("/session", {{"seed", "x"}}, 400)), "validation");

  const auto [id, prompt] = open_session();
  EXPECT_EQ(code(post("/session/" + id + "/execute", Json::object(), 409)), "invalid_state");
  EXPECT_EQ(code(post("/session/" + id + "/prompt", Json::object(), 400)), "validation");
  EXPECT_EQ(code(post("/session/" + id + "/prompt", {{"prompt", prompt}, {"primitive", "twist"}}, 400)),
            "validation");
  EXPECT_EQ(code(post("/session/" + id + "/prompt", {{"prompt", prompt}, {"primitive", "rotate"}}, 400)),
            "invalid_argument");
  Json stale = prompt;
  stale["scene"]["joint_state"] = 0.3;
  const Json err = post("/session/" + id + "/prompt", {{"prompt", stale}}, 400);
  EXPECT_EQ(code(err), "validation");
  EXPECT_EQ(err.at("config_fingerprint"), service_.fingerprint());

  auto cli = live_.client();
  const auto res = cli.Post("/session", "{broken", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(code(Json::parse(res->body)), "validation");
}

TEST_F(HttpApi, CorsAndHealth) {
  auto cli = live_.client();
  const auto res = cli.Options("/session");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  const Json h = get("/health", 200);
  EXPECT_EQ(h.at("status"), "ok");
  EXPECT_EQ(h.at("config").at("predictor"), "solver");
}

TEST_F(HttpApi, SelectorRoundTripThroughClient) {
  const auto [id, prompt] = open_session();
  const Frame f = service_.frame(id);
  SelectorRequest req;
  req.task = "pull";
  req.center = prompt_record_from_json(prompt).prompt.contact_px;
  req.image = f.render.rgb;
  req.scene = f.scene;
  req.camera = std::pair{f.intrinsics, f.extrinsics};
  HttpSelectorClient client(live_.url());
  const SelectorChoice remote = client.choose(req);
  const SelectorChoice local = service_.select(req);
  EXPECT_EQ(remote.z, local.z);
  EXPECT_EQ(remote.y, local.y);
  EXPECT_EQ(remote.m, local.m);

  // The selector reply body has no fingerprint; the header still does.
  const Json body = post("/selector", to_json(req), 200);
  EXPECT_FALSE(body.contains("config_fingerprint"));
  req.scene.reset();
  try {
    client.choose(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::selector);
  }
}

TEST(HttpSelector, TimeoutAndMalformedReplies) {
  LiveServer slow;
  slow.server().Post("/selector", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"z":0,"y":8,"m":0})", "application/json");
  });
  SelectorRequest req;
  req.task = "pull";
  req.image = RgbImage(2, 2, {0, 0, 0});
  const auto code = [&](SelectorClient& c) {
    try {
      c.choose(req);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  HttpSelectorClient impatient(slow.url(), std::chrono::milliseconds(150));
  EXPECT_EQ(code(impatient), ErrorCode::selector);

  LiveServer bad;
  bad.server().Post("/selector", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });
  HttpSelectorClient garbled(bad.url());
  EXPECT_EQ(code(garbled), ErrorCode::selector);

  HttpSelectorClient nobody("http://127.0.0.1:1", std::chrono::milliseconds(200));
  EXPECT_EQ(code(nobody), ErrorCode::selector);
}
