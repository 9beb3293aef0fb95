#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <doctest.h>

#include "becaptcha/service.hpp"
#include "becaptcha/session_io.hpp"
#include "golden.hpp"
#include "helpers.hpp"

#include <httplib.h>  // after Eigen: resolv.h defines _res

using namespace becaptcha;
using nlohmann::json;

namespace {

std::string slurp(const std::string& name) {
  std::ifstream is(std::string(BECAPTCHA_TEST_DATA) + "/" + name);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const ModelBundle& stored_bundle() {
  static const ModelBundle b =
      load_bundle(std::string(BECAPTCHA_TEST_DATA) + "/golden_bundle.json");
  return b;
}

struct Running {
  Server server;
  int port = 0;
  std::thread thread;
  explicit Running(ModelBundle b) : server(std::move(b)) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.listen(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("stored golden gesture gives the stored verdict") {
  const auto reply = handle_verify(stored_bundle(), slurp("golden_gesture.json"));
  CHECK(reply.status == 200);
  CHECK(json::parse(reply.body) == json::parse(slurp("golden_verdict.json")));
}

TEST_CASE("the stored bundle is what the golden builder produces") {
  CHECK(bundle_hash(stored_bundle()) == bundle_hash(testing::golden_bundle()));
}

TEST_CASE("malformed and degenerate bodies") {
  const auto& b = stored_bundle();
  auto r = handle_verify(b, "{not json");
  CHECK(r.status == 400);
  CHECK(json::parse(r.body).at("error") == "ParseError");
  CHECK_FALSE(json::parse(r.body).at("detail").get<std::string>().empty());

  r = handle_verify(b, R"({"touch": {"screen_w": 10, "screen_h": 10, "points": [[0.5, 0.5, null, 0]]}})");
  REQUIRE(r.status == 200);
  const auto v = json::parse(r.body);
  CHECK(v.at("is_human") == false);
  CHECK(v.at("human_score").is_null());

  r = handle_verify(b, R"({"touch": {"screen_w": 10, "screen_h": 10,
                            "points": [[0.1, 0.1, null, 0], [2.0, 0.1, null, 0.2]]}})");
  CHECK(r.status == 400);
  CHECK(json::parse(r.body).at("error") == "OutOfScreen");
}

TEST_CASE("minimal payload without label or metadata is accepted") {
  auto j = json::parse(slurp("golden_gesture.json"));
  j.erase("label");
  j.erase("meta");
  const auto r = handle_verify(stored_bundle(), j.dump());
  CHECK(r.status == 200);
  CHECK(json::parse(r.body) == json::parse(slurp("golden_verdict.json")));
}

TEST_CASE("synth endpoint") {
  const auto& b = stored_bundle();
  const auto a = handle_synth(b, "handcrafted", "7");
  const auto c = handle_synth(b, "handcrafted", "7");
  CHECK(a.status == 200);
  CHECK(a.body == c.body);
  const auto g = gesture_from_json(json::parse(a.body));
  CHECK(g.label == Label::FakeHandcrafted);
  CHECK(handle_synth(b, "handcrafted", "x").status == 400);
  CHECK(handle_synth(b, "mystery", "1").status == 400);
  CHECK(handle_synth(b, "gan", "1").status == 404);

  auto with_gan = b;
  FixtureConfig fc;
  fc.subjects = 13;
  const auto humans = fixture_humans(fc);
  TrainConfig tc;
  tc.epochs = 1;
  with_gan.touch_gan = train_touch_gan(humans, NetConfig{}, tc);
  const auto r = handle_synth(with_gan, "gan", "3");
  CHECK(r.status == 200);
  CHECK(gesture_from_json(json::parse(r.body)).label == Label::FakeGan);
}

TEST_CASE("health reports version, hash and feature mode") {
  const auto r = handle_health(stored_bundle(), bundle_hash(stored_bundle()));
  const auto j = json::parse(r.body);
  CHECK(j.at("version") == std::string(kVersion));
  CHECK(j.at("bundle_hash").get<std::string>().size() == 16);
  CHECK(j.at("feature_mode") == "touch_accel");
}

TEST_CASE("HTTP: 100 concurrent verify calls equal serial results") {
  Running srv(stored_bundle());
  std::vector<std::string> bodies;
  const auto corpus = testing::fixture_with_fakes(3, 4242, true, 10);
  for (const auto& g : corpus) bodies.push_back(to_json(g).dump());

  httplib::Client cli("127.0.0.1", srv.port);
  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(json::parse(health->body).at("bundle_hash") == bundle_hash(stored_bundle()));

  std::vector<std::string> serial;
  for (const auto& body : bodies) {
    auto res = cli.Post("/verify", body, "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    serial.push_back(res->body);
  }

  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 100; ++i) {
    futures.push_back(std::async(std::launch::async, [&, i] {
      httplib::Client c("127.0.0.1", srv.port);
      auto res = c.Post("/verify", bodies[static_cast<std::size_t>(i) % bodies.size()],
                        "application/json");
      return res ? res->body : std::string("<no response: ") + httplib::to_string(res.error()) + ">";
    }));
  }
  for (int i = 0; i < 100; ++i) {
    CHECK(futures[static_cast<std::size_t>(i)].get() == serial[static_cast<std::size_t>(i) % serial.size()]);
  }

  auto bad = cli.Post("/verify", "[1,2", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto synth = cli.Get("/synth?method=handcrafted&seed=5");
  REQUIRE(synth);
  CHECK(synth->body == handle_synth(stored_bundle(), "handcrafted", "5").body);
}

TEST_CASE("binding a taken port fails with BindError") {
  Running first(stored_bundle());
  Server second(stored_bundle());
  CHECK_THROWS_CODE(second.bind("127.0.0.1", first.port), Errc::BindError);
}
