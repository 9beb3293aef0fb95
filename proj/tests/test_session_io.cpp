#include <sstream>

#include <doctest.h>

#include "becaptcha/session_io.hpp"
#include "helpers.hpp"

using namespace becaptcha;

TEST_CASE("empty gesture file round-trips") {
  std::stringstream ss;
  write_sessions(ss, {});
  CHECK(read_sessions(ss).empty());
}

TEST_CASE("absent accelerometer is stored as null") {
  std::mt19937_64 rng(4);
  const auto g = testing::random_sample(rng, 6, false);
  const auto j = to_json(g);
  CHECK(j.at("accel").is_null());
  std::stringstream ss;
  std::vector<GestureSample> one{g};
  write_sessions(ss, one);
  const auto back = read_sessions(ss);
  REQUIRE(back.size() == 1);
  CHECK_FALSE(back[0].accel.has_value());
  CHECK(back[0] == g);
}

TEST_CASE("1000 samples round-trip field by field") {
  std::mt19937_64 rng(8);
  std::vector<GestureSample> in;
  for (int i = 0; i < 1000; ++i) {
    auto g = testing::random_sample(rng, 2 + static_cast<std::size_t>(i % 40), i % 2 == 0);
    g.label = static_cast<Label>(i % 4);
    g.meta.device_model = "dev" + std::to_string(i % 7);
    g.meta.orientation = i % 3 == 0 ? Orientation::Landscape : Orientation::Portrait;
    in.push_back(std::move(g));
  }
  std::stringstream ss;
  write_sessions(ss, in);
  const auto out = read_sessions(ss);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto a = in[i].touch.points();
    const auto b = out[i].touch.points();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].x == b[k].x);
      CHECK(a[k].y == b[k].y);
      CHECK(a[k].p == b[k].p);
      CHECK(a[k].t == b[k].t);
    }
    CHECK(in[i].accel == out[i].accel);
    CHECK(in[i].label == out[i].label);
    CHECK(in[i].meta == out[i].meta);
  }
}

TEST_CASE("header and record errors") {
  std::stringstream wrong("{\"schema\":\"becaptcha/2\"}\n");
  CHECK_THROWS_CODE(read_sessions(wrong), Errc::SchemaVersionMismatch);
  std::stringstream none("");
  CHECK_THROWS_CODE(read_sessions(none), Errc::ParseError);
  std::stringstream broken("{\"schema\":\"becaptcha/1\"}\n{\"touch\": [\n");
  try {
    read_sessions(broken);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
