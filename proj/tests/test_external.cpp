#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "coildraw/external.hpp"
#include "coildraw/simulate.hpp"

using namespace coildraw;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("coildraw-ext-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

Layout complete_layout() {
  Layout l = initial_layout(Canvas{}, Mode::kSymmetric);
  for (int a : {2, 4}) l = *append_segment(l, a).layout;
  return l;
}

}  // namespace

TEST_CASE("layout record round trip") {
  const Layout l = complete_layout();
  const nlohmann::json j = layout_to_json(l);
  CHECK(j.at("mode") == "symmetric");
  CHECK(j.at("wire_width") == 5.0);
  CHECK(j.at("actions") == std::vector<int>{2, 4});
  REQUIRE(j.at("nodes").size() == 3);
  CHECK(j.at("nodes").at(0) == nlohmann::json({40.0, 0.0}));
  CHECK(j.at("nodes").at(2) == nlohmann::json({50.0, 10.0}));

  const Layout back = layout_from_json(j, l.canvas);
  CHECK(back.status == LayoutStatus::kComplete);
  CHECK(back.actions == l.actions);
  CHECK(near(back.head, l.head));

  SECTION("tampered nodes are rejected") {
    nlohmann::json bad = j;
    bad["nodes"][2] = {60.0, 10.0};
    CHECK_THROWS_AS(layout_from_json(bad, l.canvas), std::invalid_argument);
  }
  SECTION("wire width must match the canvas") {
    nlohmann::json bad = j;
    bad["wire_width"] = 4.0;
    CHECK_THROWS_AS(layout_from_json(bad, l.canvas), std::invalid_argument);
  }
  SECTION("illegal action strings are rejected") {
    nlohmann::json bad = j;
    bad["actions"] = {4, 4};
    bad["nodes"] = {{40.0, 0.0}, {50.0, 0.0}, {60.0, 0.0}};
    CHECK_THROWS_AS(layout_from_json(bad, l.canvas), std::invalid_argument);
  }
  SECTION("missing keys are rejected") {
    nlohmann::json bad = j;
    bad.erase("actions");
    CHECK_THROWS_AS(layout_from_json(bad, l.canvas), std::invalid_argument);
  }
}

TEST_CASE("adapter round trip through a stub tool") {
  const TempDir tmp;
  const fs::path stub = tmp.path / "stub.sh";
  write_text_file(stub.string(),
                  "#!/bin/sh\n"
                  "grep -q '\"actions\"' \"$1\" || exit 3\n"
                  "printf '{\"L_h\":116.5e-12,\"R_ohm\":0.9,\"SRF_hz\":160e9,\"Q\":12.0}' > \"$2\"\n");
  fs::permissions(stub, fs::perms::owner_all);

  ExternalConfig cfg;
  cfg.command = stub.string() + " {request} {response}";
  cfg.work_dir = (tmp.path / "work").string();

  const Layout l = complete_layout();
  const Metrics m = external_adapter(l, cfg);
  CHECK(m.inductance == Catch::Approx(116.5e-12));
  CHECK(m.resistance == Catch::Approx(0.9));
  CHECK(m.srf == Catch::Approx(160e9));
  CHECK(m.q_factor == Catch::Approx(12.0));

  const MirrorOutcome full = mirror(l);
  REQUIRE(full.ok);
  CHECK(m.area == Catch::Approx(bounding_box_area(full.segments)));
}

TEST_CASE("adapter failure modes") {
  const TempDir tmp;
  const Layout l = complete_layout();
  ExternalConfig cfg;
  cfg.work_dir = (tmp.path / "work").string();

  SECTION("nonzero exit") {
    cfg.command = "exit 4";
    CHECK_THROWS_MATCHES(external_adapter(l, cfg), ExternalError,
                         Catch::Matchers::Predicate<ExternalError>([](const ExternalError& e) {
                           return e.kind == ExternalError::Kind::kToolFailure;
                         }));
  }
  SECTION("no response file") {
    cfg.command = "true";
    CHECK_THROWS_MATCHES(external_adapter(l, cfg), ExternalError,
                         Catch::Matchers::Predicate<ExternalError>([](const ExternalError& e) {
                           return e.kind == ExternalError::Kind::kToolFailure;
                         }));
  }
  SECTION("malformed response") {
    cfg.command = "printf 'not json' > {response}";
    CHECK_THROWS_MATCHES(external_adapter(l, cfg), ExternalError,
                         Catch::Matchers::Predicate<ExternalError>([](const ExternalError& e) {
                           return e.kind == ExternalError::Kind::kParse;
                         }));
  }
  SECTION("missing field") {
    cfg.command = "printf '{\"L_h\":1e-10}' > {response}";
    CHECK_THROWS_MATCHES(external_adapter(l, cfg), ExternalError,
                         Catch::Matchers::Predicate<ExternalError>([](const ExternalError& e) {
                           return e.kind == ExternalError::Kind::kParse;
                         }));
  }
  SECTION("timeout kills the tool") {
    cfg.command = "sleep 30";
    cfg.timeout_ms = 200;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_MATCHES(external_adapter(l, cfg), ExternalError,
                         Catch::Matchers::Predicate<ExternalError>([](const ExternalError& e) {
                           return e.kind == ExternalError::Kind::kTimeout;
                         }));
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    CHECK(elapsed < std::chrono::seconds(5));
  }
  SECTION("incomplete layout is a caller bug") {
    cfg.command = "true";
    CHECK_THROWS_AS(external_adapter(initial_layout(Canvas{}, Mode::kSymmetric), cfg),
                    std::logic_error);
  }
}
