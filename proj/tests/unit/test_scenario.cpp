#include <algorithm>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "ioql/commands.hpp"
#include "ioql/error.hpp"
#include "ioql/scenario.hpp"
#include "json.hpp"

using namespace ioql;
using nlohmann::json;

namespace {

json bundled() { return json::parse(read_text(fixtures::scenario_path("demo_ring.json"))); }

// Kind and message of the error a document raises.
std::pair<ErrorKind, std::string> rejection(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    return {e.kind(), e.what()};
  }
  FAIL("document was accepted");
  return {};
}

bool mentions(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

}  // namespace

TEST_CASE("bundled demo file is the built-in ring scenario") {
  const auto s = load_scenario(fixtures::scenario_path("demo_ring.json"));
  CHECK(s == demo_scenario());
  CHECK(s.model.agent_count() == 3);
  CHECK(s.learner.horizon == 2);
  CHECK(s.weights[0].r_self == fixtures::scalar(2.0));
  CHECK(s.weights[2].r_neighbor[0] == fixtures::scalar(0.1));
}

TEST_CASE("missing pinning is a validation error") {
  auto j = bundled();
  j["graph"]["pinning"] = json::array({0.0, 0.0, 0.0});
  const auto [kind, what] = rejection(j.dump());
  CHECK(kind == ErrorKind::ValidationError);
  CHECK(mentions(what, "no leader pinning"));
}

TEST_CASE("non-positive R_ii is a validation error") {
  auto j = bundled();
  j["weights"]["R_self"][1] = json::array({json::array({0.0})});
  const auto [kind, what] = rejection(j.dump());
  CHECK(kind == ErrorKind::ValidationError);
  CHECK(mentions(what, "R_ii not positive definite"));
}

TEST_CASE("disconnected follower graph is a validation error") {
  auto j = bundled();
  j["graph"]["adjacency"][0][2] = 0.0;
  const auto [kind, what] = rejection(j.dump());
  CHECK(kind == ErrorKind::ValidationError);
  CHECK(mentions(what, "strongly connected"));
}

TEST_CASE("malformed documents are parse errors naming the field") {
  CHECK(rejection("{ not json").first == ErrorKind::ParseError);
  auto j = bundled();
  j.erase("model");
  auto r = rejection(j.dump());
  CHECK(r.first == ErrorKind::ParseError);
  CHECK(mentions(r.second, "model"));

  j = bundled();
  j["model"]["A"] = json::array({json::array({1.0, 0.0}), json::array({1.0})});
  r = rejection(j.dump());
  CHECK(r.first == ErrorKind::ParseError);
  CHECK(mentions(r.second, "model.A"));

  j = bundled();
  j["learner"]["coupling"] = "sideways";
  CHECK(rejection(j.dump()).first != ErrorKind::Io);

  j = bundled();
  j["format"] = "something-else";
  CHECK(rejection(j.dump()).first == ErrorKind::ParseError);
}

TEST_CASE("dimension mismatches are rejected") {
  auto j = bundled();
  j["model"]["B"][0] = json::array({json::array({1.0})});
  CHECK_THROWS_AS(parse_scenario(j.dump()), Error);
}

TEST_CASE("scenario round trip") {
  auto s = demo_scenario();
  s.learner.coupling_mode = CouplingMode::Delay;
  s.learner.probe_mode = ProbeMode::Fresh;
  s.learner.rng_seed = 77;
  s.simulation.initial_followers = std::vector<Eigen::VectorXd>(3, Eigen::VectorXd{{0.25, -1.5}});
  s.simulation.initial_leader = Eigen::VectorXd{{1.0, 0.125}};
  const auto back = parse_scenario(serialize_scenario(s));
  CHECK(back == s);
  CHECK(serialize_scenario(back) == serialize_scenario(s));
}

TEST_CASE("gains round trip and compatibility") {
  auto s = demo_scenario();
  s.learner.max_iterations = 3;
  const auto out = run(s.model, s.weights, s.learner);
  const auto g = gains_from(out, CouplingMode::Exact);
  const auto back = parse_gains(serialize_gains(g));
  CHECK(back == g);
  CHECK_NOTHROW(check_gains_compatible(s, back));

  auto short_gains = back;
  short_gains.gains.pop_back();
  short_gains.kernels.pop_back();
  CHECK_THROWS_AS(check_gains_compatible(s, short_gains), Error);
}

TEST_CASE("file access errors are reported as I/O") {
  try {
    load_scenario("/nonexistent/dir/scenario.json");
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("coupling names") {
  CHECK(to_string(CouplingMode::Exact) == "exact");
  CHECK(parse_coupling("delay") == CouplingMode::Delay);
  CHECK_THROWS_AS(parse_coupling("later"), Error);
}

TEST_CASE("kernel trace has one row per upper-triangle entry") {
  auto s = demo_scenario();
  s.learner.max_iterations = 3;
  const auto report = run(s.model, s.weights, s.learner).report;
  const auto csv = kernel_trace_csv(report);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + 3 * 36 * static_cast<long>(report.iterations.size()));
}
