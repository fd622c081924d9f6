#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "ioql/commands.hpp"
#include "ioql/error.hpp"

using namespace ioql;
namespace fs = std::filesystem;

namespace {

const LearningOutcome& demo_outcome() {
  static const LearningOutcome out = [] {
    const auto s = demo_scenario();
    return run(s.model, s.weights, s.learner);
  }();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ioql_test_" + name);
  fs::remove_all(p);
  return p;
}

const CheckResult* find_check(const ValidationReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code_for(ErrorKind::ParseError) == kExitParse);
  CHECK(exit_code_for(ErrorKind::ValidationError) == kExitValidation);
  CHECK(exit_code_for(ErrorKind::InvalidArgument) == kExitValidation);
  CHECK(exit_code_for(ErrorKind::NotConverged) == kExitNotConverged);
  CHECK(exit_code_for(ErrorKind::HypothesisViolated) == kExitCheckFailed);
  CHECK(exit_code_for(ErrorKind::RankDeficientData) == kExitNumerical);
  CHECK(exit_code_for(ErrorKind::Io) == kExitIo);
}

TEST_CASE("overrides replace scenario settings") {
  auto s = demo_scenario();
  apply_overrides(s, Overrides{5, 1e-3, 7, CouplingMode::Delay});
  CHECK(s.learner.rng_seed == 5);
  CHECK(s.learner.convergence_epsilon == 1e-3);
  CHECK(s.learner.max_iterations == 7);
  CHECK(s.learner.coupling_mode == CouplingMode::Delay);
  CHECK(resolve_out_dir(s, fs::path("x"), "y") == fs::path("x"));
  CHECK(resolve_out_dir(s, std::nullopt, "y") == fs::path("demo-out"));
  s.output_dir.clear();
  CHECK(resolve_out_dir(s, std::nullopt, "y") == fs::path("y"));
}

TEST_CASE("demo gains reach consensus and the trajectory is complete") {
  const auto s = demo_scenario();
  const auto res = simulate(s, gains_from(demo_outcome(), CouplingMode::Exact));
  REQUIRE(res.steps_to_consensus.has_value());
  CHECK(*res.steps_to_consensus <= 60);
  const auto lines = lines_of(res.csv);
  REQUIRE(lines.size() == 1 + 4 * s.simulation.horizon);
  CHECK(lines[0] == "k,agent,x1,x2,e1,e2,u1,leader1,leader2");
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto k = std::stoul(lines[r].substr(0, lines[r].find(',')));
    CHECK(k == (r - 1) / 4);
  }
}

TEST_CASE("zero gains never reach consensus on the rotation") {
  const auto s = demo_scenario();
  GainsFile zero{2, CouplingMode::Exact, {}, {}};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto layout = layout_for(s.model, i, 2);
    zero.kernels.emplace_back(layout);
    zero.gains.push_back(PolicyGains::zero(layout));
  }
  CHECK_FALSE(simulate(s, zero).steps_to_consensus.has_value());
}

TEST_CASE("followers starting on the leader stay on it") {
  auto s = demo_scenario();
  s.simulation.initial_leader = Eigen::VectorXd{{0.3, -0.7}};
  s.simulation.initial_followers = std::vector<Eigen::VectorXd>(3, *s.simulation.initial_leader);
  const auto res = simulate(s, gains_from(demo_outcome(), CouplingMode::Exact));
  CHECK(res.steps_to_consensus == std::optional<std::size_t>(0));
  const auto lines = lines_of(res.csv);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].find(",0,") == lines[r].find(',')) continue;  // leader row
    std::vector<std::string> cells;
    std::istringstream in(lines[r]);
    for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
    CHECK(std::stod(cells[4]) == 0.0);
    CHECK(std::stod(cells[5]) == 0.0);
    CHECK(std::stod(cells[6]) == 0.0);
  }
}

TEST_CASE("learn with no iterations reports not converged") {
  auto s = demo_scenario();
  s.learner.max_iterations = 0;
  std::ostringstream log;
  const auto dir = scratch("zero");
  CHECK(cmd_learn(s, dir, log) == kExitNotConverged);
  CHECK(fs::exists(dir / "report.json"));
}

TEST_CASE("learn writes byte-identical artifacts for a fixed seed") {
  const auto s = demo_scenario();
  std::ostringstream log;
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  REQUIRE(cmd_learn(s, a, log) == kExitOk);
  REQUIRE(cmd_learn(s, b, log) == kExitOk);
  for (const char* f : {"report.json", "kernel_trace.csv", "gains.json"}) {
    CHECK(read_text(a / f) == read_text(b / f));
  }
  const auto g = load_gains(a / "gains.json");
  CHECK(g == gains_from(demo_outcome(), CouplingMode::Exact));
}

TEST_CASE("corrupted gains fail the stability check") {
  const auto s = demo_scenario();
  auto g = gains_from(demo_outcome(), CouplingMode::Exact);
  for (auto& p : g.gains) {
    p.g_own_past = -p.g_own_past;
    p.g_neighbors = -p.g_neighbors;
    p.g_output = -p.g_output;
  }
  ValidateOptions opts;
  opts.nash_draws = 2;
  opts.nash_states = 2;
  opts.nash_horizon = 50;
  const auto rep = validate(s, g, opts);
  CHECK_FALSE(rep.passed());
  const auto* stab = find_check(rep, "stability");
  REQUIRE(stab != nullptr);
  CHECK(stab->status == CheckStatus::Fail);
  CHECK(serialize_validation(rep).find("\"stability\"") != std::string::npos);
}

TEST_CASE("validation of the demo runs every check") {
  const auto s = demo_scenario();
  ValidateOptions opts;
  opts.nash_draws = 3;
  opts.nash_states = 3;
  opts.nash_horizon = 100;
  const auto rep = validate(s, gains_from(demo_outcome(), CouplingMode::Exact), opts);
  for (const char* name : {"estimator_exactness", "stability", "sandwich_reduction_agent_1", "nash_agent_3"}) {
    CHECK_MESSAGE(find_check(rep, name) != nullptr, name);
  }
  CHECK(find_check(rep, "estimator_exactness")->status == CheckStatus::Pass);
  CHECK(find_check(rep, "stability")->status == CheckStatus::Pass);
  CHECK(find_check(rep, "sandwich_reduction_agent_2")->status == CheckStatus::Pass);
}

TEST_CASE("horizon below the observability index fails the estimator check") {
  auto s = demo_scenario();
  s = Scenario{MasModel(fixtures::rotation(), {Eigen::MatrixXd{{1}, {0.5}}}, {Eigen::MatrixXd{{1, 0}}}, fixtures::lone_pinned()),
               {AgentWeights{Eigen::MatrixXd::Identity(1, 1), fixtures::scalar(1.0), {}}},
               s.learner,
               s.simulation,
               ""};
  s.learner.horizon = 1;
  GainsFile g{1, CouplingMode::Exact, {}, {}};
  const auto layout = layout_for(s.model, 0, 1);
  g.kernels.emplace_back(layout);
  g.gains.push_back(PolicyGains::zero(layout));
  ValidateOptions opts;
  opts.nash_draws = 1;
  opts.nash_states = 1;
  opts.nash_horizon = 10;
  const auto rep = validate(s, g, opts);
  const auto* est = find_check(rep, "estimator_exactness");
  REQUIRE(est != nullptr);
  CHECK(est->status == CheckStatus::Fail);
  CHECK(est->detail.find("RankDeficient") != std::string::npos);
}
