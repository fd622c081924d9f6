// Acceptance runner: one PASS/FAIL line per criterion. Exit status is zero
// only when every selected criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "ioql/commands.hpp"
#include "ioql/error.hpp"
#include "ioql/learner.hpp"
#include "ioql/oracle.hpp"
#include "ioql/scenario.hpp"

using namespace ioql;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

const LearningOutcome& demo_outcome() {
  static const LearningOutcome out = [] {
    const auto s = demo_scenario();
    return run(s.model, s.weights, s.learner);
  }();
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Learned gain and kernel of a lone agent against the Riccati solution.
struct LqrMatch {
  double gain_error = 0.0;
  double value_error = 0.0;
  bool converged = false;
};

LqrMatch lqr_match(const MasModel& model, const CostWeights& weights, LearnerConfig config) {
  config.convergence_epsilon = 1e-10;
  config.max_iterations = 500;
  const auto out = run(model, weights, config);
  const auto sys = error_system_matrices(model, 0);
  const Eigen::MatrixXd q_eff = model.c(0).transpose() * weights[0].q * model.c(0);
  const auto dare = dare_solve(model.a(), sys.f, q_eff, weights[0].r_self);
  LqrMatch m;
  m.converged = out.report.converged;
  const auto eff = effective_state_gain(model, 0, out.gains[0]);
  m.gain_error = (eff.k - dare.k).norm() / dare.k.norm();
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const auto cw = random_consistent_window(model, 0, out.report.horizon, rng);
    const double truth = cw.error.dot(dare.p * cw.error);
    m.value_error = std::max(m.value_error, rel(evaluate(out.kernels[0], cw.window.flatten()), truth));
  }
  return m;
}

Verdict c1() {
  const auto rep = check_estimator(fixtures::demo_model(), 2, 200);
  return {rep.max_abs_error <= 1e-8, "max abs error " + fmt(rep.max_abs_error) + " over " +
                                         std::to_string(rep.windows) + " windows (bound 1e-08)"};
}

Verdict c2() {
  const auto s = demo_scenario();
  const auto red = single_agent_reduction(s.model, s.weights, 0);
  LearnerConfig demo_cfg = s.learner;
  const auto a = lqr_match(red.model, red.weights, demo_cfg);
  LearnerConfig scalar_cfg;
  scalar_cfg.horizon = 1;
  scalar_cfg.samples_per_iteration = 20;
  const auto b = lqr_match(fixtures::scalar_model(), fixtures::scalar_weights(), scalar_cfg);
  const double worst_gain = std::max(a.gain_error, b.gain_error);
  const double worst_value = std::max(a.value_error, b.value_error);
  const bool ok = a.converged && b.converged && worst_gain <= 1e-3 && worst_value <= 1e-3;
  return {ok, "gain rel error " + fmt(worst_gain) + ", value rel error " + fmt(worst_value) + " (bound 1e-03)"};
}

Verdict c3() {
  const auto& out = demo_outcome();
  const auto s = demo_scenario();
  const auto sim = simulate(s, gains_from(out, CouplingMode::Exact));
  const bool ok = out.report.converged && out.report.iteration_count <= 40 && out.report.final_delta <= 1e-4 &&
                  sim.steps_to_consensus && *sim.steps_to_consensus <= 60;
  return {ok, std::to_string(out.report.iteration_count) + " iterations (bound 40), consensus after " +
                  (sim.steps_to_consensus ? std::to_string(*sim.steps_to_consensus) : std::string("never")) +
                  " steps (bound 60)"};
}

Verdict c4() {
  const auto model = fixtures::scalar_model();
  const auto weights = fixtures::scalar_weights();
  const auto vi = model_based_vi(model, weights, 10000, 1e-14);
  std::vector<Eigen::MatrixXd> trace;
  for (const auto& t : vi.trace) trace.push_back(t[0]);
  const auto f = error_system_matrices(model, 0).f;
  // J* from the Riccati iteration, independent of the trace under test.
  const Eigen::MatrixXd j_star = dare_solve(model.a(), f, weights[0].q, weights[0].r_self).p;
  const double theta = estimate_theta(model.a(), f, weights[0].q, weights[0].r_self, j_star);
  const std::vector<Eigen::VectorXd> states{Eigen::VectorXd{{1.0}}, Eigen::VectorXd{{-2.0}}, Eigen::VectorXd{{0.37}}};
  const auto rep = check_sandwich_bounds(trace, j_star, {theta, 0.0, 1.0}, states, 1e-8);
  return {rep.holds && rep.final_gap <= 1e-6,
          "theta " + fmt(theta) + ", " + std::to_string(rep.iterations_checked) + " iterates, margins " +
              fmt(rep.worst_lower_margin) + " / " + fmt(rep.worst_upper_margin) + ", final gap " + fmt(rep.final_gap)};
}

Verdict c5() {
  const auto s = demo_scenario();
  const IoPolicyProfile profile{demo_outcome().gains, CouplingMode::Exact};
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < s.model.agent_count(); ++i) {
    const auto rep = check_nash(s.model, s.weights, profile, i);
    ok = ok && rep.holds;
    detail += (i ? ", " : "") + std::string("agent ") + std::to_string(i + 1) + " best gain " +
              fmt(rep.worst_improvement) + " vs tol " + fmt(rep.tolerance);
  }
  return {ok, detail};
}

Verdict c6() {
  const auto s = demo_scenario();
  const auto rep = check_stability(s.model, IoPolicyProfile{demo_outcome().gains, CouplingMode::Exact});
  return {rep.stable() && rep.agree(), "spectral radius " + fmt(rep.spectral_radius) + ", Monte Carlo " +
                                           (rep.monte_carlo_stable ? "stable" : "unstable")};
}

Verdict c7() {
  double worst = 0.0;
  for (double r : demo_outcome().report.heldout_residuals) worst = std::max(worst, r);
  return {worst <= 1e-6, "held-out relative residual " + fmt(worst) + " (bound 1e-06)"};
}

Verdict c8(const std::optional<std::string>& cli) {
  const auto base = fs::temp_directory_path() / "ioql_acceptance_c8";
  fs::remove_all(base);
  const auto scenario = fixtures::scenario_path("demo_ring.json");
  for (const char* tag : {"a", "b"}) {
    const auto dir = base / tag;
    if (cli) {
      const std::string cmd = "\"" + *cli + "\" learn --scenario \"" + scenario + "\" --out \"" + dir.string() +
                              "\" > \"" + (base / (std::string(tag) + ".log")).string() + "\" 2>&1";
      fs::create_directories(base);
      if (std::system(cmd.c_str()) != 0) return {false, "learn run failed: " + cmd};
    } else {
      std::ostringstream log;
      if (cmd_learn(load_scenario(scenario), dir, log) != kExitOk) return {false, "learn run failed"};
    }
  }
  const auto a = read_text(base / "a" / "report.json");
  const auto b = read_text(base / "b" / "report.json");
  return {a == b, std::string(cli ? "CLI" : "in-process") + " reports of " + std::to_string(a.size()) + " bytes " +
                      (a == b ? "identical" : "differ")};
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;  // 0: no runtime bound
  std::function<Verdict()> body;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  std::optional<std::string> cli;
  app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
  app.add_option("--cli", cli, "path of the ioql executable for the determinism check");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "estimator exactness", 1.0, c1},
      {2, "single-agent LQR equivalence", 10.0, c2},
      {3, "demo convergence and consensus", 60.0, c3},
      {4, "value iteration sandwich", 1.0, c4},
      {5, "Nash property", 30.0, c5},
      {6, "closed-loop stability", 0.0, c6},
      {7, "held-out Bellman residual", 0.0, c7},
      {8, "determinism", 0.0, [&] { return c8(cli); }},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) {
      v.pass = false;
      v.detail += "; runtime over " + fmt(c.budget_s) + " s";
    }
    all = all && v.pass;
    std::printf("C%d %s %s: %s [%.2f s]\n", c.id, v.pass ? "PASS" : "FAIL", c.title, v.detail.c_str(), secs);
  }
  return all ? 0 : 1;
}
