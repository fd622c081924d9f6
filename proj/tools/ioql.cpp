// Command-line front end: learn, simulate, validate, demo-paper.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ioql/commands.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string scenario;
  std::string out;
  std::string gains;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<std::size_t> max_iters;
  std::string coupling;
};

void add_learn_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "RNG seed for probing noise and initial states");
  cmd->add_option("--epsilon", o.epsilon, "convergence threshold on the Frobenius kernel change")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", o.max_iters, "maximum outer iterations");
  cmd->add_option("--coupling", o.coupling, "current-control coupling: exact or delay")
      ->check(CLI::IsMember({"exact", "delay"}));
}

ioql::Overrides overrides(const Options& o) {
  ioql::Overrides ov;
  ov.seed = o.seed;
  ov.epsilon = o.epsilon;
  ov.max_iterations = o.max_iters;
  if (!o.coupling.empty()) ov.coupling = ioql::parse_coupling(o.coupling);
  return ov;
}

std::optional<fs::path> out_flag(const Options& o) {
  if (o.out.empty()) return std::nullopt;
  return fs::path(o.out);
}

ioql::Scenario scenario_from(const Options& o) {
  auto s = ioql::load_scenario(o.scenario);
  ioql::apply_overrides(s, overrides(o));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ioql: learn distributed consensus-tracking controllers from input/output data"};
  app.require_subcommand(1);
  Options o;

  auto* learn = app.add_subcommand("learn", "run data-based value iteration and write report, kernel trace and gains");
  learn->add_option("--scenario", o.scenario, "scenario file")->required();
  learn->add_option("--out", o.out, "output directory");
  add_learn_flags(learn, o);

  auto* simulate = app.add_subcommand("simulate", "closed-loop rollout under learned gains; writes trajectory.csv");
  simulate->add_option("--scenario", o.scenario, "scenario file")->required();
  simulate->add_option("--gains", o.gains, "gains file from learn")->required();
  simulate->add_option("--out", o.out, "output directory");

  auto* validate = app.add_subcommand("validate", "run the model-based oracle checks on learned gains");
  validate->add_option("--scenario", o.scenario, "scenario file")->required();
  validate->add_option("--gains", o.gains, "gains file from learn")->required();
  validate->add_option("--out", o.out, "output directory");

  auto* demo = app.add_subcommand("demo-paper", "learn, simulate and validate the built-in three-follower ring");
  demo->add_option("--out", o.out, "output directory");
  add_learn_flags(demo, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ioql::kExitOk : ioql::kExitParse;
  }

  try {
    if (learn->parsed()) {
      const auto s = scenario_from(o);
      return ioql::cmd_learn(s, ioql::resolve_out_dir(s, out_flag(o), "."), std::cout);
    }
    if (simulate->parsed()) {
      const auto s = scenario_from(o);
      const auto g = ioql::load_gains(o.gains);
      return ioql::cmd_simulate(s, g, ioql::resolve_out_dir(s, out_flag(o), "."), std::cout);
    }
    if (validate->parsed()) {
      const auto s = scenario_from(o);
      const auto g = ioql::load_gains(o.gains);
      return ioql::cmd_validate(s, g, ioql::resolve_out_dir(s, out_flag(o), "."), std::cout);
    }
    auto s = ioql::demo_scenario();
    ioql::apply_overrides(s, overrides(o));
    return ioql::cmd_demo(s, ioql::resolve_out_dir(s, out_flag(o), "demo-out"), std::cout);
  } catch (const ioql::Error& e) {
    std::cerr << "error (" << ioql::to_string(e.kind()) << "): " << e.what() << '\n';
    return ioql::exit_code_for(e.kind());
  }
}
