#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ioql/error.hpp"
#include "ioql/oracle.hpp"
#include "ioql/scenario.hpp"

namespace ioql {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 1,
  kExitValidation = 2,
  kExitNotConverged = 3,
  kExitCheckFailed = 4,
  kExitNumerical = 5,  // rank, gain or coupling failure during a run
  kExitIo = 6,
};

int exit_code_for(ErrorKind kind);

/// Command-line overrides applied on top of a scenario.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<std::size_t> max_iterations;
  std::optional<CouplingMode> coupling;
};

void apply_overrides(Scenario& s, const Overrides& o);

/// Output directory: explicit, else the scenario's, else `fallback`.
std::filesystem::path resolve_out_dir(const Scenario& s, const std::optional<std::filesystem::path>& out,
                                      const std::filesystem::path& fallback);

GainsFile gains_from(const LearningOutcome& outcome, CouplingMode mode);

/// Learns and writes report.json, kernel_trace.csv and gains.json.
int cmd_learn(const Scenario& s, const std::filesystem::path& out_dir, std::ostream& log);

struct SimulationResult {
  std::string csv;
  std::optional<std::size_t> steps_to_consensus;  // first k with max_i |x_i - x_0| <= 1e-2
  std::size_t horizon = 0;
};

SimulationResult simulate(const Scenario& s, const GainsFile& gains);

/// Writes trajectory.csv and prints the steps to consensus.
int cmd_simulate(const Scenario& s, const GainsFile& gains, const std::filesystem::path& out_dir, std::ostream& log);

enum class CheckStatus { Pass, Fail, Skipped };

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::Skipped;
  double metric = 0.0;     // worst observed value
  double threshold = 0.0;  // pass bound for `metric`
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool passed() const;
};

struct ValidateOptions {
  std::size_t nash_draws = 50;
  std::size_t nash_states = 20;
  std::size_t nash_horizon = 500;
};

/// Estimator exactness, model-based VI and DARE cross-checks, the value
/// iteration sandwich on each single-agent reduction, stability and Nash.
/// A failing check never aborts the others.
ValidationReport validate(const Scenario& s, const GainsFile& gains, const ValidateOptions& opts = {});

std::string serialize_validation(const ValidationReport& r);

/// Writes validation.json; exit 4 if any check fails.
int cmd_validate(const Scenario& s, const GainsFile& gains, const std::filesystem::path& out_dir, std::ostream& log);

/// learn, simulate and validate on the built-in ring scenario.
int cmd_demo(Scenario s, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace ioql
