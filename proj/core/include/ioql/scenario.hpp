#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"
#include "ioql/learner.hpp"
#include "ioql/qkernel.hpp"

namespace ioql {

struct SimulationSettings {
  std::size_t horizon = 100;
  std::uint64_t seed = 2024;
  std::optional<std::vector<Eigen::VectorXd>> initial_followers;
  std::optional<Eigen::VectorXd> initial_leader;

  friend bool operator==(const SimulationSettings& a, const SimulationSettings& b);
};

struct Scenario {
  MasModel model;
  CostWeights weights;
  LearnerConfig learner;
  SimulationSettings simulation;
  std::string output_dir;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Parses and validates a scenario document (JSON, see README). Throws
/// ParseError for malformed text or wrongly typed fields and ValidationError
/// for violated invariants; both name the offending field.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& s);

/// Three followers on a directed ring 1 -> 2 -> 3 -> 1, leader pinned to
/// follower 1, rotation dynamics, N = 2.
Scenario demo_scenario();

/// Initial swarm state: the explicit one if given, otherwise uniform on
/// [-1, 1] from the simulation seed.
SwarmState initial_state(const Scenario& s);

/// Learned policy plus the kernels it came from.
struct GainsFile {
  std::size_t horizon = 0;
  CouplingMode coupling = CouplingMode::Exact;
  std::vector<QKernel> kernels;
  std::vector<PolicyGains> gains;

  friend bool operator==(const GainsFile&, const GainsFile&) = default;
};

std::string serialize_gains(const GainsFile& g);
GainsFile parse_gains(std::string_view text);
GainsFile load_gains(const std::filesystem::path& path);

/// Throws ValidationError if the gains do not fit the scenario's layouts.
void check_gains_compatible(const Scenario& s, const GainsFile& g);

std::string serialize_report(const LearningReport& r);

/// iteration,agent,row,col,value with 1-based indices, upper triangle only.
std::string kernel_trace_csv(const LearningReport& r);

std::string_view to_string(CouplingMode mode);
CouplingMode parse_coupling(std::string_view text);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ioql
