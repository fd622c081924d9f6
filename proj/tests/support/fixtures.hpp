#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"
#include "ioql/graph.hpp"
#include "ioql/scenario.hpp"

namespace fixtures {

inline Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

inline Eigen::MatrixXd rotation() { return Eigen::MatrixXd{{0.0, 1.0}, {-1.0, 0.0}}; }

inline ioql::Digraph lone_pinned() { return ioql::Digraph(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)); }

/// Directed ring a_13 = a_21 = a_32 = 1, leader pinned to node 1.
inline ioql::Digraph ring() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 2) = a(1, 0) = a(2, 1) = 1.0;
  return ioql::Digraph(a, Eigen::VectorXd{{1.0, 0.0, 0.0}});
}

/// x(k+1) = 0.5 x + u, y = e, Q = R = 1.
inline ioql::MasModel scalar_model() { return ioql::MasModel(scalar(0.5), {scalar(1.0)}, {scalar(1.0)}, lone_pinned()); }

inline ioql::CostWeights scalar_weights() { return {ioql::AgentWeights{scalar(1.0), scalar(1.0), {}}}; }

inline ioql::MasModel demo_model() { return ioql::demo_scenario().model; }
inline ioql::CostWeights demo_weights() { return ioql::demo_scenario().weights; }

inline std::string scenario_path(const std::string& name) { return std::string(IOQL_SCENARIO_DIR) + "/" + name; }

}  // namespace fixtures
