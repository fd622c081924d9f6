#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ioql/graph.hpp"

namespace ioql {

/// Heterogeneous followers x_i(k+1) = A x_i + B_i u_i sharing the leader's A,
/// with per-agent error outputs y_i = C_i e_i. Ground truth for simulation and
/// the oracle suite; the learner only sees what the simulator emits.
class MasModel {
 public:
  /// Throws InvalidArgument on inconsistent dimensions.
  MasModel(Eigen::MatrixXd a, std::vector<Eigen::MatrixXd> b, std::vector<Eigen::MatrixXd> c,
           Digraph graph);

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b(std::size_t i) const { return b_.at(i); }
  const Eigen::MatrixXd& c(std::size_t i) const { return c_.at(i); }
  const std::vector<Eigen::MatrixXd>& b_matrices() const { return b_; }
  const std::vector<Eigen::MatrixXd>& c_matrices() const { return c_; }
  const Digraph& graph() const { return graph_; }

  std::size_t agent_count() const { return b_.size(); }
  std::size_t state_dim() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t control_dim(std::size_t i) const { return static_cast<std::size_t>(b_.at(i).cols()); }
  std::size_t output_dim(std::size_t i) const { return static_cast<std::size_t>(c_.at(i).rows()); }

  /// Reachability of (A, B_i) / observability of (A, C_i) problems, as
  /// human-readable warnings. Rank uses a 1e-9 singular-value threshold.
  std::vector<std::string> structural_warnings() const;

  friend bool operator==(const MasModel& lhs, const MasModel& rhs);

 private:
  Eigen::MatrixXd a_;
  std::vector<Eigen::MatrixXd> b_;
  std::vector<Eigen::MatrixXd> c_;
  Digraph graph_;
};

/// Q_ii, R_ii and R_ij of one agent. `r_neighbor` is aligned with
/// `neighbors(graph, i)` (ascending).
struct AgentWeights {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r_self;
  std::vector<Eigen::MatrixXd> r_neighbor;

  friend bool operator==(const AgentWeights& lhs, const AgentWeights& rhs);
};

using CostWeights = std::vector<AgentWeights>;

/// Throws ValidationError naming the offending weight when a matrix has the
/// wrong shape or is not symmetric positive definite. Oracles may relax Q_ii
/// to positive semidefinite.
void validate_weights(const MasModel& model, const CostWeights& weights, bool allow_semidefinite_q = false);

struct SwarmState {
  std::vector<Eigen::VectorXd> followers;
  Eigen::VectorXd leader;
  long step = 0;
};

/// Uniform on [-1, 1]^n for every follower and the leader.
SwarmState random_state(const MasModel& model, std::uint64_t seed);

SwarmState step(const MasModel& model, const SwarmState& state,
                std::span<const Eigen::VectorXd> controls);

Eigen::VectorXd tracking_error(const MasModel& model, const SwarmState& state, std::size_t i);
std::vector<Eigen::VectorXd> tracking_errors(const MasModel& model, const SwarmState& state);

/// e_i(k+1) = A e_i + F_i u_i + sum_j E_ij u_j.
struct ErrorSystem {
  Eigen::MatrixXd f;
  std::vector<std::size_t> neighbors;
  std::vector<Eigen::MatrixXd> e;  // aligned with `neighbors`
};

ErrorSystem error_system_matrices(const MasModel& model, std::size_t i);

Eigen::VectorXd error_output(const MasModel& model, std::size_t i, const Eigen::VectorXd& e);

double stage_cost(const AgentWeights& w, const Eigen::VectorXd& y, const Eigen::VectorXd& u,
                  std::span<const Eigen::VectorXd> neighbor_controls);

/// What a closed-loop controller sees at step k. State-feedback oracles read
/// `errors`; data-driven policies only read `outputs`.
struct SwarmObservation {
  long step = 0;
  std::span<const Eigen::VectorXd> errors;
  std::span<const Eigen::VectorXd> outputs;
};

class SwarmPolicy {
 public:
  virtual ~SwarmPolicy() = default;

  virtual void reset() = 0;
  /// Controls u_i(k) for every agent.
  virtual std::vector<Eigen::VectorXd> act(const SwarmObservation& obs) = 0;
  /// Controls actually applied at the last `act` (e.g. with probing noise).
  virtual void record_applied(std::span<const Eigen::VectorXd> applied) = 0;
  /// Zero-control steps needed before `act` is meaningful (history fill).
  virtual std::size_t warmup_steps() const { return 0; }
};

struct RolloutResult {
  double cost = 0.0;
  std::size_t horizon = 0;       // number of accumulated stage costs
  std::size_t warmup = 0;        // zero-control steps run before accumulation
  double final_error_norm = 0.0; // max_i |e_i| after the last step
};

/// Finite-horizon truncation of agent i's cost under a closed-loop policy.
/// The policy's warm-up steps run first with zero control and no cost.
RolloutResult rollout_cost(const MasModel& model, const CostWeights& weights, SwarmPolicy& policy,
                           const SwarmState& initial, std::size_t horizon, std::size_t agent);

}  // namespace ioql
