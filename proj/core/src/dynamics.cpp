#include "ioql/dynamics.hpp"

#include <algorithm>
#include <string>

#include "ioql/error.hpp"
#include "ioql/linalg.hpp"
#include "ioql/random.hpp"

namespace ioql {

namespace {

constexpr double kStructuralRankTol = 1e-9;

std::string agent_label(std::size_t i) { return "agent " + std::to_string(i + 1); }

void check_agent(const MasModel& model, std::size_t i) {
  require(i < model.agent_count(), ErrorKind::InvalidArgument,
          "agent index " + std::to_string(i) + " out of range");
}

void check_size(const Eigen::VectorXd& v, std::size_t n, const std::string& what) {
  require(static_cast<std::size_t>(v.size()) == n, ErrorKind::InvalidArgument,
          what + ": expected dimension " + std::to_string(n) + ", got " +
              std::to_string(v.size()));
}

}  // namespace

MasModel::MasModel(Eigen::MatrixXd a, std::vector<Eigen::MatrixXd> b,
                   std::vector<Eigen::MatrixXd> c, Digraph graph)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), graph_(std::move(graph)) {
  require(a_.rows() == a_.cols() && a_.rows() > 0, ErrorKind::InvalidArgument,
          "A must be a non-empty square matrix");
  require(b_.size() == graph_.node_count(), ErrorKind::InvalidArgument,
          "one B matrix per graph node required");
  require(c_.size() == graph_.node_count(), ErrorKind::InvalidArgument,
          "one C matrix per graph node required");
  for (std::size_t i = 0; i < b_.size(); ++i) {
    require(b_[i].rows() == a_.rows() && b_[i].cols() > 0, ErrorKind::InvalidArgument,
            "B of " + agent_label(i) + " must have n rows and at least one column");
    require(c_[i].cols() == a_.rows() && c_[i].rows() > 0, ErrorKind::InvalidArgument,
            "C of " + agent_label(i) + " must have n columns and at least one row");
  }
}

bool operator==(const MasModel& lhs, const MasModel& rhs) {
  return identical(lhs.a_, rhs.a_) && identical(lhs.b_, rhs.b_) && identical(lhs.c_, rhs.c_) &&
         lhs.graph_ == rhs.graph_;
}

bool operator==(const AgentWeights& lhs, const AgentWeights& rhs) {
  return identical(lhs.q, rhs.q) && identical(lhs.r_self, rhs.r_self) &&
         identical(lhs.r_neighbor, rhs.r_neighbor);
}

std::vector<std::string> MasModel::structural_warnings() const {
  std::vector<std::string> out;
  const std::size_t n = state_dim();
  for (std::size_t i = 0; i < agent_count(); ++i) {
    if (numerical_rank(controllability_matrix(a_, b_[i]), kStructuralRankTol) < n) {
      out.push_back("(A, B) of " + agent_label(i) + " is not reachable");
    }
    if (numerical_rank(observability_matrix(a_, c_[i]), kStructuralRankTol) < n) {
      out.push_back("(A, C) of " + agent_label(i) + " is not observable");
    }
  }
  return out;
}

void validate_weights(const MasModel& model, const CostWeights& weights, bool allow_semidefinite_q) {
  require(weights.size() == model.agent_count(), ErrorKind::ValidationError,
          "weights: one entry per agent required");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& w = weights[i];
    const std::string at = "[" + std::to_string(i + 1) + "]";
    const auto q = static_cast<Eigen::Index>(model.output_dim(i));
    const auto m = static_cast<Eigen::Index>(model.control_dim(i));
    require(w.q.rows() == q && w.q.cols() == q, ErrorKind::ValidationError,
            "weights.Q" + at + ": expected " + std::to_string(q) + "x" + std::to_string(q));
    if (allow_semidefinite_q) {
      require(w.q.isApprox(w.q.transpose()) && w.q.allFinite() &&
                  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(symmetrize(w.q)).eigenvalues().minCoeff() >= -1e-12,
              ErrorKind::ValidationError, "weights.Q" + at + ": Q_ii not positive semidefinite");
    } else {
      require(is_symmetric_positive_definite(w.q), ErrorKind::ValidationError,
              "weights.Q" + at + ": Q_ii not positive definite");
    }
    require(w.r_self.rows() == m && w.r_self.cols() == m, ErrorKind::ValidationError,
            "weights.R_self" + at + ": expected " + std::to_string(m) + "x" + std::to_string(m));
    require(is_symmetric_positive_definite(w.r_self), ErrorKind::ValidationError,
            "weights.R_self" + at + ": R_ii not positive definite");
    const auto nb = neighbors(model.graph(), i);
    require(w.r_neighbor.size() == nb.size(), ErrorKind::ValidationError,
            "weights.R_neighbor" + at + ": one R_ij per neighbor required");
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const auto mj = static_cast<Eigen::Index>(model.control_dim(nb[k]));
      const std::string pair = "[" + std::to_string(i + 1) + "," + std::to_string(nb[k] + 1) + "]";
      require(w.r_neighbor[k].rows() == mj && w.r_neighbor[k].cols() == mj,
              ErrorKind::ValidationError, "weights.R_neighbor" + pair + ": wrong shape");
      require(is_symmetric_positive_definite(w.r_neighbor[k]), ErrorKind::ValidationError,
              "weights.R_neighbor" + pair + ": R_ij not positive definite");
    }
  }
}

SwarmState random_state(const MasModel& model, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  SwarmState s;
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    s.followers.push_back(rng.uniform_vector(n, -1.0, 1.0));
  }
  s.leader = rng.uniform_vector(n, -1.0, 1.0);
  return s;
}

SwarmState step(const MasModel& model, const SwarmState& state,
                std::span<const Eigen::VectorXd> controls) {
  require(controls.size() == model.agent_count(), ErrorKind::InvalidArgument,
          "one control vector per agent required");
  require(state.followers.size() == model.agent_count(), ErrorKind::InvalidArgument,
          "state has wrong number of followers");
  SwarmState next;
  next.followers.reserve(model.agent_count());
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    check_size(controls[i], model.control_dim(i), "control of " + agent_label(i));
    check_size(state.followers[i], model.state_dim(), "state of " + agent_label(i));
    next.followers.push_back(model.a() * state.followers[i] + model.b(i) * controls[i]);
  }
  check_size(state.leader, model.state_dim(), "leader state");
  next.leader = model.a() * state.leader;
  next.step = state.step + 1;
  return next;
}

Eigen::VectorXd tracking_error(const MasModel& model, const SwarmState& state, std::size_t i) {
  check_agent(model, i);
  const auto& g = model.graph();
  const auto& xi = state.followers.at(i);
  Eigen::VectorXd e = g.pinning(i) * (xi - state.leader);
  for (std::size_t j : neighbors(g, i)) {
    e += g.weight(i, j) * (xi - state.followers.at(j));
  }
  return e;
}

std::vector<Eigen::VectorXd> tracking_errors(const MasModel& model, const SwarmState& state) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(model.agent_count());
  for (std::size_t i = 0; i < model.agent_count(); ++i) out.push_back(tracking_error(model, state, i));
  return out;
}

ErrorSystem error_system_matrices(const MasModel& model, std::size_t i) {
  check_agent(model, i);
  const auto& g = model.graph();
  ErrorSystem sys;
  sys.f = (in_degree(g, i) + g.pinning(i)) * model.b(i);
  sys.neighbors = neighbors(g, i);
  for (std::size_t j : sys.neighbors) sys.e.push_back(-g.weight(i, j) * model.b(j));
  return sys;
}

Eigen::VectorXd error_output(const MasModel& model, std::size_t i, const Eigen::VectorXd& e) {
  check_agent(model, i);
  check_size(e, model.state_dim(), "tracking error");
  return model.c(i) * e;
}

double stage_cost(const AgentWeights& w, const Eigen::VectorXd& y, const Eigen::VectorXd& u,
                  std::span<const Eigen::VectorXd> neighbor_controls) {
  require(y.size() == w.q.rows(), ErrorKind::InvalidArgument, "output dimension mismatch");
  require(u.size() == w.r_self.rows(), ErrorKind::InvalidArgument, "control dimension mismatch");
  require(neighbor_controls.size() == w.r_neighbor.size(), ErrorKind::InvalidArgument,
          "neighbor control count mismatch");
  double cost = y.dot(w.q * y) + u.dot(w.r_self * u);
  for (std::size_t k = 0; k < neighbor_controls.size(); ++k) {
    require(neighbor_controls[k].size() == w.r_neighbor[k].rows(), ErrorKind::InvalidArgument,
            "neighbor control dimension mismatch");
    cost += neighbor_controls[k].dot(w.r_neighbor[k] * neighbor_controls[k]);
  }
  return cost;
}

RolloutResult rollout_cost(const MasModel& model, const CostWeights& weights, SwarmPolicy& policy,
                           const SwarmState& initial, std::size_t horizon, std::size_t agent) {
  check_agent(model, agent);
  require(horizon >= 1, ErrorKind::InvalidArgument, "rollout horizon must be at least 1");
  require(weights.size() == model.agent_count(), ErrorKind::InvalidArgument,
          "weights: one entry per agent required");

  const auto nb = neighbors(model.graph(), agent);
  RolloutResult result;
  result.horizon = horizon;
  result.warmup = policy.warmup_steps();

  policy.reset();
  SwarmState state = initial;
  std::vector<Eigen::VectorXd> nb_controls(nb.size());
  const std::size_t total = result.warmup + horizon;
  for (std::size_t k = 0; k < total; ++k) {
    const auto errors = tracking_errors(model, state);
    std::vector<Eigen::VectorXd> outputs;
    outputs.reserve(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) outputs.push_back(model.c(i) * errors[i]);

    std::vector<Eigen::VectorXd> u;
    if (k < result.warmup) {
      for (std::size_t i = 0; i < model.agent_count(); ++i) {
        u.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.control_dim(i))));
      }
      policy.act({state.step, errors, outputs});
    } else {
      u = policy.act({state.step, errors, outputs});
      for (std::size_t k2 = 0; k2 < nb.size(); ++k2) nb_controls[k2] = u[nb[k2]];
      result.cost += stage_cost(weights[agent], outputs[agent], u[agent], nb_controls);
    }
    policy.record_applied(u);
    state = step(model, state, u);
  }
  double emax = 0.0;
  for (const auto& e : tracking_errors(model, state)) emax = std::max(emax, e.norm());
  result.final_error_norm = emax;
  return result;
}

}  // namespace ioql
