#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"
#include "ioql/estimator.hpp"
#include "ioql/qkernel.hpp"
#include "ioql/random.hpp"

namespace ioql {

/// u_i = -K_i e_i - sum_j L_ij u_j, solved jointly for the current controls.
struct StateFeedbackProfile {
  std::vector<Eigen::MatrixXd> k;
  std::vector<std::vector<Eigen::MatrixXd>> l;  // aligned with neighbors(graph, i)
};

/// Data-driven policies acting on I/O windows.
struct IoPolicyProfile {
  std::vector<PolicyGains> gains;
  CouplingMode mode = CouplingMode::Exact;
};

using PolicyProfile = std::variant<StateFeedbackProfile, IoPolicyProfile>;

std::unique_ptr<SwarmPolicy> make_policy(const MasModel& model, const PolicyProfile& profile);

/// Linear map e -> u of a state-feedback profile (stacked over agents).
/// Throws SingularCoupling.
Eigen::MatrixXd joint_feedback(const MasModel& model, const StateFeedbackProfile& profile);

/// One-step map of the closed loop on the stacked errors, augmented for I/O
/// policies with N-1 past outputs and max(N-1, 1) past controls per agent.
Eigen::MatrixXd closed_loop_matrix(const MasModel& model, const PolicyProfile& profile);

StateFeedbackProfile zero_state_feedback(const MasModel& model);

/// Minimizer of u'R u + e'_+ P e'_+ with neighbors' current controls held fixed.
StateFeedbackProfile greedy_state_feedback(const MasModel& model, const CostWeights& weights,
                                           const std::vector<Eigen::MatrixXd>& p);

struct ViResult {
  std::vector<std::vector<Eigen::MatrixXd>> trace;  // trace[s][i]; trace[0] is the start
  std::vector<Eigen::MatrixXd> p;
  StateFeedbackProfile policy;
  std::size_t iterations = 0;
};

/// Coupled value iteration on the error dynamics. Agent i's value update
/// evaluates one step with the other agents' errors at zero, so neighbors
/// enter only through the controls they play in response; without neighbors
/// this is plain Riccati value iteration. Throws NotConverged.
ViResult model_based_vi(const MasModel& model, const CostWeights& weights, std::size_t max_iter, double tol,
                        std::optional<std::vector<Eigen::MatrixXd>> initial = std::nullopt);

struct DareSolution {
  Eigen::MatrixXd p;
  Eigen::MatrixXd k;  // (R + F'PF)^{-1} F'PA
  std::size_t iterations = 0;
};

/// Riccati iteration from P = 0. Throws NotConverged when the iterates do not
/// settle (e.g. (A, F) not stabilizable).
DareSolution dare_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                        const Eigen::MatrixXd& r, double tol = 1e-13, std::size_t max_iter = 1000000);

/// Frobenius norm of Q + A'PA - A'PF (R + F'PF)^{-1} F'PA - P.
double riccati_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                        const Eigen::MatrixXd& r, const Eigen::MatrixXd& p);

struct BoundCheckConfig {
  double theta = 1.0;
  double alpha = 0.0;
  double beta = 1.0;
};

/// sup over (e, u) of e'_+ P e'_+ / (e'Q e + u'R u) with e_+ = Ae + Fu.
/// Throws HypothesisViolated when Q_eff is singular (unbounded ratio).
double estimate_theta(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                      const Eigen::MatrixXd& r, const Eigen::MatrixXd& p);

struct SandwichReport {
  bool holds = false;
  std::size_t iterations_checked = 0;
  double worst_lower_margin = 0.0;  // min over (s, e) of V^s - lower; negative means violated
  double worst_upper_margin = 0.0;  // min over (s, e) of upper - V^s
  double final_gap = 0.0;           // max over e of |V^last - J*|
};

/// Checks (1 + (alpha-1)/(1+1/theta)^s) J* <= V^s <= (1 + (beta-1)/(1+1/theta)^s) J*
/// for every iterate and test state. Throws HypothesisViolated when the
/// configuration or the start condition alpha J* <= V^0 <= beta J* fails.
SandwichReport check_sandwich_bounds(const std::vector<Eigen::MatrixXd>& vi_trace, const Eigen::MatrixXd& j_star,
                                       const BoundCheckConfig& cfg, const std::vector<Eigen::VectorXd>& test_states,
                                       double slack = 1e-8);

struct StabilityReport {
  double spectral_radius = 0.0;
  bool spectral_stable = false;
  bool monte_carlo_stable = false;
  std::size_t trials = 0;

  bool agree() const { return spectral_stable == monte_carlo_stable; }
  bool stable() const { return spectral_stable && monte_carlo_stable; }
};

/// Decay of every trial to 1e-6 of its initial error within `horizon` steps,
/// alongside the closed-loop spectral radius.
StabilityReport check_stability(const MasModel& model, const PolicyProfile& profile, std::size_t trials = 20,
                                std::size_t horizon = 500, std::uint64_t seed = 11);

struct NashConfig {
  std::size_t draws = 50;
  std::size_t initial_states = 20;
  std::size_t horizon = 500;
  double amplitude = 0.1;
  double rel_tol = 1e-6;
  std::uint64_t seed = 13;
};

struct NashReport {
  bool holds = false;
  double baseline_cost = 0.0;      // truncated J_i summed over the initial states
  double worst_improvement = 0.0;  // largest reduction of that sum by a perturbation
  double tolerance = 0.0;
  std::size_t unstable_perturbations = 0;  // counted as infinite cost
};

/// Unilateral multiplicative perturbations of agent i's gains, all other
/// policies fixed.
NashReport check_nash(const MasModel& model, const CostWeights& weights, const PolicyProfile& profile,
                      std::size_t agent, const NashConfig& cfg = {});

/// A window generated by the true error dynamics from a random e(k-N) with
/// random own and neighbor controls, and the error e_i(k) it leads to.
struct ConsistentWindow {
  IoWindow window;
  Eigen::VectorXd error;
};

ConsistentWindow random_consistent_window(const MasModel& model, std::size_t agent, std::size_t horizon, Rng& rng);

/// Least-squares K with u ~ -K e(k) for an agent without neighbors, fitted on
/// consistent windows. `fit_residual` is the largest absolute misfit.
struct EffectiveGain {
  Eigen::MatrixXd k;
  double fit_residual = 0.0;
};

EffectiveGain effective_state_gain(const MasModel& model, std::size_t agent, const PolicyGains& gains,
                                   std::size_t samples = 50, std::uint64_t seed = 17);

/// Worst reconstruction error of build_estimator/reconstruct_error against
/// the simulated e_i(k), for every agent and every k >= N of a run driven by
/// uniform random controls. Throws RankDeficient when N is too small.
struct EstimatorCheck {
  double max_abs_error = 0.0;
  double max_scaled_error = 0.0;  // |error| / (1 + |e_i(k)|)
  std::size_t windows = 0;
};

EstimatorCheck check_estimator(const MasModel& model, std::size_t horizon, std::size_t steps = 200,
                               std::uint64_t seed = 19, double amplitude = 1.0);

/// Agent i alone, pinned to the leader with b = 1 and no neighbors.
struct Reduction {
  MasModel model;
  CostWeights weights;
};

Reduction single_agent_reduction(const MasModel& model, const CostWeights& weights, std::size_t agent);

}  // namespace ioql
