#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"
#include "ioql/estimator.hpp"
#include "ioql/qkernel.hpp"

namespace ioql {

enum class DataMode {
  FreshPerIteration,  // record a new batch under the current policies each iteration
  ReuseBatch,         // record once under the initial policies, relabel every iteration
};

enum class ProbeMode {
  Fixed,  // same initial state and probing sequence every iteration
  Fresh,  // new draws every iteration
};

struct LearnerConfig {
  std::size_t horizon = 0;               // 0: largest observability index
  double exploration_amplitude = 0.1;    // probing noise is uniform on [-a, a]
  std::size_t samples_per_iteration = 0; // 0: max_i d_i (d_i + 1)
  double convergence_epsilon = 1e-4;
  std::size_t max_iterations = 100;
  double ridge_lambda = 1e-12;
  double rank_rcond = 1e-9;              // relative singular-value cutoff of the regression
  std::uint64_t rng_seed = 1;
  CouplingMode coupling_mode = CouplingMode::Exact;
  DataMode data_mode = DataMode::FreshPerIteration;
  ProbeMode probe_mode = ProbeMode::Fixed;
  std::size_t heldout_samples = 0;       // 0: same as samples_per_iteration
  bool parallel = true;
  std::optional<std::vector<QKernel>> initial_kernels;

  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

/// Throws InvalidArgument on non-positive tolerances or amplitudes.
void validate_config(const LearnerConfig& config);

std::size_t resolve_horizon(const MasModel& model, const LearnerConfig& config);
std::size_t resolve_sample_count(const MasModel& model, const LearnerConfig& config);

/// One Bellman sample of agent i at step k.
struct Sample {
  long step = 0;
  Eigen::VectorXd w_now;          // w̄_i[k-1,k-N]
  Eigen::VectorXd w_next;         // w̄_i[k,k-N+1] as recorded (probing included)
  Eigen::VectorXd w_next_policy;  // same with u_i(k), u_j(k) replaced by the policy's controls
  Eigen::VectorXd output;         // y_i(k)
  Eigen::VectorXd control;        // applied u_i(k)
  Eigen::VectorXd policy_control; // noise-free policy u_i(k)
  std::vector<Eigen::VectorXd> neighbor_policy_controls;
};

/// r_i(k) evaluated on the policy's controls.
double sample_reward(const Sample& s, const AgentWeights& w);

/// A recorded closed-loop run: N warm-up steps of pure probing followed by
/// `count` sampled steps.
struct RecordedRun {
  IoTrace trace;
  std::size_t horizon = 0;
  long first_sample = 0;
  std::size_t count = 0;
};

RecordedRun record_run(const MasModel& model, const JointPolicy& policy, std::size_t horizon, double amplitude,
                       std::size_t count, std::uint64_t state_seed, std::uint64_t noise_seed);

/// Per-agent samples of a run, labelled with `policy`.
std::vector<std::vector<Sample>> build_samples(const MasModel& model, const RecordedRun& run,
                                               const JointPolicy& policy);

/// Data richness of one agent's sample set.
struct Excitation {
  std::size_t window_rank = 0;    // rank of the stacked w_now rows
  std::size_t control_rank = 0;   // rank of their control columns
  std::size_t control_width = 0;  // required control rank
  std::size_t feature_rank = 0;   // rank of the quadratic features
  std::size_t required_features = 0;  // r(r+1)/2 for window rank r

  bool sufficient() const { return control_rank == control_width && feature_rank >= required_features; }
};

Excitation excitation(const std::vector<Sample>& samples, const KernelLayout& layout, double rcond);

/// Throws RankDeficientData naming the agent when excitation is insufficient.
void require_excitation(const Excitation& ex, std::size_t agent);

/// Records under `policy` plus probing and returns per-agent samples. An empty
/// count yields empty sets; otherwise every agent's set must be sufficiently
/// exciting.
std::vector<std::vector<Sample>> collect_samples(const MasModel& model, const JointPolicy& policy,
                                                 const LearnerConfig& config, std::size_t count,
                                                 std::uint64_t state_seed, std::uint64_t noise_seed);

/// Orthonormal coordinates of w w' in the symmetric-matrix space: squares on
/// the diagonal, sqrt(2) w_a w_b above it (row-major upper triangle).
Eigen::VectorXd quadratic_features(const Eigen::VectorXd& w);
QKernel kernel_from_features(const KernelLayout& layout, const Eigen::VectorXd& theta);

struct ValueUpdate {
  QKernel kernel;
  Excitation excitation;
  double max_residual = 0.0;  // in-sample, relative to 1 + |target|
};

/// Least-squares solve of w_now' P̄ w_now = r + w_next_policy' P̄_prev w_next_policy.
/// Directions the data cannot see get the minimum-norm (zero) component.
ValueUpdate value_update(const std::vector<Sample>& samples, const QKernel& kernel_prev, const AgentWeights& w,
                         const LearnerConfig& config, std::size_t agent = 0);

PolicyGains policy_improvement(const QKernel& kernel, const AgentWeights& w);

/// |lhs - target| / (1 + |target|) per sample, target built from `kernel` itself.
std::vector<double> bellman_residuals(const std::vector<Sample>& samples, const QKernel& kernel,
                                      const AgentWeights& w);

struct IterationRecord {
  std::size_t index = 0;  // 1-based
  std::vector<QKernel> kernels;
  std::vector<double> deltas;
  double max_delta = 0.0;
  std::vector<std::size_t> feature_ranks;
  std::vector<std::size_t> window_ranks;
  std::vector<double> train_residuals;
};

struct LearningReport {
  LearnerConfig config;
  std::size_t horizon = 0;
  std::size_t samples_per_iteration = 0;
  std::vector<KernelLayout> layouts;
  std::vector<IterationRecord> iterations;
  std::size_t iteration_count = 0;
  bool converged = false;
  double final_delta = 0.0;
  std::vector<double> heldout_residuals;  // max per agent
};

struct LearningOutcome {
  LearningReport report;
  std::vector<QKernel> kernels;
  std::vector<PolicyGains> gains;
};

/// Data-based value iteration from P̄ = 0 (or the configured kernels) until the
/// largest Frobenius kernel change is at most epsilon. A run that exhausts
/// max_iterations returns with converged = false.
LearningOutcome run(const MasModel& model, const CostWeights& weights, const LearnerConfig& config);

}  // namespace ioql
