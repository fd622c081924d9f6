#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"

namespace ioql {

/// Length-N input/output history of one agent, newest sample first:
/// own controls u_i(k-1..k-N), each neighbor's controls (ascending neighbor
/// order) and outputs y_i(k-1..k-N).
struct IoWindow {
  std::vector<Eigen::VectorXd> own_controls;
  std::vector<std::vector<Eigen::VectorXd>> neighbor_controls;
  std::vector<Eigen::VectorXd> outputs;
  long anchor_step = 0;

  std::size_t horizon() const { return outputs.size(); }

  /// own controls, then neighbor controls, then outputs.
  Eigen::VectorXd flatten() const;
};

/// Swarm-wide record of error outputs and applied controls, indexed by
/// absolute step. Outputs of step k are pushed before the controls of step k.
/// With a non-zero capacity only the most recent steps are retained.
class IoTrace {
 public:
  explicit IoTrace(std::size_t agents, std::size_t capacity = 0);

  void push_outputs(std::vector<Eigen::VectorXd> outputs);
  void push_controls(std::vector<Eigen::VectorXd> controls);
  void clear();

  std::size_t agent_count() const { return agents_; }
  /// One past the last step with recorded outputs / controls.
  long output_end() const { return first_ + static_cast<long>(outputs_.size()); }
  long control_end() const { return first_ + static_cast<long>(controls_.size()); }
  /// First step still retained.
  long first_step() const { return first_; }
  bool has_output(long k) const { return k >= first_ && k < output_end(); }
  bool has_control(long k) const { return k >= first_ && k < control_end(); }

  const Eigen::VectorXd& output(long k, std::size_t agent) const;
  const Eigen::VectorXd& control(long k, std::size_t agent) const;

  /// Window anchored at `anchor`: data from steps anchor-1 down to anchor-N.
  IoWindow window(std::size_t agent, std::span<const std::size_t> neighbors, long anchor,
                  std::size_t horizon) const;

 private:
  void trim();

  std::size_t agents_;
  std::size_t capacity_;
  long first_ = 0;
  std::deque<std::vector<Eigen::VectorXd>> outputs_;
  std::deque<std::vector<Eigen::VectorXd>> controls_;
};

/// Stacked matrices of the N-step expansion of the error dynamics:
///   e(k)        = A^N e(k-N) + B_N u_i + sum_j B_Nj u_j
///   y[k-1..k-N] = C_N e(k-N) + D_N u_i + sum_j D_Nj u_j
struct BlockMatrices {
  Eigen::MatrixXd observability;                 // C_N: rows C A^{N-1}, ..., C
  Eigen::MatrixXd own_reach;                     // B_N = [F, AF, ..., A^{N-1}F]
  std::vector<Eigen::MatrixXd> neighbor_reach;   // B_Nj
  Eigen::MatrixXd own_feedthrough;               // D_N
  std::vector<Eigen::MatrixXd> neighbor_feedthrough;  // D_Nj
  Eigen::MatrixXd a_power;                       // A^N
};

BlockMatrices build_block_matrices(const MasModel& model, std::size_t agent, std::size_t horizon);

/// e_i(k) = T_u u_i + sum_j T_uj u_j + T_y y_i over a length-N window.
struct EstimatorMatrices {
  Eigen::MatrixXd t_own;
  std::vector<Eigen::MatrixXd> t_neighbors;
  Eigen::MatrixXd t_output;
  std::size_t horizon = 0;

  /// [T_u, T_u1, ..., T_y], the linear map from a flattened window to e_i(k).
  Eigen::MatrixXd stacked() const;
};

/// Singular values of C_N at or below this are treated as zero.
inline constexpr double kObservabilityRankTol = 1e-9;

/// Throws RankDeficient when C_N lacks full column rank (N below the
/// observability index or (A, C_i) unobservable).
EstimatorMatrices build_estimator(const MasModel& model, std::size_t agent, std::size_t horizon);

Eigen::VectorXd reconstruct_error(const EstimatorMatrices& est, const IoWindow& window);

/// Smallest K with rank [C A^{K-1}; ...; C] = n. Throws NotObservable.
std::size_t observability_index(const MasModel& model, std::size_t agent);

/// Largest observability index over all agents.
std::size_t default_horizon(const MasModel& model);

/// T' P T: the data-space kernel whose quadratic form on windows equals e' P e.
Eigen::MatrixXd lift_kernel(const EstimatorMatrices& est, const Eigen::MatrixXd& p);

}  // namespace ioql
