#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ioql/dynamics.hpp"
#include "ioql/estimator.hpp"

namespace ioql {

/// Coordinates of the flattened data vector w̄_i: own controls first, then
/// each neighbor's controls (ascending neighbor order), then outputs. Every
/// block is N samples long, newest first.
struct KernelLayout {
  std::size_t own_dim = 0;
  std::vector<std::size_t> neighbor_dims;
  std::size_t output_dim = 0;
  std::size_t horizon = 0;

  std::size_t total_dim() const;
  std::size_t neighbor_offset(std::size_t j) const;
  std::size_t output_offset() const;
  /// Width of own plus neighbor control blocks.
  std::size_t control_width() const { return output_offset(); }
  /// Number of independent entries of a symmetric d x d kernel.
  std::size_t unknowns() const { return total_dim() * (total_dim() + 1) / 2; }

  friend bool operator==(const KernelLayout&, const KernelLayout&) = default;
};

KernelLayout layout_for(const MasModel& model, std::size_t agent, std::size_t horizon);

/// Symmetric kernel P̄_i. Only the upper triangle of the input is read; the
/// lower triangle is its mirror, so symmetry is exact.
class QKernel {
 public:
  explicit QKernel(KernelLayout layout);
  QKernel(KernelLayout layout, const Eigen::MatrixXd& matrix);

  /// Row-major upper triangle, d(d+1)/2 entries.
  static QKernel from_upper(KernelLayout layout, std::span<const double> upper);
  std::vector<double> upper_triangle() const;

  const KernelLayout& layout() const { return layout_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  std::size_t dim() const { return static_cast<std::size_t>(matrix_.rows()); }

  friend bool operator==(const QKernel& a, const QKernel& b);

 private:
  KernelLayout layout_;
  Eigen::MatrixXd matrix_;
};

double evaluate(const QKernel& kernel, const Eigen::VectorXd& w);

/// The first m_i rows of P̄_i cut along the data layout.
struct KernelBlocks {
  Eigen::MatrixXd p_uu;         // m x m
  Eigen::MatrixXd p_own_past;   // m x m(N-1)
  Eigen::MatrixXd p_neighbors;  // m x sum_j m_j N
  Eigen::MatrixXd p_outputs;    // m x qN
};

KernelBlocks extract_blocks(const QKernel& kernel);

/// Linear policy u_i(k) = g_own_past ū_i[k-1,k-N+1] + g_neighbors Ū_j[k,k-N+1]
///                       + g_output ȳ_i[k,k-N+1].
struct PolicyGains {
  KernelLayout layout;
  Eigen::MatrixXd g_own_past;
  Eigen::MatrixXd g_neighbors;
  Eigen::MatrixXd g_output;
  Eigen::MatrixXd inverted_term;  // (R_ii + p_uu)^{-1}

  /// Zero policy for the given layout.
  static PolicyGains zero(KernelLayout layout);

  /// Columns of g_neighbors that multiply u_j(k) / u_j(k-1..k-N+1).
  Eigen::MatrixXd neighbor_current(std::size_t j) const;
  Eigen::MatrixXd neighbor_past(std::size_t j) const;

  friend bool operator==(const PolicyGains& a, const PolicyGains& b);
};

/// Gain inversions with condition number above this are rejected.
inline constexpr double kMaxGainCondition = 1e12;

/// Greedy policy of a kernel. Throws SingularGain when R_ii + p_uu is
/// numerically singular.
PolicyGains policy_gains(const QKernel& kernel, const Eigen::MatrixXd& r_self);

Eigen::VectorXd control(const PolicyGains& g, const Eigen::VectorXd& own_past,
                        const Eigen::VectorXd& neighbor_window, const Eigen::VectorXd& output_window);

/// u'R u + w'P̄ w with u the leading m_i entries of w = w̄_i[k,k-N+1]. The
/// greedy policy is its minimizer over u for fixed remaining entries.
double greedy_objective(const QKernel& kernel, const Eigen::MatrixXd& r_self, const Eigen::VectorXd& w);

/// How u_j(k) inside Ū_j[k,k-N+1] is resolved at step k.
enum class CouplingMode {
  Exact,  // solve all agents' relations jointly for the current controls
  Delay,  // substitute u_j(k-1)
};

/// Swarm-wide I/O policy. The coupling between current controls is
/// factorized once at construction.
class JointPolicy {
 public:
  /// Throws SingularCoupling if the stacked system I - G is singular.
  JointPolicy(std::vector<std::vector<std::size_t>> neighbor_sets, std::vector<PolicyGains> gains,
              CouplingMode mode);

  /// u(k) for every agent. Requires outputs up to step k and controls up to
  /// k-1 for the last N-1 steps (k-1 also in delay mode) in `trace`; missing
  /// pre-history counts as zero.
  std::vector<Eigen::VectorXd> controls(const IoTrace& trace, long k) const;

  const std::vector<PolicyGains>& gains() const { return gains_; }
  const std::vector<std::vector<std::size_t>>& neighbor_sets() const { return neighbor_sets_; }
  CouplingMode mode() const { return mode_; }
  std::size_t horizon() const;

 private:
  std::vector<std::vector<std::size_t>> neighbor_sets_;
  std::vector<PolicyGains> gains_;
  CouplingMode mode_;
  std::vector<Eigen::Index> offsets_;
  Eigen::PartialPivLU<Eigen::MatrixXd> coupling_;
};

std::vector<std::vector<std::size_t>> neighbor_sets(const Digraph& g);

/// Closed-loop adapter: keeps the last N samples of outputs and applied
/// controls and plays `JointPolicy` once the history is full.
class IoSwarmPolicy final : public SwarmPolicy {
 public:
  explicit IoSwarmPolicy(JointPolicy policy);

  void reset() override;
  std::vector<Eigen::VectorXd> act(const SwarmObservation& obs) override;
  void record_applied(std::span<const Eigen::VectorXd> applied) override;
  std::size_t warmup_steps() const override;

 private:
  JointPolicy policy_;
  IoTrace trace_;
  long k_ = 0;
};

}  // namespace ioql
