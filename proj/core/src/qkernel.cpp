#include "ioql/qkernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ioql/error.hpp"
#include "ioql/linalg.hpp"

namespace ioql {

std::size_t KernelLayout::total_dim() const { return output_offset() + output_dim * horizon; }

std::size_t KernelLayout::neighbor_offset(std::size_t j) const {
  require(j <= neighbor_dims.size(), ErrorKind::InvalidArgument, "neighbor block out of range");
  std::size_t off = own_dim * horizon;
  for (std::size_t l = 0; l < j; ++l) off += neighbor_dims[l] * horizon;
  return off;
}

std::size_t KernelLayout::output_offset() const { return neighbor_offset(neighbor_dims.size()); }

KernelLayout layout_for(const MasModel& model, std::size_t agent, std::size_t horizon) {
  require(horizon >= 1, ErrorKind::InvalidArgument, "window horizon must be at least 1");
  KernelLayout layout;
  layout.own_dim = model.control_dim(agent);
  for (std::size_t j : neighbors(model.graph(), agent)) layout.neighbor_dims.push_back(model.control_dim(j));
  layout.output_dim = model.output_dim(agent);
  layout.horizon = horizon;
  return layout;
}

QKernel::QKernel(KernelLayout layout) : layout_(std::move(layout)) {
  const auto d = static_cast<Eigen::Index>(layout_.total_dim());
  require(d > 0, ErrorKind::InvalidArgument, "kernel dimension must be positive");
  matrix_ = Eigen::MatrixXd::Zero(d, d);
}

QKernel::QKernel(KernelLayout layout, const Eigen::MatrixXd& matrix) : QKernel(std::move(layout)) {
  require(matrix.rows() == matrix_.rows() && matrix.cols() == matrix_.cols(), ErrorKind::InvalidArgument,
          "kernel matrix does not match layout dimension " + std::to_string(matrix_.rows()));
  matrix_.triangularView<Eigen::Upper>() = matrix.triangularView<Eigen::Upper>();
  matrix_.triangularView<Eigen::StrictlyLower>() = matrix.transpose().triangularView<Eigen::StrictlyLower>();
}

QKernel QKernel::from_upper(KernelLayout layout, std::span<const double> upper) {
  QKernel k(std::move(layout));
  const Eigen::Index d = k.matrix_.rows();
  require(upper.size() == static_cast<std::size_t>(d * (d + 1) / 2), ErrorKind::InvalidArgument,
          "upper triangle has wrong length");
  std::size_t p = 0;
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = r; c < d; ++c) {
      k.matrix_(r, c) = upper[p];
      k.matrix_(c, r) = upper[p];
      ++p;
    }
  return k;
}

std::vector<double> QKernel::upper_triangle() const {
  const Eigen::Index d = matrix_.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(d * (d + 1) / 2));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = r; c < d; ++c) out.push_back(matrix_(r, c));
  return out;
}

bool operator==(const QKernel& a, const QKernel& b) {
  return a.layout_ == b.layout_ && identical(a.matrix_, b.matrix_);
}

double evaluate(const QKernel& kernel, const Eigen::VectorXd& w) {
  if (static_cast<std::size_t>(w.size()) != kernel.dim()) {
    fail(ErrorKind::InvalidArgument, "data vector dimension " + std::to_string(w.size()) +
                                         " does not match kernel dimension " + std::to_string(kernel.dim()));
  }
  return w.dot(kernel.matrix() * w);
}

KernelBlocks extract_blocks(const QKernel& kernel) {
  const auto& lay = kernel.layout();
  const auto& p = kernel.matrix();
  const auto m = static_cast<Eigen::Index>(lay.own_dim);
  const auto own_w = static_cast<Eigen::Index>(lay.own_dim * lay.horizon);
  const auto out_off = static_cast<Eigen::Index>(lay.output_offset());
  KernelBlocks b;
  b.p_uu = p.block(0, 0, m, m);
  b.p_own_past = p.block(0, m, m, own_w - m);
  b.p_neighbors = p.block(0, own_w, m, out_off - own_w);
  b.p_outputs = p.block(0, out_off, m, p.cols() - out_off);
  return b;
}

PolicyGains PolicyGains::zero(KernelLayout layout) {
  PolicyGains g;
  const auto m = static_cast<Eigen::Index>(layout.own_dim);
  const auto n_steps = static_cast<Eigen::Index>(layout.horizon);
  const auto nb_w = static_cast<Eigen::Index>(layout.output_offset() - layout.own_dim * layout.horizon);
  g.g_own_past = Eigen::MatrixXd::Zero(m, m * (n_steps - 1));
  g.g_neighbors = Eigen::MatrixXd::Zero(m, nb_w);
  g.g_output = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(layout.output_dim) * n_steps);
  g.inverted_term = Eigen::MatrixXd::Zero(m, m);
  g.layout = std::move(layout);
  return g;
}

Eigen::MatrixXd PolicyGains::neighbor_current(std::size_t j) const {
  const auto off = static_cast<Eigen::Index>(layout.neighbor_offset(j) - layout.neighbor_offset(0));
  return g_neighbors.middleCols(off, static_cast<Eigen::Index>(layout.neighbor_dims.at(j)));
}

Eigen::MatrixXd PolicyGains::neighbor_past(std::size_t j) const {
  const auto mj = static_cast<Eigen::Index>(layout.neighbor_dims.at(j));
  const auto off = static_cast<Eigen::Index>(layout.neighbor_offset(j) - layout.neighbor_offset(0));
  return g_neighbors.middleCols(off + mj, mj * (static_cast<Eigen::Index>(layout.horizon) - 1));
}

bool operator==(const PolicyGains& a, const PolicyGains& b) {
  return a.layout == b.layout && identical(a.g_own_past, b.g_own_past) &&
         identical(a.g_neighbors, b.g_neighbors) && identical(a.g_output, b.g_output) &&
         identical(a.inverted_term, b.inverted_term);
}

PolicyGains policy_gains(const QKernel& kernel, const Eigen::MatrixXd& r_self) {
  const auto m = static_cast<Eigen::Index>(kernel.layout().own_dim);
  require(r_self.rows() == m && r_self.cols() == m, ErrorKind::InvalidArgument,
          "R_ii dimension does not match kernel layout");
  const auto blocks = extract_blocks(kernel);
  const Eigen::MatrixXd term = symmetrize(r_self + blocks.p_uu);
  const double cond = condition_number(term);
  require(std::isfinite(cond) && cond <= kMaxGainCondition, ErrorKind::SingularGain,
          "R_ii + p_uu is numerically singular (condition number " + std::to_string(cond) + ")");
  PolicyGains g;
  g.layout = kernel.layout();
  g.inverted_term = symmetrize(term.inverse());
  g.g_own_past = -g.inverted_term * blocks.p_own_past;
  g.g_neighbors = -g.inverted_term * blocks.p_neighbors;
  g.g_output = -g.inverted_term * blocks.p_outputs;
  return g;
}

Eigen::VectorXd control(const PolicyGains& g, const Eigen::VectorXd& own_past,
                        const Eigen::VectorXd& neighbor_window, const Eigen::VectorXd& output_window) {
  require(own_past.size() == g.g_own_past.cols() && neighbor_window.size() == g.g_neighbors.cols() &&
              output_window.size() == g.g_output.cols(),
          ErrorKind::InvalidArgument, "policy window dimensions do not match gains");
  return g.g_own_past * own_past + g.g_neighbors * neighbor_window + g.g_output * output_window;
}

double greedy_objective(const QKernel& kernel, const Eigen::MatrixXd& r_self, const Eigen::VectorXd& w) {
  const auto m = static_cast<Eigen::Index>(kernel.layout().own_dim);
  const Eigen::VectorXd u = w.head(m);
  return u.dot(r_self * u) + evaluate(kernel, w);
}

std::vector<std::vector<std::size_t>> neighbor_sets(const Digraph& g) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < g.node_count(); ++i) out.push_back(neighbors(g, i));
  return out;
}

JointPolicy::JointPolicy(std::vector<std::vector<std::size_t>> neighbor_sets, std::vector<PolicyGains> gains,
                         CouplingMode mode)
    : neighbor_sets_(std::move(neighbor_sets)), gains_(std::move(gains)), mode_(mode) {
  require(neighbor_sets_.size() == gains_.size() && !gains_.empty(), ErrorKind::InvalidArgument,
          "one gain set per agent required");
  offsets_.push_back(0);
  for (const auto& g : gains_) {
    require(g.layout.horizon == gains_.front().layout.horizon, ErrorKind::InvalidArgument,
            "all agents must share the window horizon");
    offsets_.push_back(offsets_.back() + static_cast<Eigen::Index>(g.layout.own_dim));
  }
  for (std::size_t i = 0; i < gains_.size(); ++i) {
    require(neighbor_sets_[i].size() == gains_[i].layout.neighbor_dims.size(), ErrorKind::InvalidArgument,
            "gain layout of agent " + std::to_string(i + 1) + " does not match its neighbor set");
    for (std::size_t j = 0; j < neighbor_sets_[i].size(); ++j) {
      const std::size_t nb = neighbor_sets_[i][j];
      require(nb < gains_.size() && gains_[nb].layout.own_dim == gains_[i].layout.neighbor_dims[j],
              ErrorKind::InvalidArgument, "neighbor control dimension mismatch");
    }
  }
  const Eigen::Index total = offsets_.back();
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(total, total);
  if (mode_ == CouplingMode::Exact) {
    for (std::size_t i = 0; i < gains_.size(); ++i)
      for (std::size_t j = 0; j < neighbor_sets_[i].size(); ++j) {
        const std::size_t nb = neighbor_sets_[i][j];
        const Eigen::MatrixXd g = gains_[i].neighbor_current(j);
        sys.block(offsets_[i], offsets_[nb], g.rows(), g.cols()) -= g;
      }
    const double cond = condition_number(sys);
    require(std::isfinite(cond) && cond <= kMaxGainCondition, ErrorKind::SingularCoupling,
            "coupled current-control system is numerically singular (condition number " +
                std::to_string(cond) + ")");
  }
  coupling_.compute(sys);
}

std::size_t JointPolicy::horizon() const { return gains_.front().layout.horizon; }

namespace {

Eigen::VectorXd control_or_zero(const IoTrace& trace, long k, std::size_t agent, Eigen::Index dim) {
  return trace.has_control(k) ? trace.control(k, agent) : Eigen::VectorXd::Zero(dim);
}

Eigen::VectorXd output_or_zero(const IoTrace& trace, long k, std::size_t agent, Eigen::Index dim) {
  return trace.has_output(k) ? trace.output(k, agent) : Eigen::VectorXd::Zero(dim);
}

}  // namespace

std::vector<Eigen::VectorXd> JointPolicy::controls(const IoTrace& trace, long k) const {
  require(trace.output_end() > k, ErrorKind::InvalidArgument, "outputs at the current step are required");
  const auto n_steps = static_cast<long>(horizon());
  Eigen::VectorXd rhs(offsets_.back());
  for (std::size_t i = 0; i < gains_.size(); ++i) {
    const auto& g = gains_[i];
    const auto m = static_cast<Eigen::Index>(g.layout.own_dim);
    const auto q = static_cast<Eigen::Index>(g.layout.output_dim);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
    for (long l = 1; l < n_steps; ++l) {
      c += g.g_own_past.middleCols((l - 1) * m, m) * control_or_zero(trace, k - l, i, m);
    }
    for (std::size_t j = 0; j < neighbor_sets_[i].size(); ++j) {
      const std::size_t nb = neighbor_sets_[i][j];
      const auto mj = static_cast<Eigen::Index>(g.layout.neighbor_dims[j]);
      const Eigen::MatrixXd past = g.neighbor_past(j);
      for (long l = 1; l < n_steps; ++l) {
        c += past.middleCols((l - 1) * mj, mj) * control_or_zero(trace, k - l, nb, mj);
      }
      if (mode_ == CouplingMode::Delay) c += g.neighbor_current(j) * control_or_zero(trace, k - 1, nb, mj);
    }
    for (long l = 0; l < n_steps; ++l) {
      c += g.g_output.middleCols(l * q, q) * output_or_zero(trace, k - l, i, q);
    }
    rhs.segment(offsets_[i], m) = c;
  }
  const Eigen::VectorXd u = mode_ == CouplingMode::Exact ? Eigen::VectorXd(coupling_.solve(rhs)) : rhs;
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < gains_.size(); ++i) {
    out.push_back(u.segment(offsets_[i], offsets_[i + 1] - offsets_[i]));
  }
  return out;
}

IoSwarmPolicy::IoSwarmPolicy(JointPolicy policy)
    : policy_(std::move(policy)),
      trace_(policy_.gains().size(), std::max<std::size_t>(policy_.horizon(), 1) + 1) {}

void IoSwarmPolicy::reset() {
  trace_.clear();
  k_ = 0;
}

std::size_t IoSwarmPolicy::warmup_steps() const { return policy_.horizon() - 1; }

std::vector<Eigen::VectorXd> IoSwarmPolicy::act(const SwarmObservation& obs) {
  trace_.push_outputs(std::vector<Eigen::VectorXd>(obs.outputs.begin(), obs.outputs.end()));
  if (k_ < static_cast<long>(warmup_steps())) {
    std::vector<Eigen::VectorXd> zero;
    for (const auto& g : policy_.gains()) {
      zero.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.layout.own_dim)));
    }
    return zero;
  }
  return policy_.controls(trace_, k_);
}

void IoSwarmPolicy::record_applied(std::span<const Eigen::VectorXd> applied) {
  trace_.push_controls(std::vector<Eigen::VectorXd>(applied.begin(), applied.end()));
  ++k_;
}

}  // namespace ioql
