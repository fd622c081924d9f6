#include "ioql/estimator.hpp"

#include <string>

#include "ioql/error.hpp"
#include "ioql/linalg.hpp"

namespace ioql {

Eigen::VectorXd IoWindow::flatten() const {
  std::vector<Eigen::VectorXd> parts;
  for (const auto& u : own_controls) parts.push_back(u);
  for (const auto& seq : neighbor_controls)
    for (const auto& u : seq) parts.push_back(u);
  for (const auto& y : outputs) parts.push_back(y);
  return concat(parts);
}

IoTrace::IoTrace(std::size_t agents, std::size_t capacity) : agents_(agents), capacity_(capacity) {}

void IoTrace::push_outputs(std::vector<Eigen::VectorXd> outputs) {
  require(outputs.size() == agents_, ErrorKind::InvalidArgument, "one output per agent required");
  require(outputs_.size() == controls_.size(), ErrorKind::InvalidArgument,
          "controls of the previous step must be recorded before new outputs");
  outputs_.push_back(std::move(outputs));
}

void IoTrace::push_controls(std::vector<Eigen::VectorXd> controls) {
  require(controls.size() == agents_, ErrorKind::InvalidArgument, "one control per agent required");
  require(controls_.size() + 1 == outputs_.size(), ErrorKind::InvalidArgument,
          "outputs of this step must be recorded before its controls");
  controls_.push_back(std::move(controls));
  trim();
}

void IoTrace::clear() {
  outputs_.clear();
  controls_.clear();
  first_ = 0;
}

void IoTrace::trim() {
  if (capacity_ == 0) return;
  while (controls_.size() > capacity_) {
    outputs_.pop_front();
    controls_.pop_front();
    ++first_;
  }
}

const Eigen::VectorXd& IoTrace::output(long k, std::size_t agent) const {
  if (!has_output(k) || agent >= agents_) {
    fail(ErrorKind::InvalidArgument, "output at step " + std::to_string(k) + " not in trace");
  }
  return outputs_[static_cast<std::size_t>(k - first_)][agent];
}

const Eigen::VectorXd& IoTrace::control(long k, std::size_t agent) const {
  if (!has_control(k) || agent >= agents_) {
    fail(ErrorKind::InvalidArgument, "control at step " + std::to_string(k) + " not in trace");
  }
  return controls_[static_cast<std::size_t>(k - first_)][agent];
}

IoWindow IoTrace::window(std::size_t agent, std::span<const std::size_t> neighbors, long anchor,
                         std::size_t horizon) const {
  IoWindow w;
  w.anchor_step = anchor;
  w.neighbor_controls.resize(neighbors.size());
  for (std::size_t l = 1; l <= horizon; ++l) {
    const long k = anchor - static_cast<long>(l);
    w.own_controls.push_back(control(k, agent));
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
      w.neighbor_controls[j].push_back(control(k, neighbors[j]));
    }
    w.outputs.push_back(output(k, agent));
  }
  return w;
}

namespace {

// Columns [X, A X, ..., A^{N-1} X].
Eigen::MatrixXd reach_blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x, std::size_t n_steps) {
  Eigen::MatrixXd out(a.rows(), x.cols() * static_cast<Eigen::Index>(n_steps));
  Eigen::MatrixXd block = x;
  for (std::size_t c = 0; c < n_steps; ++c) {
    out.middleCols(static_cast<Eigen::Index>(c) * x.cols(), x.cols()) = block;
    block = a * block;
  }
  return out;
}

// Row block r holds y(k-1-r); column block c holds u(k-1-c). y(k-1-r) sees
// u(k-1-c) through C A^{c-r-1} X whenever c > r.
Eigen::MatrixXd feedthrough_blocks(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                                   const Eigen::MatrixXd& x, std::size_t n_steps) {
  const Eigen::Index q = c.rows();
  const Eigen::Index m = x.cols();
  const auto big_n = static_cast<Eigen::Index>(n_steps);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q * big_n, m * big_n);
  std::vector<Eigen::MatrixXd> markov;  // C A^p X for p = 0..N-2
  Eigen::MatrixXd ap_x = x;
  for (Eigen::Index p = 0; p + 1 < big_n; ++p) {
    markov.push_back(c * ap_x);
    ap_x = a * ap_x;
  }
  for (Eigen::Index r = 0; r < big_n; ++r)
    for (Eigen::Index col = r + 1; col < big_n; ++col)
      out.block(r * q, col * m, q, m) = markov[static_cast<std::size_t>(col - r - 1)];
  return out;
}

}  // namespace

BlockMatrices build_block_matrices(const MasModel& model, std::size_t agent, std::size_t horizon) {
  require(horizon >= 1, ErrorKind::InvalidArgument, "window horizon must be at least 1");
  const auto sys = error_system_matrices(model, agent);
  const auto& a = model.a();
  const auto& c = model.c(agent);
  const auto big_n = static_cast<Eigen::Index>(horizon);

  BlockMatrices bm;
  bm.observability.resize(c.rows() * big_n, a.cols());
  Eigen::MatrixXd ca = c;  // C A^p, filled bottom-up
  for (Eigen::Index r = big_n - 1; r >= 0; --r) {
    bm.observability.middleRows(r * c.rows(), c.rows()) = ca;
    ca = ca * a;
  }
  bm.own_reach = reach_blocks(a, sys.f, horizon);
  bm.own_feedthrough = feedthrough_blocks(a, c, sys.f, horizon);
  for (const auto& e : sys.e) {
    bm.neighbor_reach.push_back(reach_blocks(a, e, horizon));
    bm.neighbor_feedthrough.push_back(feedthrough_blocks(a, c, e, horizon));
  }
  Eigen::MatrixXd ap = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (Eigen::Index p = 0; p < big_n; ++p) ap = ap * a;
  bm.a_power = ap;
  return bm;
}

Eigen::MatrixXd EstimatorMatrices::stacked() const {
  Eigen::Index cols = t_own.cols() + t_output.cols();
  for (const auto& t : t_neighbors) cols += t.cols();
  Eigen::MatrixXd out(t_own.rows(), cols);
  Eigen::Index off = 0;
  out.middleCols(off, t_own.cols()) = t_own;
  off += t_own.cols();
  for (const auto& t : t_neighbors) {
    out.middleCols(off, t.cols()) = t;
    off += t.cols();
  }
  out.middleCols(off, t_output.cols()) = t_output;
  return out;
}

EstimatorMatrices build_estimator(const MasModel& model, std::size_t agent, std::size_t horizon) {
  const auto bm = build_block_matrices(model, agent, horizon);
  const Eigen::VectorXd sv = singular_values(bm.observability);
  const double smallest = sv.size() < static_cast<Eigen::Index>(model.state_dim())
                              ? 0.0
                              : sv(static_cast<Eigen::Index>(model.state_dim()) - 1);
  require(smallest >= kObservabilityRankTol, ErrorKind::RankDeficient,
          "observability stack of agent " + std::to_string(agent + 1) + " with N = " +
              std::to_string(horizon) + " lacks full column rank (N too small or (A, C) unobservable)");

  const Eigen::MatrixXd t_y = bm.a_power * pseudo_inverse(bm.observability, kObservabilityRankTol);
  EstimatorMatrices est;
  est.horizon = horizon;
  est.t_output = t_y;
  est.t_own = bm.own_reach - t_y * bm.own_feedthrough;
  for (std::size_t j = 0; j < bm.neighbor_reach.size(); ++j) {
    est.t_neighbors.push_back(bm.neighbor_reach[j] - t_y * bm.neighbor_feedthrough[j]);
  }
  return est;
}

Eigen::VectorXd reconstruct_error(const EstimatorMatrices& est, const IoWindow& window) {
  require(window.horizon() == est.horizon && window.own_controls.size() == est.horizon,
          ErrorKind::InvalidArgument, "window length does not match estimator horizon");
  require(window.neighbor_controls.size() == est.t_neighbors.size(), ErrorKind::InvalidArgument,
          "window neighbor count does not match estimator");
  const Eigen::MatrixXd t = est.stacked();
  const Eigen::VectorXd w = window.flatten();
  require(w.size() == t.cols(), ErrorKind::InvalidArgument, "window dimension mismatch");
  return t * w;
}

std::size_t observability_index(const MasModel& model, std::size_t agent) {
  const std::size_t n = model.state_dim();
  const auto& c = model.c(agent);
  Eigen::MatrixXd stack = c;
  Eigen::MatrixXd ca = c;
  for (std::size_t k = 1; k <= n; ++k) {
    if (numerical_rank(stack, kObservabilityRankTol) == n) return k;
    ca = ca * model.a();
    Eigen::MatrixXd grown(stack.rows() + ca.rows(), stack.cols());
    grown << ca, stack;
    stack = std::move(grown);
  }
  fail(ErrorKind::NotObservable,
       "(A, C) of agent " + std::to_string(agent + 1) + " is not observable");
}

std::size_t default_horizon(const MasModel& model) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    out = std::max(out, observability_index(model, i));
  }
  return out;
}

Eigen::MatrixXd lift_kernel(const EstimatorMatrices& est, const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd t = est.stacked();
  return symmetrize(t.transpose() * p * t);
}

}  // namespace ioql
