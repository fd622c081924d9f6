#include "ioql/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ioql/error.hpp"
#include "ioql/graph.hpp"
#include "ioql/linalg.hpp"

namespace ioql {

namespace {

std::vector<Eigen::Index> control_offsets(const MasModel& model) {
  std::vector<Eigen::Index> off{0};
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    off.push_back(off.back() + static_cast<Eigen::Index>(model.control_dim(i)));
  }
  return off;
}

class StateFeedbackPolicy final : public SwarmPolicy {
 public:
  StateFeedbackPolicy(const MasModel& model, const StateFeedbackProfile& profile)
      : gain_(joint_feedback(model, profile)), offsets_(control_offsets(model)) {}

  void reset() override {}

  std::vector<Eigen::VectorXd> act(const SwarmObservation& obs) override {
    const Eigen::VectorXd u = gain_ * concat({obs.errors.begin(), obs.errors.end()});
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = 0; i + 1 < offsets_.size(); ++i) {
      out.push_back(u.segment(offsets_[i], offsets_[i + 1] - offsets_[i]));
    }
    return out;
  }

  void record_applied(std::span<const Eigen::VectorXd>) override {}

 private:
  Eigen::MatrixXd gain_;
  std::vector<Eigen::Index> offsets_;
};

// Agent i's one-step error update for the stacked controls u.
Eigen::VectorXd next_error(const MasModel& model, const ErrorSystem& sys, const Eigen::VectorXd& e,
                           const std::vector<Eigen::VectorXd>& u, std::size_t i) {
  Eigen::VectorXd out = model.a() * e + sys.f * u[i];
  for (std::size_t j = 0; j < sys.neighbors.size(); ++j) out += sys.e[j] * u[sys.neighbors[j]];
  return out;
}

Eigen::MatrixXd state_feedback_loop(const MasModel& model, const StateFeedbackProfile& profile) {
  const std::size_t agents = model.agent_count();
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const Eigen::MatrixXd m = joint_feedback(model, profile);
  const auto off = control_offsets(model);
  Eigen::MatrixXd loop = Eigen::MatrixXd::Zero(n * static_cast<Eigen::Index>(agents), m.cols());
  for (std::size_t i = 0; i < agents; ++i) {
    const auto sys = error_system_matrices(model, i);
    const auto row = static_cast<Eigen::Index>(i) * n;
    loop.block(row, row, n, n) += model.a();
    loop.middleRows(row, n) += sys.f * m.middleRows(off[i], off[i + 1] - off[i]);
    for (std::size_t j = 0; j < sys.neighbors.size(); ++j) {
      const std::size_t nb = sys.neighbors[j];
      loop.middleRows(row, n) += sys.e[j] * m.middleRows(off[nb], off[nb + 1] - off[nb]);
    }
  }
  return loop;
}

// Augmented state: errors, then per agent y(k-1..k-N+1), then per agent
// u(k-1..k-P) with P = max(N-1, 1).
Eigen::MatrixXd io_loop(const MasModel& model, const IoPolicyProfile& profile) {
  const std::size_t agents = model.agent_count();
  require(profile.gains.size() == agents, ErrorKind::InvalidArgument, "one gain set per agent required");
  const JointPolicy policy(neighbor_sets(model.graph()), profile.gains, profile.mode);
  const std::size_t n_steps = policy.horizon();
  const std::size_t past_u = std::max<std::size_t>(n_steps - 1, 1);
  const auto n = static_cast<Eigen::Index>(model.state_dim());

  std::vector<Eigen::Index> y_off, u_off;
  Eigen::Index dim = n * static_cast<Eigen::Index>(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    y_off.push_back(dim);
    dim += static_cast<Eigen::Index>(model.output_dim(i) * (n_steps - 1));
  }
  for (std::size_t i = 0; i < agents; ++i) {
    u_off.push_back(dim);
    dim += static_cast<Eigen::Index>(model.control_dim(i) * past_u);
  }
  std::vector<ErrorSystem> systems;
  for (std::size_t i = 0; i < agents; ++i) systems.push_back(error_system_matrices(model, i));

  Eigen::MatrixXd loop(dim, dim);
  for (Eigen::Index col = 0; col < dim; ++col) {
    const Eigen::VectorXd z = Eigen::VectorXd::Unit(dim, col);
    // Trace steps 0..P stand for k-P..k.
    const auto cur = static_cast<long>(past_u);
    IoTrace trace(agents);
    for (long t = 0; t <= cur; ++t) {
      const long lag = cur - t;
      std::vector<Eigen::VectorXd> ys;
      for (std::size_t i = 0; i < agents; ++i) {
        const auto q = static_cast<Eigen::Index>(model.output_dim(i));
        if (lag == 0) {
          ys.push_back(model.c(i) * z.segment(static_cast<Eigen::Index>(i) * n, n));
        } else if (static_cast<std::size_t>(lag) < n_steps) {
          ys.push_back(z.segment(y_off[i] + (lag - 1) * q, q));
        } else {
          ys.push_back(Eigen::VectorXd::Zero(q));
        }
      }
      trace.push_outputs(std::move(ys));
      if (lag == 0) break;
      std::vector<Eigen::VectorXd> us;
      for (std::size_t i = 0; i < agents; ++i) {
        const auto m = static_cast<Eigen::Index>(model.control_dim(i));
        us.push_back(z.segment(u_off[i] + (lag - 1) * m, m));
      }
      trace.push_controls(std::move(us));
    }
    const auto u = policy.controls(trace, cur);

    Eigen::VectorXd next = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < agents; ++i) {
      const Eigen::VectorXd e = z.segment(static_cast<Eigen::Index>(i) * n, n);
      next.segment(static_cast<Eigen::Index>(i) * n, n) = next_error(model, systems[i], e, u, i);
      const auto q = static_cast<Eigen::Index>(model.output_dim(i));
      if (n_steps > 1) {
        next.segment(y_off[i], q) = model.c(i) * e;
        for (std::size_t l = 1; l + 1 < n_steps; ++l) {
          next.segment(y_off[i] + static_cast<Eigen::Index>(l) * q, q) =
              z.segment(y_off[i] + static_cast<Eigen::Index>(l - 1) * q, q);
        }
      }
      const auto m = static_cast<Eigen::Index>(model.control_dim(i));
      next.segment(u_off[i], m) = u[i];
      for (std::size_t l = 1; l < past_u; ++l) {
        next.segment(u_off[i] + static_cast<Eigen::Index>(l) * m, m) =
            z.segment(u_off[i] + static_cast<Eigen::Index>(l - 1) * m, m);
      }
    }
    loop.col(col) = next;
  }
  return loop;
}

Eigen::MatrixXd gain_inverse(const Eigen::MatrixXd& term) {
  const double cond = condition_number(term);
  require(std::isfinite(cond) && cond <= kMaxGainCondition, ErrorKind::SingularGain,
          "R + F'PF is numerically singular");
  return term.inverse();
}

}  // namespace

std::unique_ptr<SwarmPolicy> make_policy(const MasModel& model, const PolicyProfile& profile) {
  if (const auto* sf = std::get_if<StateFeedbackProfile>(&profile)) {
    return std::make_unique<StateFeedbackPolicy>(model, *sf);
  }
  const auto& io = std::get<IoPolicyProfile>(profile);
  return std::make_unique<IoSwarmPolicy>(JointPolicy(neighbor_sets(model.graph()), io.gains, io.mode));
}

Eigen::MatrixXd joint_feedback(const MasModel& model, const StateFeedbackProfile& profile) {
  const std::size_t agents = model.agent_count();
  require(profile.k.size() == agents && profile.l.size() == agents, ErrorKind::InvalidArgument,
          "state-feedback profile needs one entry per agent");
  const auto off = control_offsets(model);
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const Eigen::Index total = off.back();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(total, total);
  Eigen::MatrixXd kbig = Eigen::MatrixXd::Zero(total, n * static_cast<Eigen::Index>(agents));
  for (std::size_t i = 0; i < agents; ++i) {
    const auto nb = neighbors(model.graph(), i);
    require(profile.l[i].size() == nb.size(), ErrorKind::InvalidArgument, "coupling gains must match neighbors");
    kbig.block(off[i], static_cast<Eigen::Index>(i) * n, off[i + 1] - off[i], n) = profile.k[i];
    for (std::size_t j = 0; j < nb.size(); ++j) {
      lhs.block(off[i], off[nb[j]], off[i + 1] - off[i], off[nb[j] + 1] - off[nb[j]]) += profile.l[i][j];
    }
  }
  const double cond = condition_number(lhs);
  require(std::isfinite(cond) && cond <= kMaxGainCondition, ErrorKind::SingularCoupling,
          "coupled state-feedback system is numerically singular");
  return -lhs.partialPivLu().solve(kbig);
}

Eigen::MatrixXd closed_loop_matrix(const MasModel& model, const PolicyProfile& profile) {
  if (const auto* sf = std::get_if<StateFeedbackProfile>(&profile)) return state_feedback_loop(model, *sf);
  return io_loop(model, std::get<IoPolicyProfile>(profile));
}

StateFeedbackProfile zero_state_feedback(const MasModel& model) {
  StateFeedbackProfile p;
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    p.k.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.control_dim(i)), n));
    std::vector<Eigen::MatrixXd> l;
    for (std::size_t j : neighbors(model.graph(), i)) {
      l.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.control_dim(i)),
                                        static_cast<Eigen::Index>(model.control_dim(j))));
    }
    p.l.push_back(std::move(l));
  }
  return p;
}

StateFeedbackProfile greedy_state_feedback(const MasModel& model, const CostWeights& weights,
                                           const std::vector<Eigen::MatrixXd>& p) {
  StateFeedbackProfile out;
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    const auto sys = error_system_matrices(model, i);
    const Eigen::MatrixXd inv = gain_inverse(symmetrize(weights[i].r_self + sys.f.transpose() * p[i] * sys.f));
    const Eigen::MatrixXd fp = sys.f.transpose() * p[i];
    out.k.push_back(inv * fp * model.a());
    std::vector<Eigen::MatrixXd> l;
    for (const auto& e : sys.e) l.push_back(inv * fp * e);
    out.l.push_back(std::move(l));
  }
  return out;
}

ViResult model_based_vi(const MasModel& model, const CostWeights& weights, std::size_t max_iter, double tol,
                        std::optional<std::vector<Eigen::MatrixXd>> initial) {
  validate_weights(model, weights, true);
  const std::size_t agents = model.agent_count();
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const auto off = control_offsets(model);
  std::vector<ErrorSystem> systems;
  for (std::size_t i = 0; i < agents; ++i) systems.push_back(error_system_matrices(model, i));

  ViResult res;
  if (initial) {
    require(initial->size() == agents, ErrorKind::InvalidArgument, "one initial kernel per agent required");
    res.p = *initial;
  } else {
    res.p.assign(agents, Eigen::MatrixXd::Zero(n, n));
  }
  res.policy = greedy_state_feedback(model, weights, res.p);
  res.trace.push_back(res.p);

  for (std::size_t s = 1; s <= max_iter; ++s) {
    const Eigen::MatrixXd m = joint_feedback(model, res.policy);
    std::vector<Eigen::MatrixXd> next;
    double delta = 0.0;
    for (std::size_t i = 0; i < agents; ++i) {
      const auto& sys = systems[i];
      const auto col = static_cast<Eigen::Index>(i) * n;
      const Eigen::MatrixXd mii = m.block(off[i], col, off[i + 1] - off[i], n);
      Eigen::MatrixXd acl = model.a() + sys.f * mii;
      Eigen::MatrixXd pn = model.c(i).transpose() * weights[i].q * model.c(i) + mii.transpose() * weights[i].r_self * mii;
      for (std::size_t j = 0; j < sys.neighbors.size(); ++j) {
        const std::size_t nb = sys.neighbors[j];
        const Eigen::MatrixXd mji = m.block(off[nb], col, off[nb + 1] - off[nb], n);
        acl += sys.e[j] * mji;
        pn += mji.transpose() * weights[i].r_neighbor[j] * mji;
      }
      pn = symmetrize(pn + acl.transpose() * res.p[i] * acl);
      require(pn.allFinite(), ErrorKind::NotConverged, "model-based value iteration diverged");
      delta = std::max(delta, (pn - res.p[i]).norm());
      next.push_back(std::move(pn));
    }
    res.p = std::move(next);
    res.policy = greedy_state_feedback(model, weights, res.p);
    res.trace.push_back(res.p);
    res.iterations = s;
    if (delta <= tol) return res;
  }
  fail(ErrorKind::NotConverged,
       "model-based value iteration did not reach tolerance within " + std::to_string(max_iter) + " iterations");
}

DareSolution dare_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                        const Eigen::MatrixXd& r, double tol, std::size_t max_iter) {
  require(a.rows() == a.cols() && f.rows() == a.rows() && q_eff.rows() == a.rows() && q_eff.cols() == a.cols() &&
              r.rows() == f.cols() && r.cols() == f.cols(),
          ErrorKind::InvalidArgument, "Riccati matrices have inconsistent dimensions");
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (std::size_t s = 1; s <= max_iter; ++s) {
    const Eigen::MatrixXd fp = f.transpose() * p;
    const Eigen::MatrixXd k = (r + fp * f).ldlt().solve(fp * a);
    const Eigen::MatrixXd pn = symmetrize(q_eff + a.transpose() * p * a - a.transpose() * p * f * k);
    require(pn.allFinite() && pn.norm() < 1e150, ErrorKind::NotConverged,
            "Riccati iteration diverged; (A, F) may not be stabilizable");
    const double delta = (pn - p).norm();
    p = pn;
    if (delta <= tol * (1.0 + p.norm())) {
      const Eigen::MatrixXd fpn = f.transpose() * p;
      return {p, (r + fpn * f).ldlt().solve(fpn * a), s};
    }
  }
  fail(ErrorKind::NotConverged, "Riccati iteration did not converge; (A, F) may not be stabilizable");
}

double riccati_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                        const Eigen::MatrixXd& r, const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd fp = f.transpose() * p;
  const Eigen::MatrixXd rhs =
      q_eff + a.transpose() * p * a - (fp * a).transpose() * (r + fp * f).ldlt().solve(fp * a);
  return (rhs - p).norm();
}

double estimate_theta(const Eigen::MatrixXd& a, const Eigen::MatrixXd& f, const Eigen::MatrixXd& q_eff,
                      const Eigen::MatrixXd& r, const Eigen::MatrixXd& p) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = f.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n + m, n + m);
  w.topLeftCorner(n, n) = q_eff;
  w.bottomRightCorner(m, m) = r;
  require(is_symmetric_positive_definite(symmetrize(w), 1e-9), ErrorKind::HypothesisViolated,
          "stage cost is not positive definite in (e, u); theta is unbounded");
  Eigen::MatrixXd g(n, n + m);
  g << a, f;
  const Eigen::MatrixXd num = symmetrize(g.transpose() * p * g);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(num, symmetrize(w));
  return ges.eigenvalues().maxCoeff();
}

SandwichReport check_sandwich_bounds(const std::vector<Eigen::MatrixXd>& vi_trace, const Eigen::MatrixXd& j_star,
                                       const BoundCheckConfig& cfg, const std::vector<Eigen::VectorXd>& test_states,
                                       double slack) {
  require(cfg.theta > 0.0 && std::isfinite(cfg.theta), ErrorKind::HypothesisViolated, "theta must lie in (0, inf)");
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, ErrorKind::HypothesisViolated, "alpha must lie in [0, 1]");
  require(cfg.beta >= 1.0 && std::isfinite(cfg.beta), ErrorKind::HypothesisViolated, "beta must lie in [1, inf)");
  require(!vi_trace.empty() && !test_states.empty(), ErrorKind::InvalidArgument, "empty trace or test set");
  for (const auto& e : test_states) {
    const double js = e.dot(j_star * e);
    const double v0 = e.dot(vi_trace.front() * e);
    require(js >= 0.0 && cfg.alpha * js <= v0 + slack && v0 <= cfg.beta * js + slack, ErrorKind::HypothesisViolated,
            "alpha J* <= V^0 <= beta J* fails on the test set");
  }

  SandwichReport rep;
  rep.worst_lower_margin = std::numeric_limits<double>::infinity();
  rep.worst_upper_margin = std::numeric_limits<double>::infinity();
  const double ratio = 1.0 + 1.0 / cfg.theta;
  for (std::size_t s = 0; s < vi_trace.size(); ++s) {
    const double decay = std::pow(ratio, -static_cast<double>(s));
    for (const auto& e : test_states) {
      const double js = e.dot(j_star * e);
      const double v = e.dot(vi_trace[s] * e);
      rep.worst_lower_margin = std::min(rep.worst_lower_margin, v - (1.0 + (cfg.alpha - 1.0) * decay) * js);
      rep.worst_upper_margin = std::min(rep.worst_upper_margin, (1.0 + (cfg.beta - 1.0) * decay) * js - v);
    }
  }
  for (const auto& e : test_states) {
    rep.final_gap = std::max(rep.final_gap, std::abs(e.dot(vi_trace.back() * e) - e.dot(j_star * e)));
  }
  rep.iterations_checked = vi_trace.size();
  rep.holds = rep.worst_lower_margin >= -slack && rep.worst_upper_margin >= -slack;
  return rep;
}

StabilityReport check_stability(const MasModel& model, const PolicyProfile& profile, std::size_t trials,
                                std::size_t horizon, std::uint64_t seed) {
  StabilityReport rep;
  rep.trials = trials;
  rep.spectral_radius = spectral_radius(closed_loop_matrix(model, profile));
  rep.spectral_stable = rep.spectral_radius < 1.0;

  auto policy = make_policy(model, profile);
  rep.monte_carlo_stable = true;
  for (std::size_t t = 0; t < trials && rep.monte_carlo_stable; ++t) {
    SwarmState state = random_state(model, derive_seed(seed, t));
    policy->reset();
    double e0 = 0.0;
    for (const auto& e : tracking_errors(model, state)) e0 = std::max(e0, e.norm());
    const std::size_t total = policy->warmup_steps() + horizon;
    bool decayed = e0 == 0.0;
    for (std::size_t k = 0; k < total && !decayed; ++k) {
      const auto errors = tracking_errors(model, state);
      std::vector<Eigen::VectorXd> outputs;
      for (std::size_t i = 0; i < errors.size(); ++i) outputs.push_back(model.c(i) * errors[i]);
      auto u = policy->act({state.step, errors, outputs});
      if (k < policy->warmup_steps()) {
        for (auto& ui : u) ui.setZero();
      }
      policy->record_applied(u);
      state = step(model, state, u);
      double emax = 0.0;
      for (const auto& e : tracking_errors(model, state)) emax = std::max(emax, e.norm());
      if (!std::isfinite(emax)) break;
      decayed = emax <= 1e-6 * e0;
    }
    rep.monte_carlo_stable = decayed;
  }
  return rep;
}

namespace {

void perturb(PolicyGains& g, Rng& rng, double amp) {
  for (Eigen::MatrixXd* m : {&g.g_own_past, &g.g_neighbors, &g.g_output}) {
    for (Eigen::Index c = 0; c < m->cols(); ++c)
      for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) *= 1.0 + rng.uniform(-amp, amp);
  }
}

void perturb(Eigen::MatrixXd& m, Rng& rng, double amp) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) *= 1.0 + rng.uniform(-amp, amp);
}

double total_cost(const MasModel& model, const CostWeights& weights, const PolicyProfile& profile,
                  std::size_t agent, const std::vector<SwarmState>& starts, std::size_t horizon) {
  auto policy = make_policy(model, profile);
  double sum = 0.0;
  for (const auto& x : starts) sum += rollout_cost(model, weights, *policy, x, horizon, agent).cost;
  return sum;
}

}  // namespace

NashReport check_nash(const MasModel& model, const CostWeights& weights, const PolicyProfile& profile,
                      std::size_t agent, const NashConfig& cfg) {
  require(agent < model.agent_count(), ErrorKind::InvalidArgument, "agent index out of range");
  std::vector<SwarmState> starts;
  for (std::size_t s = 0; s < cfg.initial_states; ++s) starts.push_back(random_state(model, derive_seed(cfg.seed, s)));

  NashReport rep;
  rep.baseline_cost = total_cost(model, weights, profile, agent, starts, cfg.horizon);
  rep.tolerance = cfg.rel_tol * (1.0 + rep.baseline_cost);
  rep.worst_improvement = -std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(cfg.seed, 1u << 20));
  for (std::size_t d = 0; d < cfg.draws; ++d) {
    PolicyProfile trial = profile;
    if (auto* sf = std::get_if<StateFeedbackProfile>(&trial)) {
      perturb(sf->k[agent], rng, cfg.amplitude);
      for (auto& l : sf->l[agent]) perturb(l, rng, cfg.amplitude);
    } else {
      perturb(std::get<IoPolicyProfile>(trial).gains[agent], rng, cfg.amplitude);
    }
    bool stable = false;
    try {
      stable = spectral_radius(closed_loop_matrix(model, trial)) < 1.0;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularCoupling) throw;
    }
    if (!stable) {
      ++rep.unstable_perturbations;
      continue;
    }
    const double cost = total_cost(model, weights, trial, agent, starts, cfg.horizon);
    rep.worst_improvement = std::max(rep.worst_improvement, rep.baseline_cost - cost);
  }
  if (rep.unstable_perturbations == cfg.draws) rep.worst_improvement = 0.0;
  rep.holds = rep.worst_improvement <= rep.tolerance;
  return rep;
}

ConsistentWindow random_consistent_window(const MasModel& model, std::size_t agent, std::size_t horizon, Rng& rng) {
  const auto sys = error_system_matrices(model, agent);
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  ConsistentWindow out;
  out.window.own_controls.resize(horizon);
  out.window.outputs.resize(horizon);
  out.window.neighbor_controls.assign(sys.neighbors.size(), std::vector<Eigen::VectorXd>(horizon));
  out.window.anchor_step = static_cast<long>(horizon);
  Eigen::VectorXd e = rng.uniform_vector(n, -1.0, 1.0);
  // Step t runs from k-N (lag N) to k-1 (lag 1).
  for (std::size_t lag = horizon; lag >= 1; --lag) {
    const std::size_t slot = lag - 1;
    out.window.outputs[slot] = model.c(agent) * e;
    const Eigen::VectorXd u = rng.uniform_vector(static_cast<Eigen::Index>(model.control_dim(agent)), -1.0, 1.0);
    out.window.own_controls[slot] = u;
    Eigen::VectorXd next = model.a() * e + sys.f * u;
    for (std::size_t j = 0; j < sys.neighbors.size(); ++j) {
      const Eigen::VectorXd uj =
          rng.uniform_vector(static_cast<Eigen::Index>(model.control_dim(sys.neighbors[j])), -1.0, 1.0);
      out.window.neighbor_controls[j][slot] = uj;
      next += sys.e[j] * uj;
    }
    e = next;
  }
  out.error = e;
  return out;
}

EffectiveGain effective_state_gain(const MasModel& model, std::size_t agent, const PolicyGains& gains,
                                   std::size_t samples, std::uint64_t seed) {
  require(neighbors(model.graph(), agent).empty(), ErrorKind::InvalidArgument,
          "effective state gain needs an agent without neighbors");
  const std::size_t n_steps = gains.layout.horizon;
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  const auto m = static_cast<Eigen::Index>(model.control_dim(agent));
  const auto q = static_cast<Eigen::Index>(model.output_dim(agent));
  Rng rng(seed);
  Eigen::MatrixXd e_rows(static_cast<Eigen::Index>(samples), n);
  Eigen::MatrixXd u_rows(static_cast<Eigen::Index>(samples), m);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto cw = random_consistent_window(model, agent, n_steps, rng);
    // Policy arguments at step k: u(k-1..k-N+1) and y(k..k-N+1).
    Eigen::VectorXd own_past(m * static_cast<Eigen::Index>(n_steps - 1));
    for (std::size_t l = 0; l + 1 < n_steps; ++l) own_past.segment(static_cast<Eigen::Index>(l) * m, m) = cw.window.own_controls[l];
    Eigen::VectorXd outs(q * static_cast<Eigen::Index>(n_steps));
    outs.head(q) = model.c(agent) * cw.error;
    for (std::size_t l = 1; l < n_steps; ++l) outs.segment(static_cast<Eigen::Index>(l) * q, q) = cw.window.outputs[l - 1];
    const Eigen::VectorXd u = control(gains, own_past, Eigen::VectorXd(0), outs);
    e_rows.row(static_cast<Eigen::Index>(s)) = cw.error.transpose();
    u_rows.row(static_cast<Eigen::Index>(s)) = -u.transpose();
  }
  EffectiveGain out;
  out.k = e_rows.colPivHouseholderQr().solve(u_rows).transpose();
  out.fit_residual = (e_rows * out.k.transpose() - u_rows).cwiseAbs().maxCoeff();
  return out;
}

EstimatorCheck check_estimator(const MasModel& model, std::size_t horizon, std::size_t steps, std::uint64_t seed,
                               double amplitude) {
  const std::size_t agents = model.agent_count();
  std::vector<EstimatorMatrices> est;
  for (std::size_t i = 0; i < agents; ++i) est.push_back(build_estimator(model, i, horizon));
  const auto nsets = neighbor_sets(model.graph());

  EstimatorCheck out;
  IoTrace trace(agents);
  SwarmState state = random_state(model, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  for (std::size_t k = 0; k < steps; ++k) {
    const auto errors = tracking_errors(model, state);
    std::vector<Eigen::VectorXd> outputs;
    for (std::size_t i = 0; i < agents; ++i) outputs.push_back(model.c(i) * errors[i]);
    trace.push_outputs(std::move(outputs));
    if (k >= horizon) {
      for (std::size_t i = 0; i < agents; ++i) {
        const auto w = trace.window(i, nsets[i], static_cast<long>(k), horizon);
        const double err = (reconstruct_error(est[i], w) - errors[i]).norm();
        out.max_abs_error = std::max(out.max_abs_error, err);
        out.max_scaled_error = std::max(out.max_scaled_error, err / (1.0 + errors[i].norm()));
        ++out.windows;
      }
    }
    std::vector<Eigen::VectorXd> u;
    for (std::size_t i = 0; i < agents; ++i) {
      u.push_back(rng.uniform_vector(static_cast<Eigen::Index>(model.control_dim(i)), -amplitude, amplitude));
    }
    state = step(model, state, u);
    trace.push_controls(std::move(u));
  }
  return out;
}

Reduction single_agent_reduction(const MasModel& model, const CostWeights& weights, std::size_t agent) {
  require(agent < model.agent_count(), ErrorKind::InvalidArgument, "agent index out of range");
  Digraph g(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  MasModel reduced(model.a(), {model.b(agent)}, {model.c(agent)}, std::move(g));
  return {std::move(reduced), {AgentWeights{weights.at(agent).q, weights.at(agent).r_self, {}}}};
}

}  // namespace ioql
