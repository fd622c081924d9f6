#include "ioql/learner.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>

#include "ioql/error.hpp"
#include "ioql/linalg.hpp"
#include "ioql/random.hpp"

namespace ioql {

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kStateStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kHeldoutStateStream = 101;
constexpr std::uint64_t kHeldoutNoiseStream = 102;
constexpr std::uint64_t kFreshStreamBase = 1000;

const double kSqrt2 = std::sqrt(2.0);

}  // namespace

void validate_config(const LearnerConfig& c) {
  require(c.exploration_amplitude >= 0.0 && std::isfinite(c.exploration_amplitude), ErrorKind::InvalidArgument,
          "learner.exploration_amplitude must be non-negative");
  require(c.convergence_epsilon > 0.0, ErrorKind::InvalidArgument, "learner.epsilon must be positive");
  require(c.ridge_lambda >= 0.0, ErrorKind::InvalidArgument, "learner.ridge_lambda must be non-negative");
  require(c.rank_rcond > 0.0 && c.rank_rcond < 1.0, ErrorKind::InvalidArgument,
          "learner.rank_rcond must lie in (0, 1)");
}

std::size_t resolve_horizon(const MasModel& model, const LearnerConfig& config) {
  return config.horizon > 0 ? config.horizon : default_horizon(model);
}

std::size_t resolve_sample_count(const MasModel& model, const LearnerConfig& config) {
  const std::size_t n_steps = resolve_horizon(model, config);
  std::size_t most = 0;
  std::size_t unknowns = 0;
  for (std::size_t i = 0; i < model.agent_count(); ++i) {
    const auto lay = layout_for(model, i, n_steps);
    most = std::max(most, lay.total_dim() * (lay.total_dim() + 1));
    unknowns = std::max(unknowns, lay.unknowns());
  }
  if (config.samples_per_iteration == 0) return most;
  require(config.samples_per_iteration >= unknowns, ErrorKind::InvalidArgument,
          "learner.samples_per_iteration must be at least d(d+1)/2 = " + std::to_string(unknowns));
  return config.samples_per_iteration;
}

double sample_reward(const Sample& s, const AgentWeights& w) {
  return stage_cost(w, s.output, s.policy_control, s.neighbor_policy_controls);
}

RecordedRun record_run(const MasModel& model, const JointPolicy& policy, std::size_t horizon, double amplitude,
                       std::size_t count, std::uint64_t state_seed, std::uint64_t noise_seed) {
  require(horizon >= 1, ErrorKind::InvalidArgument, "window horizon must be at least 1");
  RecordedRun run{IoTrace(model.agent_count()), horizon, static_cast<long>(horizon), count};
  SwarmState state = random_state(model, state_seed);
  Rng noise(noise_seed);
  const long end = run.first_sample + static_cast<long>(count);
  for (long k = 0; k < end; ++k) {
    const auto errors = tracking_errors(model, state);
    std::vector<Eigen::VectorXd> outputs;
    for (std::size_t i = 0; i < errors.size(); ++i) outputs.push_back(model.c(i) * errors[i]);
    run.trace.push_outputs(std::move(outputs));

    std::vector<Eigen::VectorXd> u;
    if (k < run.first_sample) {
      for (std::size_t i = 0; i < model.agent_count(); ++i) {
        u.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.control_dim(i))));
      }
    } else {
      u = policy.controls(run.trace, k);
    }
    for (auto& ui : u) ui += noise.uniform_vector(ui.size(), -amplitude, amplitude);
    state = step(model, state, u);
    run.trace.push_controls(std::move(u));
  }
  return run;
}

std::vector<std::vector<Sample>> build_samples(const MasModel& model, const RecordedRun& run,
                                               const JointPolicy& policy) {
  const auto nsets = neighbor_sets(model.graph());
  std::vector<std::vector<Sample>> out(model.agent_count());
  for (auto& v : out) v.reserve(run.count);
  for (std::size_t s = 0; s < run.count; ++s) {
    const long k = run.first_sample + static_cast<long>(s);
    const auto pi = policy.controls(run.trace, k);
    for (std::size_t i = 0; i < model.agent_count(); ++i) {
      const auto& nb = nsets[i];
      const auto lay = layout_for(model, i, run.horizon);
      Sample smp;
      smp.step = k;
      smp.w_now = run.trace.window(i, nb, k, run.horizon).flatten();
      smp.w_next = run.trace.window(i, nb, k + 1, run.horizon).flatten();
      smp.w_next_policy = smp.w_next;
      smp.w_next_policy.head(pi[i].size()) = pi[i];
      for (std::size_t j = 0; j < nb.size(); ++j) {
        smp.w_next_policy.segment(static_cast<Eigen::Index>(lay.neighbor_offset(j)), pi[nb[j]].size()) = pi[nb[j]];
        smp.neighbor_policy_controls.push_back(pi[nb[j]]);
      }
      smp.output = run.trace.output(k, i);
      smp.control = run.trace.control(k, i);
      smp.policy_control = pi[i];
      out[i].push_back(std::move(smp));
    }
  }
  return out;
}

Eigen::VectorXd quadratic_features(const Eigen::VectorXd& w) {
  const Eigen::Index d = w.size();
  Eigen::VectorXd phi(d * (d + 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index a = 0; a < d; ++a) {
    phi(p++) = w(a) * w(a);
    for (Eigen::Index b = a + 1; b < d; ++b) phi(p++) = kSqrt2 * w(a) * w(b);
  }
  return phi;
}

QKernel kernel_from_features(const KernelLayout& layout, const Eigen::VectorXd& theta) {
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  require(theta.size() == d * (d + 1) / 2, ErrorKind::InvalidArgument, "feature vector has wrong length");
  std::vector<double> upper(static_cast<std::size_t>(theta.size()));
  Eigen::Index p = 0;
  for (Eigen::Index a = 0; a < d; ++a) {
    upper[static_cast<std::size_t>(p)] = theta(p);
    ++p;
    for (Eigen::Index b = a + 1; b < d; ++b, ++p) upper[static_cast<std::size_t>(p)] = theta(p) / kSqrt2;
  }
  return QKernel::from_upper(layout, upper);
}

namespace {

Eigen::MatrixXd window_matrix(const std::vector<Sample>& samples, Eigen::Index d) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    require(samples[r].w_now.size() == d, ErrorKind::InvalidArgument, "sample dimension mismatch");
    w.row(static_cast<Eigen::Index>(r)) = samples[r].w_now.transpose();
  }
  return w;
}

Eigen::MatrixXd feature_matrix(const std::vector<Sample>& samples, Eigen::Index d) {
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(samples.size()), d * (d + 1) / 2);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    phi.row(static_cast<Eigen::Index>(r)) = quadratic_features(samples[r].w_now).transpose();
  }
  return phi;
}

std::size_t rank_from(const Eigen::VectorXd& sv, double rcond) {
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > rcond * sv(0)) ++r;
  return r;
}

Excitation excitation_with(const Eigen::MatrixXd& w, const Eigen::VectorXd& feature_sv, const KernelLayout& layout,
                           double rcond) {
  Excitation ex;
  const Eigen::VectorXd wsv = singular_values(w);
  ex.window_rank = rank_from(wsv, rcond);
  ex.control_width = layout.control_width();
  const double scale = wsv.size() > 0 ? wsv(0) : 0.0;
  ex.control_rank = numerical_rank(w.leftCols(static_cast<Eigen::Index>(ex.control_width)), rcond * scale);
  ex.feature_rank = rank_from(feature_sv, rcond);
  ex.required_features = ex.window_rank * (ex.window_rank + 1) / 2;
  return ex;
}

}  // namespace

Excitation excitation(const std::vector<Sample>& samples, const KernelLayout& layout, double rcond) {
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  const Eigen::MatrixXd w = window_matrix(samples, d);
  return excitation_with(w, singular_values(feature_matrix(samples, d)), layout, rcond);
}

void require_excitation(const Excitation& ex, std::size_t agent) {
  require(ex.sufficient(), ErrorKind::RankDeficientData,
          "agent " + std::to_string(agent + 1) + ": insufficient excitation (control rank " +
              std::to_string(ex.control_rank) + " of " + std::to_string(ex.control_width) + ", feature rank " +
              std::to_string(ex.feature_rank) + " of " + std::to_string(ex.required_features) +
              "); raise the exploration amplitude or the sample count");
}

std::vector<std::vector<Sample>> collect_samples(const MasModel& model, const JointPolicy& policy,
                                                 const LearnerConfig& config, std::size_t count,
                                                 std::uint64_t state_seed, std::uint64_t noise_seed) {
  const std::size_t n_steps = resolve_horizon(model, config);
  if (count == 0) return std::vector<std::vector<Sample>>(model.agent_count());
  const auto run =
      record_run(model, policy, n_steps, config.exploration_amplitude, count, state_seed, noise_seed);
  auto samples = build_samples(model, run, policy);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_excitation(excitation(samples[i], layout_for(model, i, n_steps), config.rank_rcond), i);
  }
  return samples;
}

ValueUpdate value_update(const std::vector<Sample>& samples, const QKernel& kernel_prev, const AgentWeights& w,
                         const LearnerConfig& config, std::size_t agent) {
  const auto& layout = kernel_prev.layout();
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  require(samples.size() >= layout.unknowns(), ErrorKind::RankDeficientData,
          "agent " + std::to_string(agent + 1) + ": " + std::to_string(samples.size()) +
              " samples for " + std::to_string(layout.unknowns()) + " unknowns");

  const Eigen::MatrixXd phi = feature_matrix(samples, d);
  Eigen::VectorXd target(phi.rows());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    target(static_cast<Eigen::Index>(r)) = sample_reward(samples[r], w) + evaluate(kernel_prev, samples[r].w_next_policy);
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd wmat = window_matrix(samples, d);
  const Excitation ex = excitation_with(wmat, sv, layout, config.rank_rcond);
  require_excitation(ex, agent);

  const std::size_t keep = rank_from(sv, config.rank_rcond);
  const auto kk = static_cast<Eigen::Index>(keep);
  Eigen::VectorXd proj = svd.matrixU().leftCols(kk).transpose() * target;
  for (Eigen::Index k = 0; k < kk; ++k) proj(k) *= sv(k) / (sv(k) * sv(k) + config.ridge_lambda);
  const Eigen::VectorXd theta = svd.matrixV().leftCols(kk) * proj;

  ValueUpdate out{kernel_from_features(layout, theta), ex, 0.0};
  const Eigen::VectorXd fit = phi * theta;
  for (Eigen::Index r = 0; r < fit.size(); ++r) {
    out.max_residual = std::max(out.max_residual, std::abs(fit(r) - target(r)) / (1.0 + std::abs(target(r))));
  }
  return out;
}

PolicyGains policy_improvement(const QKernel& kernel, const AgentWeights& w) {
  return policy_gains(kernel, w.r_self);
}

std::vector<double> bellman_residuals(const std::vector<Sample>& samples, const QKernel& kernel,
                                      const AgentWeights& w) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const double target = sample_reward(s, w) + evaluate(kernel, s.w_next_policy);
    out.push_back(std::abs(evaluate(kernel, s.w_now) - target) / (1.0 + std::abs(target)));
  }
  return out;
}

namespace {

template <typename Fn>
auto per_agent(std::size_t agents, bool parallel, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out;
  out.reserve(agents);
  if (!parallel || agents < 2) {
    for (std::size_t i = 0; i < agents; ++i) out.push_back(fn(i));
    return out;
  }
  std::vector<std::future<R>> jobs;
  for (std::size_t i = 0; i < agents; ++i) jobs.push_back(std::async(std::launch::async, fn, i));
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace

LearningOutcome run(const MasModel& model, const CostWeights& weights, const LearnerConfig& config) {
  validate_config(config);
  validate_weights(model, weights);
  const std::size_t agents = model.agent_count();
  const std::size_t n_steps = resolve_horizon(model, config);
  const std::size_t count = resolve_sample_count(model, config);
  const auto nsets = neighbor_sets(model.graph());

  LearningOutcome out;
  auto& report = out.report;
  report.config = config;
  report.horizon = n_steps;
  report.samples_per_iteration = count;
  for (std::size_t i = 0; i < agents; ++i) report.layouts.push_back(layout_for(model, i, n_steps));

  if (config.initial_kernels) {
    require(config.initial_kernels->size() == agents, ErrorKind::InvalidArgument,
            "learner.initial_kernels: one kernel per agent required");
    for (std::size_t i = 0; i < agents; ++i) {
      require((*config.initial_kernels)[i].layout() == report.layouts[i], ErrorKind::InvalidArgument,
              "learner.initial_kernels: layout mismatch for agent " + std::to_string(i + 1));
    }
    out.kernels = *config.initial_kernels;
  } else {
    for (const auto& lay : report.layouts) out.kernels.emplace_back(lay);
  }
  for (std::size_t i = 0; i < agents; ++i) out.gains.push_back(policy_improvement(out.kernels[i], weights[i]));

  const std::uint64_t seed = config.rng_seed;
  std::optional<RecordedRun> batch;
  if (config.data_mode == DataMode::ReuseBatch) {
    const JointPolicy initial(nsets, out.gains, config.coupling_mode);
    batch = record_run(model, initial, n_steps, config.exploration_amplitude, count,
                       derive_seed(seed, kStateStream), derive_seed(seed, kNoiseStream));
  }

  for (std::size_t s = 0; s < config.max_iterations; ++s) {
    const JointPolicy policy(nsets, out.gains, config.coupling_mode);
    std::optional<RecordedRun> fresh;
    const RecordedRun* data = nullptr;
    if (batch) {
      data = &*batch;
    } else {
      const bool fixed = config.probe_mode == ProbeMode::Fixed;
      const std::uint64_t base = fixed ? 0 : kFreshStreamBase + 2 * s;
      fresh = record_run(model, policy, n_steps, config.exploration_amplitude, count,
                         derive_seed(seed, base + kStateStream), derive_seed(seed, base + kNoiseStream));
      data = &*fresh;
    }
    const auto samples = build_samples(model, *data, policy);

    // Value updates all read the same batch and the pre-iteration kernels.
    const auto updates = per_agent(agents, config.parallel, [&](std::size_t i) {
      return value_update(samples[i], out.kernels[i], weights[i], config, i);
    });

    IterationRecord rec;
    rec.index = s + 1;
    for (std::size_t i = 0; i < agents; ++i) {
      rec.deltas.push_back((updates[i].kernel.matrix() - out.kernels[i].matrix()).norm());
      rec.feature_ranks.push_back(updates[i].excitation.feature_rank);
      rec.window_ranks.push_back(updates[i].excitation.window_rank);
      rec.train_residuals.push_back(updates[i].max_residual);
      rec.kernels.push_back(updates[i].kernel);
    }
    rec.max_delta = *std::max_element(rec.deltas.begin(), rec.deltas.end());

    // Policy improvement only after every value update is done.
    std::vector<PolicyGains> improved;
    for (std::size_t i = 0; i < agents; ++i) improved.push_back(policy_improvement(rec.kernels[i], weights[i]));
    out.kernels = rec.kernels;
    out.gains = std::move(improved);
    report.final_delta = rec.max_delta;
    report.iterations.push_back(std::move(rec));
    report.iteration_count = s + 1;
    if (report.final_delta <= config.convergence_epsilon) {
      report.converged = true;
      break;
    }
  }

  if (report.iteration_count > 0) {
    const JointPolicy final_policy(nsets, out.gains, config.coupling_mode);
    const std::size_t held = config.heldout_samples > 0 ? config.heldout_samples : count;
    const auto run_h = record_run(model, final_policy, n_steps, config.exploration_amplitude, held,
                                  derive_seed(seed, kHeldoutStateStream), derive_seed(seed, kHeldoutNoiseStream));
    const auto samples = build_samples(model, run_h, final_policy);
    for (std::size_t i = 0; i < agents; ++i) {
      const auto res = bellman_residuals(samples[i], out.kernels[i], weights[i]);
      report.heldout_residuals.push_back(res.empty() ? 0.0 : *std::max_element(res.begin(), res.end()));
    }
  }
  return out;
}

}  // namespace ioql
