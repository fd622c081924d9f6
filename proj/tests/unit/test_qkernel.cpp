#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "ioql/error.hpp"
#include "ioql/linalg.hpp"
#include "ioql/qkernel.hpp"
#include "ioql/random.hpp"

using namespace ioql;

namespace {

KernelLayout demo_layout() { return layout_for(fixtures::demo_model(), 0, 2); }

// Random symmetric positive definite kernel of the given layout.
QKernel random_spd(const KernelLayout& layout, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(layout.total_dim());
  const Eigen::MatrixXd m = rng.uniform_matrix(d, d, -1, 1);
  return QKernel(layout, m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d));
}

KernelLayout pair_layout() { return KernelLayout{1, {1}, 1, 1}; }

PolicyGains scalar_gains(double neighbor, double output) {
  auto g = PolicyGains::zero(pair_layout());
  g.g_neighbors(0, 0) = neighbor;
  g.g_output(0, 0) = output;
  return g;
}

}  // namespace

TEST_CASE("layout arithmetic for the demo node") {
  const auto l = demo_layout();
  CHECK(l.total_dim() == 8);
  CHECK(l.neighbor_offset(0) == 2);
  CHECK(l.output_offset() == 4);
  CHECK(l.control_width() == 4);
  CHECK(l.unknowns() == 36);
}

TEST_CASE("evaluate examples") {
  const auto l = demo_layout();
  const QKernel zero(l);
  Rng rng(1);
  for (int t = 0; t < 5; ++t) CHECK(evaluate(zero, rng.uniform_vector(8, -1, 1)) == 0.0);
  const QKernel eye(l, Eigen::MatrixXd::Identity(8, 8));
  for (Eigen::Index k = 0; k < 8; ++k) CHECK(evaluate(eye, Eigen::VectorXd::Unit(8, k)) == 1.0);
  CHECK_THROWS_AS(evaluate(eye, Eigen::VectorXd::Zero(7)), Error);
}

TEST_CASE("symmetry is exact by construction") {
  const auto l = demo_layout();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(8, 8);
  m(0, 3) = 2.0;
  m(3, 0) = -7.0;  // ignored
  const QKernel k(l, m);
  CHECK(k.matrix()(3, 0) == 2.0);
  CHECK(k.matrix() == k.matrix().transpose());
  const auto upper = k.upper_triangle();
  CHECK(upper.size() == 36);
  CHECK(QKernel::from_upper(l, upper) == k);
  CHECK_THROWS_AS(QKernel::from_upper(l, std::vector<double>(35, 0.0)), Error);
}

TEST_CASE("extract_blocks examples") {
  const auto l = demo_layout();
  const auto eye = extract_blocks(QKernel(l, Eigen::MatrixXd::Identity(8, 8)));
  CHECK(eye.p_uu == fixtures::scalar(1.0));
  CHECK(eye.p_own_past.isZero(0.0));
  CHECK(eye.p_neighbors.isZero(0.0));
  CHECK(eye.p_outputs.isZero(0.0));
  CHECK(eye.p_own_past.cols() == 1);
  CHECK(eye.p_neighbors.cols() == 2);
  CHECK(eye.p_outputs.cols() == 4);

  const Eigen::VectorXd v = Eigen::VectorXd::Unit(8, 0);
  const auto rank1 = extract_blocks(QKernel(l, v * v.transpose()));
  CHECK(rank1.p_uu == fixtures::scalar(1.0));
  CHECK(rank1.p_outputs.isZero(0.0));
}

TEST_CASE("property: blocks tile the leading rows exactly") {
  const auto l = demo_layout();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto k = random_spd(l, s);
    const auto b = extract_blocks(k);
    Eigen::MatrixXd rows(1, 8);
    rows << b.p_uu, b.p_own_past, b.p_neighbors, b.p_outputs;
    CHECK(rows == k.matrix().topRows(1));
  }
}

TEST_CASE("policy_gains examples") {
  const auto l = demo_layout();
  const auto zero = policy_gains(QKernel(l), fixtures::scalar(2.0));
  CHECK(zero.layout == l);
  CHECK(zero.g_own_past.isZero(0.0));
  CHECK(zero.g_neighbors.isZero(0.0));
  CHECK(zero.g_output.isZero(0.0));

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(8, 8);
  m(0, 0) = 1.0;
  m(0, 4) = 3.0;
  const auto g = policy_gains(QKernel(l, m), fixtures::scalar(2.0));
  CHECK(g.g_output(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(g.inverted_term(0, 0) == doctest::Approx(1.0 / 3.0));

  Eigen::MatrixXd singular = Eigen::MatrixXd::Zero(8, 8);
  singular(0, 0) = -2.0;
  try {
    policy_gains(QKernel(l, singular), fixtures::scalar(2.0));
    FAIL("expected SingularGain");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularGain);
  }
}

TEST_CASE("control examples") {
  const auto l = demo_layout();
  const auto g = policy_gains(random_spd(l, 3), fixtures::scalar(2.0));
  CHECK(control(g, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(4)).isZero(0.0));
  const auto z = PolicyGains::zero(l);
  CHECK(control(z, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(4)).isZero(0.0));
  CHECK_THROWS_AS(control(z, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(4)), Error);
}

TEST_CASE("property: the greedy control minimizes the Q-value") {
  const auto l = demo_layout();
  const Eigen::MatrixXd r = fixtures::scalar(2.0);
  Rng rng(7);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto k = random_spd(l, 100 + s);
    const auto g = policy_gains(k, r);
    const Eigen::VectorXd rest = rng.uniform_vector(7, -1, 1);
    Eigen::VectorXd w(8);
    w << control(g, rest.head(1), rest.segment(1, 2), rest.tail(4)), rest;
    const double best = greedy_objective(k, r, w);
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd moved = w;
      double delta = 0.0;
      while (delta == 0.0) delta = rng.uniform(-1, 1);
      moved(0) += delta;
      REQUIRE(greedy_objective(k, r, moved) > best);
    }
  }
}

TEST_CASE("property: gains ignore entries outside the leading rows and columns") {
  const auto l = demo_layout();
  Rng rng(8);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto k = random_spd(l, 200 + s);
    Eigen::MatrixXd extra = rng.uniform_matrix(8, 8, -5, 5);
    extra = (extra + extra.transpose()).eval();
    extra.row(0).setZero();
    extra.col(0).setZero();
    const Eigen::MatrixXd r = fixtures::scalar(1.5);
    CHECK(policy_gains(k, r) == policy_gains(QKernel(l, k.matrix() + extra), r));
  }
}

TEST_CASE("joint policy solves the coupled current controls exactly") {
  // u1 = 0.5 u2 + 2 y1, u2 = -0.25 u1 + y2
  const JointPolicy policy({{1}, {0}}, {scalar_gains(0.5, 2.0), scalar_gains(-0.25, 1.0)}, CouplingMode::Exact);
  IoTrace trace(2);
  trace.push_outputs({Eigen::VectorXd{{1.0}}, Eigen::VectorXd{{-2.0}}});
  const auto u = policy.controls(trace, 0);
  const Eigen::Matrix2d coupling{{1.0, -0.5}, {0.25, 1.0}};
  const Eigen::Vector2d expected = coupling.inverse() * Eigen::Vector2d(2.0, -2.0);
  CHECK(u[0](0) == doctest::Approx(expected(0)).epsilon(1e-14));
  CHECK(u[1](0) == doctest::Approx(expected(1)).epsilon(1e-14));
  CHECK(u[0](0) == doctest::Approx(0.5 * u[1](0) + 2.0).epsilon(1e-14));
}

TEST_CASE("joint policy delay mode uses last step's neighbor controls") {
  const JointPolicy policy({{1}, {0}}, {scalar_gains(0.5, 2.0), scalar_gains(-0.25, 1.0)}, CouplingMode::Delay);
  IoTrace trace(2);
  trace.push_outputs({Eigen::VectorXd{{0.0}}, Eigen::VectorXd{{0.0}}});
  trace.push_controls({Eigen::VectorXd{{4.0}}, Eigen::VectorXd{{8.0}}});
  trace.push_outputs({Eigen::VectorXd{{1.0}}, Eigen::VectorXd{{-2.0}}});
  const auto u = policy.controls(trace, 1);
  CHECK(u[0](0) == doctest::Approx(0.5 * 8.0 + 2.0));
  CHECK(u[1](0) == doctest::Approx(-0.25 * 4.0 - 2.0));
}

TEST_CASE("singular coupling is rejected") {
  try {
    JointPolicy({{1}, {0}}, {scalar_gains(1.0, 0.0), scalar_gains(1.0, 0.0)}, CouplingMode::Exact);
    FAIL("expected SingularCoupling");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularCoupling);
  }
  CHECK_NOTHROW(JointPolicy({{1}, {0}}, {scalar_gains(1.0, 0.0), scalar_gains(1.0, 0.0)}, CouplingMode::Delay));
}

TEST_CASE("swarm policy warms up for N - 1 steps") {
  const auto model = fixtures::demo_model();
  std::vector<PolicyGains> gains;
  for (std::size_t i = 0; i < 3; ++i) gains.push_back(policy_gains(random_spd(layout_for(model, i, 3), i), fixtures::scalar(2.0)));
  IoSwarmPolicy policy(JointPolicy(neighbor_sets(model.graph()), gains, CouplingMode::Exact));
  CHECK(policy.warmup_steps() == 2);
}
