#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "ioql/dynamics.hpp"
#include "ioql/error.hpp"
#include "ioql/linalg.hpp"
#include "ioql/random.hpp"

using namespace ioql;

namespace {

// Holds a fixed control for every agent.
class ConstantPolicy final : public SwarmPolicy {
 public:
  explicit ConstantPolicy(std::vector<Eigen::VectorXd> u) : u_(std::move(u)) {}
  void reset() override {}
  std::vector<Eigen::VectorXd> act(const SwarmObservation&) override { return u_; }
  void record_applied(std::span<const Eigen::VectorXd>) override {}

 private:
  std::vector<Eigen::VectorXd> u_;
};

// u = -k e for a single agent.
class GainPolicy final : public SwarmPolicy {
 public:
  explicit GainPolicy(Eigen::MatrixXd k) : k_(std::move(k)) {}
  void reset() override {}
  std::vector<Eigen::VectorXd> act(const SwarmObservation& obs) override { return {-k_ * obs.errors[0]}; }
  void record_applied(std::span<const Eigen::VectorXd>) override {}

 private:
  Eigen::MatrixXd k_;
};

}  // namespace

TEST_CASE("step examples") {
  const Digraph none(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  const MasModel rot(fixtures::rotation(), {Eigen::MatrixXd{{2}, {1}}}, {Eigen::MatrixXd::Identity(2, 2)}, none);
  SwarmState s{{Eigen::VectorXd::Zero(2)}, Eigen::VectorXd{{1, 0}}, 0};
  const auto next = step(rot, s, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(1)});
  CHECK(next.leader == Eigen::VectorXd{{0, -1}});
  CHECK(next.followers[0] == Eigen::VectorXd{{2, 1}});
  CHECK(next.step == 1);

  const MasModel zero(Eigen::MatrixXd::Zero(2, 2), {Eigen::MatrixXd{{2}, {1}}}, {Eigen::MatrixXd::Identity(2, 2)}, none);
  SwarmState z{{Eigen::VectorXd{{3, 4}}}, Eigen::VectorXd{{1, 1}}, 0};
  const auto zn = step(zero, z, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(1)});
  CHECK(zn.followers[0] == Eigen::VectorXd::Zero(2));

  CHECK_THROWS_AS(step(rot, s, std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(2)}), Error);
}

TEST_CASE("tracking_error examples") {
  const auto model = fixtures::demo_model();
  SwarmState same{{Eigen::VectorXd{{1, 2}}, Eigen::VectorXd{{1, 2}}, Eigen::VectorXd{{1, 2}}}, Eigen::VectorXd{{1, 2}}, 0};
  for (const auto& e : tracking_errors(model, same)) CHECK(e.norm() == 0.0);

  SwarmState s{{Eigen::VectorXd{{1, 0}}, Eigen::VectorXd{{5, 5}}, Eigen::VectorXd{{0, 0}}}, Eigen::VectorXd{{0, 0}}, 0};
  CHECK(tracking_error(model, s, 0) == Eigen::VectorXd{{2, 0}});

  const auto single = fixtures::scalar_model();
  SwarmState one{{Eigen::VectorXd{{3}}}, Eigen::VectorXd{{1}}, 0};
  CHECK(tracking_error(single, one, 0)(0) == 2.0);
  CHECK_THROWS_AS(tracking_error(model, s, 3), Error);
}

TEST_CASE("error_system_matrices examples") {
  const auto sys = error_system_matrices(fixtures::demo_model(), 0);
  CHECK(sys.f == Eigen::MatrixXd{{4}, {2}});
  REQUIRE(sys.neighbors == std::vector<std::size_t>{2});
  CHECK(sys.e[0] == Eigen::MatrixXd{{-2}, {-2}});
  const auto sys2 = error_system_matrices(fixtures::demo_model(), 1);
  CHECK(sys2.f == Eigen::MatrixXd{{2}, {3}});
}

TEST_CASE("error_output examples") {
  const auto model = fixtures::demo_model();
  CHECK(error_output(model, 0, Eigen::VectorXd{{2, 0}}) == Eigen::VectorXd{{2, 0}});
  CHECK(error_output(model, 0, Eigen::VectorXd::Zero(2)) == Eigen::VectorXd::Zero(2));
  const Digraph none(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  const MasModel row(fixtures::rotation(), {Eigen::MatrixXd{{2}, {1}}}, {Eigen::MatrixXd{{1, 0}}}, none);
  CHECK(error_output(row, 0, Eigen::VectorXd{{3, 5}}) == Eigen::VectorXd{{3}});
  CHECK_THROWS_AS(error_output(row, 0, Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("stage_cost examples") {
  const auto w = fixtures::demo_weights()[0];
  const std::vector<Eigen::VectorXd> none_u{Eigen::VectorXd::Zero(1)};
  CHECK(stage_cost(w, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), none_u) == 0.0);
  const std::vector<Eigen::VectorXd> nb{Eigen::VectorXd{{2}}};
  CHECK(stage_cost(w, Eigen::VectorXd{{1, 0}}, Eigen::VectorXd{{1}}, nb) == doctest::Approx(3.4).epsilon(1e-15));
  const AgentWeights lone{Eigen::MatrixXd::Identity(2, 2), fixtures::scalar(2.0), {}};
  CHECK(stage_cost(lone, Eigen::VectorXd{{0, 1}}, Eigen::VectorXd::Zero(1), {}) == 1.0);
  CHECK_THROWS_AS(stage_cost(lone, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(1), {}), Error);
}

TEST_CASE("rollout_cost examples") {
  const auto model = fixtures::scalar_model();
  const auto weights = fixtures::scalar_weights();
  GainPolicy pol(fixtures::scalar(0.3));
  const SwarmState zero{{Eigen::VectorXd::Zero(1)}, Eigen::VectorXd::Zero(1), 0};
  CHECK(rollout_cost(model, weights, pol, zero, 50, 0).cost == 0.0);

  const SwarmState start{{Eigen::VectorXd{{1.5}}}, Eigen::VectorXd{{0.5}}, 0};
  const auto one = rollout_cost(model, weights, pol, start, 1, 0);
  CHECK(one.horizon == 1);
  CHECK(one.cost == doctest::Approx(1.0 + 0.09).epsilon(1e-14));

  // Closed-form geometric sum: e_{k+1} = (0.5 - 0.3) e_k, cost (1 + 0.09) e_k^2.
  const double expected = (1.0 + 0.09) / (1.0 - 0.04);
  CHECK(rollout_cost(model, weights, pol, start, 500, 0).cost == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("property: tracking_error is linear in the states") {
  const auto model = fixtures::demo_model();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = random_state(model, seed);
    auto d = s;
    for (auto& x : d.followers) x *= 2.0;
    d.leader *= 2.0;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK((tracking_error(model, d, i) - 2.0 * tracking_error(model, s, i)).norm() <= 1e-14);
    }
  }
}

TEST_CASE("property: full-state simulation agrees with the error dynamics") {
  const auto model = fixtures::demo_model();
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_state(model, seed);
    for (int k = 0; k < 50; ++k) {
      std::vector<Eigen::VectorXd> u;
      for (std::size_t i = 0; i < 3; ++i) u.push_back(rng.uniform_vector(1, -1, 1));
      const auto e = tracking_errors(model, s);
      const auto next = step(model, s, u);
      const auto e_next = tracking_errors(model, next);
      for (std::size_t i = 0; i < 3; ++i) {
        const auto sys = error_system_matrices(model, i);
        Eigen::VectorXd pred = model.a() * e[i] + sys.f * u[i];
        for (std::size_t j = 0; j < sys.neighbors.size(); ++j) pred += sys.e[j] * u[sys.neighbors[j]];
        REQUIRE((pred - e_next[i]).cwiseAbs().maxCoeff() <= 1e-10);
      }
      s = next;
    }
  }
}

TEST_CASE("property: stage_cost is positive definite") {
  const auto w = fixtures::demo_weights()[1];
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd y = rng.uniform_vector(2, -1, 1);
    const Eigen::VectorXd u = rng.uniform_vector(1, -1, 1);
    const std::vector<Eigen::VectorXd> nb{rng.uniform_vector(1, -1, 1)};
    CHECK(stage_cost(w, y, u, nb) > 0.0);
  }
  CHECK(stage_cost(w, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(1)}) == 0.0);
}

TEST_CASE("property: the leader ignores follower controls") {
  const auto model = fixtures::demo_model();
  auto a = random_state(model, 3);
  auto b = a;
  Rng rng(2);
  for (int k = 0; k < 30; ++k) {
    std::vector<Eigen::VectorXd> ua, ub;
    for (int i = 0; i < 3; ++i) {
      ua.push_back(rng.uniform_vector(1, -5, 5));
      ub.push_back(Eigen::VectorXd::Zero(1));
    }
    a = step(model, a, ua);
    b = step(model, b, ub);
    REQUIRE(identical(a.leader, b.leader));
  }
}

TEST_CASE("weights validation names the offending field") {
  const auto model = fixtures::demo_model();
  auto w = fixtures::demo_weights();
  w[1].r_self = fixtures::scalar(0.0);
  try {
    validate_weights(model, w);
    FAIL("expected ValidationError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ValidationError);
    CHECK(std::string(e.what()).find("R_ii not positive definite") != std::string::npos);
    CHECK(std::string(e.what()).find("R_self[2]") != std::string::npos);
  }
}

TEST_CASE("structural warnings flag lost reachability or observability") {
  CHECK(fixtures::demo_model().structural_warnings().empty());
  const Digraph none(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  const MasModel bad(Eigen::MatrixXd::Identity(2, 2), {Eigen::MatrixXd{{1}, {0}}}, {Eigen::MatrixXd{{1, 0}}}, none);
  CHECK(bad.structural_warnings().size() == 2);
}

TEST_CASE("constant policy rollout accumulates every stage") {
  const auto model = fixtures::scalar_model();
  ConstantPolicy pol({Eigen::VectorXd::Zero(1)});
  const SwarmState start{{Eigen::VectorXd{{1.0}}}, Eigen::VectorXd::Zero(1), 0};
  // e halves each step: sum of 4^-k over three steps.
  CHECK(rollout_cost(model, fixtures::scalar_weights(), pol, start, 3, 0).cost == doctest::Approx(1.3125));
}
