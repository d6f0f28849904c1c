#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <numbers>

#include "simcal/simulators.hpp"

using namespace simcal;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

TaskSpec msd_with_stiff_range(double k_high) {
  return TaskSpec(TaskName::MassSpringDamper,
                  ParamSpace({{"mass", 0.01, 10.0},
                              {"stiffness", 0.1, k_high},
                              {"damping", -1e-9, 1.0}}),
                  default_constants(TaskName::MassSpringDamper));
}

}  // namespace

TEST_CASE("pendulum step: fixed point and hand-computed update", "[simulators]") {
  auto constants = default_constants(TaskName::Pendulum);
  constants["damping"] = 0.0;
  TaskSpec no_damping(TaskName::Pendulum, default_param_space(TaskName::Pendulum), constants);
  const Vector theta = vec2(1.0, 1.0);

  const Vector rest = step(no_damping, theta, vec2(0.0, 0.0), vec1(0.0));
  CHECK(rest[0] == 0.0);
  CHECK(rest[1] == 0.0);

  const Vector pushed =
      step(no_damping, theta, vec2(std::numbers::pi / 2.0, 0.0), vec1(0.0));
  CHECK_THAT(pushed[1], Catch::Matchers::WithinAbs(-0.4905, 1e-10));
  CHECK_THAT(pushed[0], Catch::Matchers::WithinAbs(std::numbers::pi / 2.0 + 0.05 * -0.4905, 1e-12));

  TaskSpec task = make_task(TaskName::Pendulum);
  CHECK_THROWS_AS(step(task, vec1(1.0), vec2(0.0, 0.0), vec1(0.0)), std::invalid_argument);
}

TEST_CASE("mass-spring-damper step matches direct substitution", "[simulators]") {
  auto constants = default_constants(TaskName::MassSpringDamper);
  constants["dt"] = 0.1;
  TaskSpec task(TaskName::MassSpringDamper,
                ParamSpace({{"mass", 0.1, 10.0}, {"stiffness", -1e-9, 10.0}, {"damping", -1e-9, 10.0}}),
                constants);
  Vector theta(3);
  theta << 2.0, 0.0, 0.0;
  const Vector next = step(task, theta, vec2(0.0, 0.0), vec1(1.0));
  CHECK_THAT(next[0], Catch::Matchers::WithinAbs(0.005, 1e-15));
  CHECK_THAT(next[1], Catch::Matchers::WithinAbs(0.05, 1e-15));
}

TEST_CASE("cartpole upright equilibrium is a fixed point", "[simulators]") {
  TaskSpec task = make_task(TaskName::Cartpole);
  Vector theta(3);
  theta << 1.0, 0.1, 0.5;
  const Vector next = step(task, theta, Vector::Zero(4), vec1(0.0));
  CHECK(next.isZero(0.0));

  Vector kicked(4);
  kicked << 0.1, -0.2, 0.3, 0.5;
  CHECK(all_finite(step(task, theta, kicked, vec1(5.0))));
}

TEST_CASE("actions are clipped to bounds before use", "[simulators]") {
  TaskSpec task = make_task(TaskName::Pendulum);
  const Vector theta = vec2(1.0, 1.0);
  const Vector a = step(task, theta, vec2(0.0, 0.0), vec1(100.0));
  const Vector b = step(task, theta, vec2(0.0, 0.0), vec1(task.action_bound()));
  CHECK(a == b);
}

TEST_CASE("undamped oscillator conserves the symplectic-Euler quadratic",
          "[simulators][property]") {
  // Velocity-first (kick-drift) updates conserve
  //   H = m v^2/2 + k x^2/2 - (dt/2) k x v
  // exactly for the linear oscillator, up to floating-point drift.
  TaskSpec task = msd_with_stiff_range(10.0);
  const double m = 1.0, k = 2.0;
  Vector theta(3);
  theta << m, k, 0.0;
  const double dt = task.dt();
  auto energy = [&](const Vector& s) {
    return 0.5 * m * s[1] * s[1] + 0.5 * k * s[0] * s[0] - 0.5 * dt * k * s[0] * s[1];
  };
  Vector state = vec2(1.0, 0.0);
  const double h0 = energy(state);
  double max_drift = 0.0;
  for (int t = 0; t < 10000; ++t) {
    state = step(task, theta, state, vec1(0.0));
    max_drift = std::max(max_drift, std::abs(energy(state) - h0) / std::abs(h0));
  }
  CHECK(max_drift < 1e-6);
}

TEST_CASE("pendulum small-angle period matches 2 pi sqrt(l/g)", "[simulators][property]") {
  auto constants = default_constants(TaskName::Pendulum);
  constants["dt"] = 0.001;
  constants["damping"] = 0.0;
  TaskSpec task(TaskName::Pendulum, default_param_space(TaskName::Pendulum), constants);
  const double l = 0.8, g = 9.81;
  const Vector theta = vec2(1.3, l);

  Vector state = vec2(0.01, 0.0);
  std::vector<double> upward_crossings;
  double prev = state[0];
  for (int t = 1; t < 40000 && upward_crossings.size() < 12; ++t) {
    state = step(task, theta, state, vec1(0.0));
    if (prev < 0.0 && state[0] >= 0.0) {
      const double frac = -prev / (state[0] - prev);
      upward_crossings.push_back((t - 1 + frac) * task.dt());
    }
    prev = state[0];
  }
  REQUIRE(upward_crossings.size() >= 11);
  const double measured = (upward_crossings[10] - upward_crossings[0]) / 10.0;
  const double expected = 2.0 * std::numbers::pi * std::sqrt(l / g);
  CHECK_THAT(measured, Catch::Matchers::WithinRel(expected, 0.02));
}

TEST_CASE("rollout preserves the pendulum fixed point under zero action", "[simulators]") {
  auto constants = default_constants(TaskName::Pendulum);
  constants["init_angle_range"] = 0.0;
  constants["damping"] = 0.0;
  TaskSpec task(TaskName::Pendulum, default_param_space(TaskName::Pendulum), constants);
  const Trajectory traj = rollout(task, vec2(1.0, 1.0), Policy::fixed(vec1(0.0)),
                                  RandomStream(1, "fp"), 50);
  CHECK(traj.states.isZero(0.0));
  CHECK(traj.actions.isZero(0.0));
  REQUIRE(traj.params.has_value());
  CHECK((*traj.params)[0] == 1.0);
}

TEST_CASE("rollout is deterministic and respects bounds", "[simulators]") {
  TaskSpec task = make_task(TaskName::Pendulum);
  const Vector theta = vec2(1.0, 1.0);
  const Trajectory a = rollout(task, theta, Policy::random(), RandomStream(9, "ep"), 100);
  const Trajectory b = rollout(task, theta, Policy::random(), RandomStream(9, "ep"), 100);
  CHECK(a.states == b.states);
  CHECK(a.actions == b.actions);
  CHECK(a.actions.cwiseAbs().maxCoeff() <= task.action_bound());
  CHECK(all_finite(a.states));
  CHECK_THROWS_AS(rollout(task, theta, Policy::random(), RandomStream(9, "x"), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(rollout(task, vec2(100.0, 1.0), Policy::random(), RandomStream(9, "x"), 10),
                  std::invalid_argument);
}

TEST_CASE("dynamics blow-up carries parameters and step index", "[simulators]") {
  TaskSpec task = msd_with_stiff_range(1e18);
  Vector theta(3);
  theta << 0.01, 1e18, 0.0;
  try {
    rollout(task, theta, Policy::fixed(vec1(0.0)), RandomStream(2, "boom"), 100);
    FAIL("expected DynamicsBlowup");
  } catch (const DynamicsBlowup& e) {
    CHECK(e.theta[1] == 1e18);
    CHECK(e.step_index >= 0);
  }
}

TEST_CASE("rollout batch is invariant to thread count", "[simulators]") {
  TaskSpec task = make_task(TaskName::Pendulum);
  RandomStream rng(77, "batch");
  Matrix thetas(4, 2);
  thetas << 1.0, 1.0, 0.5, 0.5, 1.5, 0.8, 0.9, 1.9;
  const RolloutBatch seq = rollout_batch(task, thetas, Policy::random(), rng, 50, 1);
  const RolloutBatch par = rollout_batch(task, thetas, Policy::random(), rng, 50, 4);
  REQUIRE(seq.trajectories.size() == 4);
  REQUIRE(par.trajectories.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(seq.trajectories[i].states == par.trajectories[i].states);
    CHECK(seq.trajectories[i].actions == par.trajectories[i].actions);
  }

  // identical parameter rows under a fixed policy and deterministic init
  TaskSpec msd = make_task(TaskName::MassSpringDamper);
  Matrix same(3, 3);
  same << 1.0, 2.0, 0.4, 1.0, 2.0, 0.4, 1.0, 2.0, 0.4;
  const RolloutBatch identical =
      rollout_batch(msd, same, Policy::fixed(vec1(0.0)), rng, 50, 2);
  CHECK(identical.trajectories[0].states == identical.trajectories[1].states);
  CHECK(identical.trajectories[1].states == identical.trajectories[2].states);
}

TEST_CASE("rollout batch fails only above 10% episode failures", "[simulators]") {
  TaskSpec task = msd_with_stiff_range(1e18);
  Matrix thetas(20, 3);
  for (int i = 0; i < 20; ++i) {
    thetas(i, 0) = 1.0;
    thetas(i, 1) = 2.0;
    thetas(i, 2) = 0.4;
  }
  thetas(7, 0) = 0.01;
  thetas(7, 1) = 1e18;  // one stiff row: 5% failure, tolerated
  RandomStream rng(3, "drop");
  const RolloutBatch partial = rollout_batch(task, thetas, Policy::random(), rng, 100, 2);
  CHECK(partial.trajectories.size() == 19);
  REQUIRE(partial.failed_indices.size() == 1);
  CHECK(partial.failed_indices[0] == 7);
  CHECK(partial.episode_indices[7] == 8);  // order preserved around the gap

  for (int i = 0; i < 5; ++i) {
    thetas(i, 0) = 0.01;
    thetas(i, 1) = 1e18;  // 6 of 20 fail: 30% > 10%
  }
  CHECK_THROWS_AS(rollout_batch(task, thetas, Policy::random(), rng, 100, 2),
                  std::runtime_error);
}

TEST_CASE("real rollout hides parameters but reuses the generator", "[simulators]") {
  TaskSpec task = make_task(TaskName::Pendulum);
  RealConfig real_cfg(task.param_space(), {{"mass", 1.2}, {"length", 0.7}});
  const Trajectory real =
      real_rollout(task, real_cfg, Policy::random(), RandomStream(5, "real"), 60);
  CHECK_FALSE(real.params.has_value());

  const Trajectory sim =
      rollout(task, real_cfg.theta(), Policy::random(), RandomStream(5, "real"), 60);
  CHECK(real.states == sim.states);
  CHECK(real.actions == sim.actions);

  CHECK_THROWS_AS(RealConfig(task.param_space(), {{"mass", 99.0}, {"length", 0.7}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(RealConfig(task.param_space(), {{"mass", 1.0}}), std::invalid_argument);
}

TEST_CASE("two thousand pendulum episodes complete quickly", "[simulators][perf]") {
  TaskSpec task = make_task(TaskName::Pendulum);
  RandomStream rng(123, "perf");
  RandomStream prior_rng(123, "perf_prior");
  const Prior prior = Prior::uniform(task.param_space());
  const Matrix thetas = prior.sample(prior_rng, 2000);
  const auto t0 = std::chrono::steady_clock::now();
  const RolloutBatch batch = rollout_batch(task, thetas, Policy::random(), rng, 100);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(batch.trajectories.size() == 2000);
  INFO("wall-clock seconds: " << elapsed.count());
  CHECK(elapsed.count() < 60.0);
}
