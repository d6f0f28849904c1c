#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "simcal/math.hpp"
#include "simcal/param_space.hpp"
#include "simcal/random.hpp"
#include "simcal/trajectory.hpp"

namespace simcal {

enum class TaskName { Pendulum, Cartpole, MassSpringDamper };

inline std::string to_string(TaskName t) {
  switch (t) {
    case TaskName::Pendulum: return "Pendulum";
    case TaskName::Cartpole: return "Cartpole";
    case TaskName::MassSpringDamper: return "MassSpringDamper";
  }
  return "?";
}

inline TaskName task_name_from_string(const std::string& s) {
  if (s == "Pendulum") return TaskName::Pendulum;
  if (s == "Cartpole") return TaskName::Cartpole;
  if (s == "MassSpringDamper") return TaskName::MassSpringDamper;
  throw std::invalid_argument("unknown task '" + s + "'");
}

/// A dynamics step produced a non-finite state. Carries the offending
/// parameters and the step index (filled in by rollout).
class DynamicsBlowup : public std::runtime_error {
 public:
  DynamicsBlowup(Vector theta, int step_index)
      : std::runtime_error("dynamics blow-up at step " + std::to_string(step_index)),
        theta(std::move(theta)),
        step_index(step_index) {}
  Vector theta;
  int step_index;
};

/// Analytic dynamical system standing in for a GPU simulator task: which
/// parameters are randomized, which constants are pinned, and the
/// state/action layout.
class TaskSpec {
 public:
  TaskSpec(TaskName name, ParamSpace space, std::map<std::string, double> constants)
      : name_(name), space_(std::move(space)), constants_(std::move(constants)) {
    for (const char* key : required_constants(name_)) {
      if (!constants_.count(key))
        throw std::invalid_argument("TaskSpec: missing constant '" + std::string(key) + "'");
    }
    if (constants_.at("episode_steps") < 2.0)
      throw std::invalid_argument("TaskSpec: episode_steps must be >= 2");
    param_idx_.clear();
    for (const char* key : required_params(name_)) {
      const int idx = space_.index_of(key);
      if (idx < 0)
        throw std::invalid_argument("TaskSpec: parameter '" + std::string(key) +
                                    "' missing from param space");
      param_idx_.push_back(idx);
    }
    switch (name_) {
      case TaskName::Pendulum: ds_ = 2; da_ = 1; break;
      case TaskName::Cartpole: ds_ = 4; da_ = 1; break;
      case TaskName::MassSpringDamper: ds_ = 2; da_ = 1; break;
    }
  }

  TaskName name() const { return name_; }
  const ParamSpace& param_space() const { return space_; }
  int state_dim() const { return ds_; }
  int action_dim() const { return da_; }
  double constant(const std::string& key) const { return constants_.at(key); }
  const std::map<std::string, double>& constants() const { return constants_; }
  double dt() const { return constants_.at("dt"); }
  int episode_steps() const { return static_cast<int>(constants_.at("episode_steps")); }
  double action_bound() const { return constants_.at("action_bound"); }

  static std::vector<const char*> required_params(TaskName name) {
    switch (name) {
      case TaskName::Pendulum: return {"mass", "length"};
      case TaskName::Cartpole: return {"cart_mass", "pole_mass", "pole_length"};
      case TaskName::MassSpringDamper: return {"mass", "stiffness", "damping"};
    }
    return {};
  }

  static std::vector<const char*> required_constants(TaskName name) {
    switch (name) {
      case TaskName::Pendulum:
        return {"gravity", "dt", "episode_steps", "action_bound", "damping", "init_angle_range"};
      case TaskName::Cartpole:
        return {"gravity", "dt", "episode_steps", "action_bound", "init_range"};
      case TaskName::MassSpringDamper:
        return {"dt", "episode_steps", "action_bound", "init_position", "init_velocity"};
    }
    return {};
  }

  /// Index into theta for the i-th required parameter of this task.
  int param_index(int i) const { return param_idx_.at(static_cast<std::size_t>(i)); }

 private:
  TaskName name_;
  ParamSpace space_;
  std::map<std::string, double> constants_;
  std::vector<int> param_idx_;
  int ds_ = 0;
  int da_ = 0;
};

/// Default parameter boxes; any in-support bounds can be supplied instead.
inline ParamSpace default_param_space(TaskName name) {
  switch (name) {
    case TaskName::Pendulum:
      return ParamSpace({{"mass", 0.2, 2.0}, {"length", 0.2, 2.0}});
    case TaskName::Cartpole:
      return ParamSpace(
          {{"cart_mass", 0.5, 2.0}, {"pole_mass", 0.05, 0.5}, {"pole_length", 0.2, 1.0}});
    case TaskName::MassSpringDamper:
      return ParamSpace({{"mass", 0.5, 2.0}, {"stiffness", 0.5, 5.0}, {"damping", 0.1, 1.0}});
  }
  throw std::logic_error("unreachable");
}

inline std::map<std::string, double> default_constants(TaskName name) {
  switch (name) {
    case TaskName::Pendulum:
      return {{"gravity", 9.81}, {"dt", 0.05},          {"episode_steps", 100},
              {"action_bound", 2.0}, {"damping", 0.05}, {"init_angle_range", 3.14159265358979323846}};
    case TaskName::Cartpole:
      return {{"gravity", 9.81},
              {"dt", 0.05},
              {"episode_steps", 100},
              {"action_bound", 10.0},
              {"init_range", 0.05}};
    case TaskName::MassSpringDamper:
      return {{"dt", 0.05},
              {"episode_steps", 100},
              {"action_bound", 1.0},
              {"init_position", 1.0},
              {"init_velocity", 0.0}};
  }
  throw std::logic_error("unreachable");
}

inline TaskSpec make_task(TaskName name) {
  return TaskSpec(name, default_param_space(name), default_constants(name));
}

inline std::map<std::string, double> default_real_params(TaskName name) {
  switch (name) {
    case TaskName::Pendulum:
      return {{"mass", 1.2}, {"length", 0.7}};
    case TaskName::Cartpole:
      return {{"cart_mass", 1.0}, {"pole_mass", 0.1}, {"pole_length", 0.5}};
    case TaskName::MassSpringDamper:
      return {{"mass", 1.0}, {"stiffness", 2.0}, {"damping", 0.4}};
  }
  throw std::logic_error("unreachable");
}

/// Data-collection policy: i.i.d. uniform actions within bounds, or one
/// fixed action repeated.
struct Policy {
  enum class Kind { Random, Fixed };
  Kind kind = Kind::Random;
  Vector fixed_action;

  static Policy random() { return Policy{Kind::Random, Vector()}; }
  static Policy fixed(Vector action) { return Policy{Kind::Fixed, std::move(action)}; }
};

inline std::string to_string(Policy::Kind k) {
  return k == Policy::Kind::Random ? "random" : "fixed";
}

/// Hidden ground-truth parameters for the surrogate-real environment.
class RealConfig {
 public:
  RealConfig(const ParamSpace& space, std::map<std::string, double> real_params,
             int episodes = 1)
      : real_params_(std::move(real_params)), episodes_(episodes) {
    if (episodes_ < 1) throw std::invalid_argument("RealConfig: episodes must be >= 1");
    theta_ = Vector(space.size());
    if (static_cast<int>(real_params_.size()) != space.size())
      throw std::invalid_argument("RealConfig: realParams must name every parameter");
    for (const auto& [name, value] : real_params_) {
      const int idx = space.index_of(name);
      if (idx < 0) throw std::invalid_argument("RealConfig: unknown parameter '" + name + "'");
      theta_[idx] = value;
    }
    if (!space.contains(theta_))
      throw std::invalid_argument("RealConfig: realParams outside the prior support box");
  }

  const Vector& theta() const { return theta_; }
  const std::map<std::string, double>& real_params() const { return real_params_; }
  int episodes() const { return episodes_; }

 private:
  std::map<std::string, double> real_params_;
  int episodes_ = 1;
  Vector theta_;
};

namespace detail {

inline double clip(double x, double bound) { return std::clamp(x, -bound, bound); }

}  // namespace detail

/// One semi-implicit Euler step: accelerations from the current state,
/// velocities updated first, positions advanced with the new velocities.
inline Vector step(const TaskSpec& task, const Eigen::Ref<const Vector>& theta,
                   const Eigen::Ref<const Vector>& state,
                   const Eigen::Ref<const Vector>& action) {
  if (theta.size() != task.param_space().size())
    throw std::invalid_argument("step: parameter dimension mismatch");
  if (state.size() != task.state_dim() || action.size() != task.action_dim())
    throw std::invalid_argument("step: state/action dimension mismatch");
  const double dt = task.dt();
  const double u = detail::clip(action[0], task.action_bound());
  Vector next(task.state_dim());
  switch (task.name()) {
    case TaskName::Pendulum: {
      const double m = theta[task.param_index(0)];
      const double l = theta[task.param_index(1)];
      const double g = task.constant("gravity");
      const double c = task.constant("damping");
      const double phi = state[0], phidot = state[1];
      const double phidot_next =
          phidot + dt * (-(g / l) * std::sin(phi) + u / (m * l * l) - c * phidot);
      next[0] = phi + dt * phidot_next;
      next[1] = phidot_next;
      break;
    }
    case TaskName::Cartpole: {
      const double mc = theta[task.param_index(0)];
      const double mp = theta[task.param_index(1)];
      const double l = theta[task.param_index(2)];
      const double g = task.constant("gravity");
      const double x = state[0], xdot = state[1], phi = state[2], phidot = state[3];
      const double total = mc + mp;
      const double sin_phi = std::sin(phi), cos_phi = std::cos(phi);
      const double temp = (u + mp * l * phidot * phidot * sin_phi) / total;
      const double phi_acc = (g * sin_phi - cos_phi * temp) /
                             (l * (4.0 / 3.0 - mp * cos_phi * cos_phi / total));
      const double x_acc = temp - mp * l * phi_acc * cos_phi / total;
      const double xdot_next = xdot + dt * x_acc;
      const double phidot_next = phidot + dt * phi_acc;
      next[0] = x + dt * xdot_next;
      next[1] = xdot_next;
      next[2] = phi + dt * phidot_next;
      next[3] = phidot_next;
      break;
    }
    case TaskName::MassSpringDamper: {
      const double m = theta[task.param_index(0)];
      const double k = theta[task.param_index(1)];
      const double c = theta[task.param_index(2)];
      const double x = state[0], v = state[1];
      const double v_next = v + dt * (u - k * x - c * v) / m;
      next[0] = x + dt * v_next;
      next[1] = v_next;
      break;
    }
  }
  if (!all_finite(next)) throw DynamicsBlowup(theta, -1);
  return next;
}

namespace detail {

inline Vector initial_state(const TaskSpec& task, RandomStream& rng) {
  Vector s0(task.state_dim());
  switch (task.name()) {
    case TaskName::Pendulum: {
      const double r = task.constant("init_angle_range");
      s0[0] = rng.uniform(-r, r);
      s0[1] = 0.0;
      break;
    }
    case TaskName::Cartpole: {
      const double r = task.constant("init_range");
      for (int i = 0; i < 4; ++i) s0[i] = rng.uniform(-r, r);
      break;
    }
    case TaskName::MassSpringDamper:
      s0[0] = task.constant("init_position");
      s0[1] = task.constant("init_velocity");
      break;
  }
  return s0;
}

inline Vector draw_action(const TaskSpec& task, const Policy& policy, RandomStream& rng) {
  if (policy.kind == Policy::Kind::Fixed) {
    if (policy.fixed_action.size() != task.action_dim())
      throw std::invalid_argument("rollout: fixed action dimension mismatch");
    for (int i = 0; i < policy.fixed_action.size(); ++i) {
      if (std::abs(policy.fixed_action[i]) > task.action_bound())
        throw std::invalid_argument("rollout: fixed action outside task action bounds");
    }
    return policy.fixed_action;
  }
  Vector a(task.action_dim());
  for (int i = 0; i < a.size(); ++i)
    a[i] = rng.uniform(-task.action_bound(), task.action_bound());
  return a;
}

}  // namespace detail

/// Roll one episode of T steps: initial state from the task's initial
/// distribution, then T-1 dynamics steps. The trajectory carries theta.
inline Trajectory rollout(const TaskSpec& task, const Eigen::Ref<const Vector>& theta,
                          const Policy& policy, RandomStream rng, int steps) {
  if (steps < 2) throw std::invalid_argument("rollout: needs T >= 2");
  if (!task.param_space().contains(theta))
    throw std::invalid_argument("rollout: theta outside the parameter support box");
  Matrix states(steps, task.state_dim());
  Matrix actions(steps, task.action_dim());
  states.row(0) = detail::initial_state(task, rng);
  for (int t = 0; t + 1 < steps; ++t) {
    const Vector a = detail::draw_action(task, policy, rng);
    actions.row(t) = a;
    try {
      states.row(t + 1) = step(task, theta, states.row(t).transpose(), a);
    } catch (const DynamicsBlowup&) {
      throw DynamicsBlowup(theta, t);
    }
  }
  actions.row(steps - 1) = detail::draw_action(task, policy, rng);
  return Trajectory(std::move(states), std::move(actions), task.dt(), Vector(theta));
}

struct RolloutBatch {
  std::vector<Trajectory> trajectories;  // survivors, in episode order
  std::vector<int> episode_indices;      // original episode index per survivor
  std::vector<int> failed_indices;
};

/// Roll N episodes, one per parameter row. Episode i always consumes stream
/// "rollout/episode/i" under base_rng, so results are independent of the
/// execution order and of n_threads. Episodes whose dynamics blow up are
/// dropped unless more than 10% fail, which fails the whole batch.
inline RolloutBatch rollout_batch(const TaskSpec& task,
                                  const Eigen::Ref<const Matrix>& theta_batch,
                                  const Policy& policy, const RandomStream& base_rng,
                                  int steps, int n_threads = 0) {
  const int n = static_cast<int>(theta_batch.rows());
  if (n < 1) throw std::invalid_argument("rollout_batch: needs N >= 1");
  if (n_threads <= 0)
    n_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n_threads = std::min(n_threads, n);

  std::vector<std::optional<Trajectory>> results(static_cast<std::size_t>(n));
  std::vector<char> failed(static_cast<std::size_t>(n), 0);
  std::atomic<int> cursor{0};

  auto worker = [&]() {
    while (true) {
      const int i = cursor.fetch_add(1);
      if (i >= n) break;
      RandomStream rng = base_rng.substream("rollout/episode/" + std::to_string(i));
      try {
        results[static_cast<std::size_t>(i)] =
            rollout(task, theta_batch.row(i).transpose(), policy, std::move(rng), steps);
      } catch (const DynamicsBlowup&) {
        failed[static_cast<std::size_t>(i)] = 1;
      }
    }
  };

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  RolloutBatch out;
  for (int i = 0; i < n; ++i) {
    if (failed[static_cast<std::size_t>(i)]) {
      out.failed_indices.push_back(i);
    } else {
      out.trajectories.push_back(std::move(*results[static_cast<std::size_t>(i)]));
      out.episode_indices.push_back(i);
    }
  }
  if (static_cast<double>(out.failed_indices.size()) > 0.1 * n)
    throw std::runtime_error("rollout_batch: " + std::to_string(out.failed_indices.size()) +
                             " of " + std::to_string(n) + " episodes blew up");
  return out;
}

/// Surrogate-real episode: rolls with the hidden realParams, then strips
/// the parameters so downstream consumers cannot recover them.
inline Trajectory real_rollout(const TaskSpec& task, const RealConfig& real_cfg,
                               const Policy& policy, RandomStream rng, int steps) {
  Trajectory traj = rollout(task, real_cfg.theta(), policy, std::move(rng), steps);
  traj.params.reset();
  return traj;
}

}  // namespace simcal
