#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "simcal/math.hpp"

namespace simcal {

/// One simulated episode: T rows of states and actions sampled at a fixed
/// timestep. `params` carries the generating parameters; the surrogate-real
/// trajectory leaves it empty so downstream code cannot peek at the truth.
struct Trajectory {
  Matrix states;   // T x ds
  Matrix actions;  // T x da
  double dt = 0.0;
  std::optional<Vector> params;

  Trajectory(Matrix states_in, Matrix actions_in, double dt_in,
             std::optional<Vector> params_in = std::nullopt)
      : states(std::move(states_in)),
        actions(std::move(actions_in)),
        dt(dt_in),
        params(std::move(params_in)) {
    if (states.rows() < 2) throw std::invalid_argument("Trajectory: needs T >= 2 steps");
    if (states.rows() != actions.rows())
      throw std::invalid_argument("Trajectory: states and actions disagree on T");
    if (!(dt > 0.0)) throw std::invalid_argument("Trajectory: dt must be positive");
    if (!all_finite(states) || !all_finite(actions))
      throw std::invalid_argument("Trajectory: non-finite entries");
  }

  int steps() const { return static_cast<int>(states.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int action_dim() const { return static_cast<int>(actions.cols()); }
};

/// Fixed-length feature vector a summarizer produced from one trajectory.
struct SummaryVector {
  Vector values;
  std::string summarizer_id;

  SummaryVector(Vector values_in, std::string id)
      : values(std::move(values_in)), summarizer_id(std::move(id)) {
    if (!all_finite(values))
      throw std::invalid_argument("SummaryVector: non-finite entries from '" +
                                  summarizer_id + "'");
  }

  int size() const { return static_cast<int>(values.size()); }
};

}  // namespace simcal
