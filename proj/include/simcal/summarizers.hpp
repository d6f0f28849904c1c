#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "simcal/math.hpp"
#include "simcal/signature.hpp"
#include "simcal/trajectory.hpp"

namespace simcal {

enum class SummarizerKind { Start, Waypoints, Signature, CrossCorrelation, CrossCorrDifference };

inline std::string to_string(SummarizerKind k) {
  switch (k) {
    case SummarizerKind::Start: return "start";
    case SummarizerKind::Waypoints: return "waypoints";
    case SummarizerKind::Signature: return "signature";
    case SummarizerKind::CrossCorrelation: return "crosscorr";
    case SummarizerKind::CrossCorrDifference: return "crosscorrdiff";
  }
  return "?";
}

inline SummarizerKind summarizer_kind_from_string(const std::string& s) {
  if (s == "start") return SummarizerKind::Start;
  if (s == "waypoints") return SummarizerKind::Waypoints;
  if (s == "signature" || s == "signatory") return SummarizerKind::Signature;
  if (s == "crosscorr" || s == "cross_correlation") return SummarizerKind::CrossCorrelation;
  if (s == "crosscorrdiff" || s == "cross_corr_difference")
    return SummarizerKind::CrossCorrDifference;
  throw std::invalid_argument("unknown summarizer '" + s + "'");
}

/// Which trajectory-compression strategy to apply, with its parameters.
struct SummarizerSpec {
  SummarizerKind kind = SummarizerKind::CrossCorrDifference;
  int n_steps = 10;          // Start
  int stride = 10;           // Waypoints
  int depth = 3;             // Signature
  bool time_augment = true;  // Signature
  int n_lags = 5;            // CrossCorrelation / CrossCorrDifference

  void validate() const {
    if (n_steps < 1) throw std::invalid_argument("SummarizerSpec: n_steps must be >= 1");
    if (stride < 1) throw std::invalid_argument("SummarizerSpec: stride must be >= 1");
    if (depth < 1 || depth > 4)
      throw std::invalid_argument("SummarizerSpec: signature depth must be in [1, 4]");
    if (n_lags < 1) throw std::invalid_argument("SummarizerSpec: n_lags must be >= 1");
  }

  /// Identifier used in run names and to match a model to the summarizer
  /// it was trained with: "<kind>[:<param>=<value>,...]".
  std::string id() const {
    std::ostringstream os;
    os << to_string(kind);
    switch (kind) {
      case SummarizerKind::Start: os << ":n_steps=" << n_steps; break;
      case SummarizerKind::Waypoints: os << ":stride=" << stride; break;
      case SummarizerKind::Signature:
        os << ":depth=" << depth << ",time=" << (time_augment ? 1 : 0);
        break;
      case SummarizerKind::CrossCorrelation:
      case SummarizerKind::CrossCorrDifference: os << ":lags=" << n_lags; break;
    }
    return os.str();
  }
};

/// Output length of a summarizer for given trajectory shapes. Needed up
/// front to size the density model input.
inline int summary_dim(const SummarizerSpec& spec, int ds, int da, int steps) {
  spec.validate();
  switch (spec.kind) {
    case SummarizerKind::Start:
      if (spec.n_steps > steps)
        throw std::invalid_argument("summary_dim: n_steps exceeds trajectory length");
      return spec.n_steps * (ds + da);
    case SummarizerKind::Waypoints: {
      if (spec.stride > steps)
        throw std::invalid_argument("summary_dim: stride exceeds trajectory length");
      const int count = (steps + spec.stride - 1) / spec.stride;
      return count * (ds + da);
    }
    case SummarizerKind::Signature: {
      const int c = ds + (spec.time_augment ? 1 : 0);
      return static_cast<int>(TruncatedSignature::flat_size(c, spec.depth));
    }
    case SummarizerKind::CrossCorrelation:
    case SummarizerKind::CrossCorrDifference:
      if (spec.n_lags > steps - 1)
        throw std::invalid_argument("summary_dim: n_lags exceeds trajectory length - 1");
      return ds * da * spec.n_lags + 2 * ds;
  }
  throw std::logic_error("unreachable");
}

/// [s_0, a_0, s_1, a_1, ..., s_{n-1}, a_{n-1}].
inline SummaryVector summarize_start(const Trajectory& traj, int n_steps) {
  if (n_steps < 1 || n_steps > traj.steps())
    throw std::invalid_argument("summarize_start: n_steps out of range");
  const int ds = traj.state_dim(), da = traj.action_dim();
  Vector out(n_steps * (ds + da));
  for (int t = 0; t < n_steps; ++t) {
    out.segment(t * (ds + da), ds) = traj.states.row(t);
    out.segment(t * (ds + da) + ds, da) = traj.actions.row(t);
  }
  SummarizerSpec spec{SummarizerKind::Start};
  spec.n_steps = n_steps;
  return SummaryVector(std::move(out), spec.id());
}

/// States and actions at t = 0, stride, 2*stride, ... < T.
inline SummaryVector summarize_waypoints(const Trajectory& traj, int stride) {
  if (stride < 1 || stride > traj.steps())
    throw std::invalid_argument("summarize_waypoints: stride out of range");
  const int ds = traj.state_dim(), da = traj.action_dim();
  const int count = (traj.steps() + stride - 1) / stride;
  Vector out(count * (ds + da));
  for (int i = 0; i < count; ++i) {
    const int t = i * stride;
    out.segment(i * (ds + da), ds) = traj.states.row(t);
    out.segment(i * (ds + da) + ds, da) = traj.actions.row(t);
  }
  SummarizerSpec spec{SummarizerKind::Waypoints};
  spec.stride = stride;
  return SummaryVector(std::move(out), spec.id());
}

/// Truncated signature of the state path (actions excluded), optionally
/// prepended with a time channel t*dt, concatenated level by level.
inline SummaryVector summarize_signature(const Trajectory& traj, int depth, bool time_augment) {
  if (traj.steps() < 2) throw std::invalid_argument("summarize_signature: needs T >= 2");
  const int ds = traj.state_dim();
  const int c = ds + (time_augment ? 1 : 0);
  Matrix path(traj.steps(), c);
  for (int t = 0; t < traj.steps(); ++t) {
    int col = 0;
    if (time_augment) path(t, col++) = t * traj.dt;
    path.row(t).segment(col, ds) = traj.states.row(t);
  }
  TruncatedSignature sig = path_signature(path, depth);
  SummarizerSpec spec{SummarizerKind::Signature};
  spec.depth = depth;
  spec.time_augment = time_augment;
  return SummaryVector(sig.flatten(), spec.id());
}

namespace detail {

/// Shared body of the two cross-correlation summarizers. `x` is either the
/// state sequence or its first differences; features are the lagged
/// action-signal inner products averaged over the valid offsets, then the
/// per-channel mean and population variance of x.
inline Vector crosscorr_features(const Matrix& x, const Matrix& actions, int n_lags) {
  const int ds = static_cast<int>(x.cols());
  const int da = static_cast<int>(actions.cols());
  const int n = static_cast<int>(x.rows());
  Vector out(ds * da * n_lags + 2 * ds);
  int at = 0;
  for (int i = 0; i < ds; ++i) {
    for (int j = 0; j < da; ++j) {
      for (int tau = 0; tau < n_lags; ++tau) {
        const int valid = n - tau;
        if (valid < 1)
          throw std::invalid_argument("crosscorr: lag leaves no valid offsets");
        double acc = 0.0;
        for (int t = 0; t < valid; ++t) acc += actions(t, j) * x(t + tau, i);
        out[at++] = acc / valid;
      }
    }
  }
  for (int i = 0; i < ds; ++i) out[at++] = x.col(i).mean();
  for (int i = 0; i < ds; ++i) {
    const double m = x.col(i).mean();
    out[at++] = (x.col(i).array() - m).square().sum() / n;
  }
  return out;
}

}  // namespace detail

/// Lagged action-state correlations plus per-dimension state mean/variance.
inline SummaryVector summarize_crosscorr(const Trajectory& traj, int n_lags) {
  if (n_lags < 1 || n_lags > traj.steps() - 1)
    throw std::invalid_argument("summarize_crosscorr: n_lags out of range");
  SummarizerSpec spec{SummarizerKind::CrossCorrelation};
  spec.n_lags = n_lags;
  return SummaryVector(detail::crosscorr_features(traj.states, traj.actions, n_lags),
                       spec.id());
}

/// Same features computed on state differences s(t+1) - s(t).
inline SummaryVector summarize_crosscorr_diff(const Trajectory& traj, int n_lags) {
  if (n_lags < 1 || n_lags > traj.steps() - 1)
    throw std::invalid_argument("summarize_crosscorr_diff: n_lags out of range");
  Matrix diffs = traj.states.bottomRows(traj.steps() - 1) - traj.states.topRows(traj.steps() - 1);
  SummarizerSpec spec{SummarizerKind::CrossCorrDifference};
  spec.n_lags = n_lags;
  return SummaryVector(detail::crosscorr_features(diffs, traj.actions, n_lags), spec.id());
}

/// Dispatch on the spec.
inline SummaryVector summarize(const Trajectory& traj, const SummarizerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case SummarizerKind::Start: return summarize_start(traj, spec.n_steps);
    case SummarizerKind::Waypoints: return summarize_waypoints(traj, spec.stride);
    case SummarizerKind::Signature:
      return summarize_signature(traj, spec.depth, spec.time_augment);
    case SummarizerKind::CrossCorrelation: return summarize_crosscorr(traj, spec.n_lags);
    case SummarizerKind::CrossCorrDifference: return summarize_crosscorr_diff(traj, spec.n_lags);
  }
  throw std::logic_error("unreachable");
}

}  // namespace simcal
