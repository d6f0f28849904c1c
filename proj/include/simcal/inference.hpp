#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "simcal/density.hpp"
#include "simcal/math.hpp"
#include "simcal/mixture.hpp"
#include "simcal/param_space.hpp"
#include "simcal/simulators.hpp"
#include "simcal/summarizers.hpp"
#include "simcal/trajectory.hpp"

namespace simcal {

/// The density that generated the training parameters: the prior itself on
/// the first pipeline iteration, the previous posterior's base mixture on
/// later ones.
class ProposalDensity {
 public:
  explicit ProposalDensity(Prior prior) : impl_(std::move(prior)) {}
  explicit ProposalDensity(GaussianMixtureDensity mixture) : impl_(std::move(mixture)) {}

  double logpdf(const Eigen::Ref<const Vector>& theta) const {
    if (const auto* p = std::get_if<Prior>(&impl_)) return p->logpdf(theta);
    return std::get<GaussianMixtureDensity>(impl_).logpdf(theta);
  }

  bool is_uniform_prior() const {
    const auto* p = std::get_if<Prior>(&impl_);
    return p && p->is_uniform();
  }

  const Prior* as_prior() const { return std::get_if<Prior>(&impl_); }

 private:
  std::variant<Prior, GaussianMixtureDensity> impl_;
};

/// q(theta | x = x^r) corrected by the prior/proposal ratio and truncated
/// to the prior's support box (closed-box convention: bounds are inside).
class Posterior {
 public:
  Posterior(GaussianMixtureDensity base, Prior prior, ProposalDensity proposal)
      : base_(std::move(base)), prior_(std::move(prior)), proposal_(std::move(proposal)) {
    if (base_.dim() != prior_.space().size())
      throw std::invalid_argument("Posterior: base mixture and prior dimension mismatch");
  }

  const GaussianMixtureDensity& base() const { return base_; }
  const Prior& prior() const { return prior_; }
  const ProposalDensity& proposal() const { return proposal_; }
  const ParamSpace& support() const { return prior_.space(); }

  /// log p(theta) - log ptilde(theta) + log q(theta | x^r) inside the
  /// support, -inf outside. Normalizing constant not included.
  double logpdf_unnorm(const Eigen::Ref<const Vector>& theta) const {
    if (theta.size() != base_.dim())
      throw std::invalid_argument("Posterior::logpdf_unnorm: dimension mismatch");
    if (!support().contains(theta)) return kNegInf;
    return prior_.logpdf(theta) - proposal_.logpdf(theta) + base_.logpdf(theta);
  }

  /// Self-normalized importance resampling: M = max(50n, 10000) proposals
  /// from the base mixture, out-of-support draws discarded, survivors
  /// weighted by p/ptilde and resampled with replacement.
  Matrix sample(RandomStream& rng, int n) const {
    if (n < 1) throw std::invalid_argument("Posterior::sample: n must be >= 1");
    const int m = std::max(50 * n, 10000);
    RandomStream proposal_rng = rng.substream("proposals");
    const Matrix draws = base_.sample(proposal_rng, m);
    std::vector<int> keep;
    std::vector<double> log_ratio;
    keep.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const Vector theta = draws.row(i).transpose();
      if (!support().contains(theta)) continue;
      keep.push_back(i);
      log_ratio.push_back(prior_.logpdf(theta) - proposal_.logpdf(theta));
    }
    if (static_cast<int>(keep.size()) < n)
      throw std::runtime_error(
          "posterior mass escapes support: only " + std::to_string(keep.size()) + " of " +
          std::to_string(m) + " proposals landed inside the prior box");
    // normalized cumulative weights
    const double lse = log_sum_exp(log_ratio);
    std::vector<double> cumulative(keep.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      acc += std::exp(log_ratio[i] - lse);
      cumulative[i] = acc;
    }
    cumulative.back() = 1.0;
    RandomStream resample_rng = rng.substream("resample");
    Matrix out(n, base_.dim());
    for (int i = 0; i < n; ++i) {
      const double u = resample_rng.uniform();
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const std::size_t pick = static_cast<std::size_t>(it - cumulative.begin());
      out.row(i) = draws.row(keep[std::min(pick, keep.size() - 1)]);
    }
    return out;
  }

  /// log of the self-normalized evidence estimate
  /// Z ~ (1/M) sum_i 1[theta_i in support] p(theta_i)/ptilde(theta_i),
  /// theta_i drawn from the base mixture. Subtracting it from
  /// logpdf_unnorm gives an approximately normalized log density that is
  /// comparable across iterations.
  double log_normalizer_estimate(RandomStream& rng, int m = 10000) const {
    const Matrix draws = base_.sample(rng, m);
    std::vector<double> log_ratio;
    log_ratio.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      const Vector theta = draws.row(i).transpose();
      if (!support().contains(theta)) continue;
      log_ratio.push_back(prior_.logpdf(theta) - proposal_.logpdf(theta));
    }
    if (log_ratio.empty()) return kNegInf;
    return log_sum_exp(log_ratio) - std::log(static_cast<double>(m));
  }

 private:
  GaussianMixtureDensity base_;
  Prior prior_;
  ProposalDensity proposal_;
};

inline double posterior_logpdf_unnorm(const Posterior& p, const Eigen::Ref<const Vector>& theta) {
  return p.logpdf_unnorm(theta);
}

inline Matrix posterior_sample(const Posterior& p, RandomStream& rng, int n) {
  return p.sample(rng, n);
}

/// Condition the trained model on the real trajectory. The trajectory must
/// not carry parameters and must have been summarized exactly like the
/// training data.
inline Posterior condition(const ConditionalDensityModel& model, const Trajectory& real_traj,
                           const SummarizerSpec& spec, Prior prior, ProposalDensity proposal) {
  if (real_traj.params.has_value())
    throw std::invalid_argument("condition: real trajectory must not carry parameters");
  const SummaryVector summary = summarize(real_traj, spec);
  if (!model.summarizer_id().empty() && summary.summarizer_id != model.summarizer_id())
    throw std::invalid_argument("condition: summarizer mismatch (model trained with '" +
                                model.summarizer_id() + "', got '" + summary.summarizer_id +
                                "')");
  if (summary.size() != model.input_dim())
    throw std::invalid_argument("condition: summary length does not match model input");
  GaussianMixtureDensity base = model.forward(summary);
  return Posterior(std::move(base), std::move(prior), std::move(proposal));
}

/// Normalized density values of the 2-D posterior marginal on a G x G grid
/// of cell centers spanning the two dimensions' prior bounds.
struct PosteriorSlice {
  int dim_a = 0;
  int dim_b = 1;
  std::string name_a, name_b;
  double low_a = 0, high_a = 0, low_b = 0, high_b = 0;
  std::vector<double> centers_a, centers_b;
  Matrix values;          // rows follow dim_a, cols follow dim_b; sums to 1
  bool ratio_corrected = false;
};

/// The ratio correction is constant (hence exact after normalization) only
/// when prior and proposal are both uniform boxes; otherwise the marginal
/// is reported uncorrected and flagged.
inline PosteriorSlice posterior_slice(const Posterior& p, int dim_a, int dim_b, int grid) {
  if (grid < 2) throw std::invalid_argument("posterior_slice: grid must be >= 2");
  if (dim_a == dim_b) throw std::invalid_argument("posterior_slice: duplicate dims");
  const ParamSpace& space = p.support();
  if (dim_a < 0 || dim_b < 0 || dim_a >= space.size() || dim_b >= space.size())
    throw std::invalid_argument("posterior_slice: dim out of range");

  const GaussianMixtureDensity marg = p.base().marginal(dim_a, dim_b);
  PosteriorSlice slice;
  slice.dim_a = dim_a;
  slice.dim_b = dim_b;
  slice.name_a = space.dim(dim_a).name;
  slice.name_b = space.dim(dim_b).name;
  slice.low_a = space.dim(dim_a).low;
  slice.high_a = space.dim(dim_a).high;
  slice.low_b = space.dim(dim_b).low;
  slice.high_b = space.dim(dim_b).high;
  slice.ratio_corrected = p.prior().is_uniform() && p.proposal().is_uniform_prior();

  const double da = (slice.high_a - slice.low_a) / grid;
  const double db = (slice.high_b - slice.low_b) / grid;
  for (int i = 0; i < grid; ++i) slice.centers_a.push_back(slice.low_a + (i + 0.5) * da);
  for (int j = 0; j < grid; ++j) slice.centers_b.push_back(slice.low_b + (j + 0.5) * db);

  Matrix logv(grid, grid);
  Vector point(2);
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      point[0] = slice.centers_a[static_cast<std::size_t>(i)];
      point[1] = slice.centers_b[static_cast<std::size_t>(j)];
      logv(i, j) = marg.logpdf(point);
    }
  }
  const double peak = logv.maxCoeff();
  if (!std::isfinite(peak)) throw std::runtime_error("posterior_slice: density vanished on grid");
  slice.values = (logv.array() - peak).exp();
  slice.values /= slice.values.sum();
  return slice;
}

/// Cell index of theta's component along one slice axis.
inline int slice_cell_index(double value, double low, double high, int grid) {
  const double t = (value - low) / (high - low);
  return std::clamp(static_cast<int>(t * grid), 0, grid - 1);
}

struct AbcResult {
  Matrix accepted;                  // n_accepted x D
  std::vector<int> accepted_rows;   // row indices into the prior draw matrix
  double distance_threshold = 0.0;
};

/// Brute-force rejection-ABC posterior used as an independent oracle:
/// simulate prior draws under the same policy/stream discipline, measure
/// Euclidean distance between z-scored summaries and the real summary,
/// accept the closest quantile.
inline AbcResult abc_rejection_oracle(const TaskSpec& task, const Prior& prior,
                                      const Policy& policy, const Trajectory& real_traj,
                                      const SummarizerSpec& spec, const RandomStream& rng,
                                      int n_sims, double quantile, int n_threads = 0) {
  if (n_sims < 1000) throw std::invalid_argument("abc_rejection_oracle: n_sims must be >= 1000");
  if (!(quantile > 0.0 && quantile <= 1.0))
    throw std::invalid_argument("abc_rejection_oracle: quantile must be in (0, 1]");

  RandomStream prior_rng = rng.substream("prior");
  const Matrix thetas = prior.sample(prior_rng, n_sims);
  const RolloutBatch batch =
      rollout_batch(task, thetas, policy, rng, real_traj.steps(), n_threads);

  const int n_valid = static_cast<int>(batch.trajectories.size());
  Matrix summaries(n_valid, summary_dim(spec, task.state_dim(), task.action_dim(),
                                        real_traj.steps()));
  for (int i = 0; i < n_valid; ++i)
    summaries.row(i) = summarize(batch.trajectories[static_cast<std::size_t>(i)], spec).values;
  const SummaryVector real_summary = summarize(real_traj, spec);

  // distances in z-scored summary space so mixed-unit features compare
  Standardizer standardizer;
  standardizer.fit_inputs(summaries);
  const Matrix z = standardizer.standardize_inputs(summaries);
  const Vector z_real = standardizer.standardize_input(real_summary.values);

  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(n_valid));
  for (int i = 0; i < n_valid; ++i) {
    const double d = (z.row(i).transpose() - z_real).norm();
    if (std::isfinite(d)) scored.emplace_back(d, i);
  }
  if (scored.empty())
    throw std::runtime_error("abc_rejection_oracle: all summary distances non-finite");
  std::sort(scored.begin(), scored.end());

  const int n_accept = std::max(
      1, static_cast<int>(std::floor(quantile * static_cast<double>(scored.size()))));
  AbcResult result;
  result.accepted.resize(n_accept, task.param_space().size());
  for (int i = 0; i < n_accept; ++i) {
    const int row = scored[static_cast<std::size_t>(i)].second;
    result.accepted.row(i) =
        thetas.row(batch.episode_indices[static_cast<std::size_t>(row)]);
    result.accepted_rows.push_back(batch.episode_indices[static_cast<std::size_t>(row)]);
  }
  result.distance_threshold = scored[static_cast<std::size_t>(n_accept - 1)].first;
  return result;
}

}  // namespace simcal
