#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "simcal/inference.hpp"

using namespace simcal;

namespace {

GaussianMixtureDensity gaussian1d(double mean, double sigma) {
  Vector w = Vector::Ones(1);
  Matrix m(1, 1);
  m << mean;
  return GaussianMixtureDensity(w, m, {Matrix::Ones(1, 1) * sigma});
}

GaussianMixtureDensity bimodal1d() {
  Vector w(2);
  w << 0.4, 0.6;
  Matrix m(2, 1);
  m << 0.3, 0.7;
  return GaussianMixtureDensity(w, m,
                                {Matrix::Ones(1, 1) * 0.05, Matrix::Ones(1, 1) * 0.1});
}

Prior unit_prior() { return Prior::uniform(ParamSpace({{"a", 0.0, 1.0}})); }

/// Small trained-enough model over the MSD parameter box for condition().
ConditionalDensityModel msd_model(const TaskSpec& task, const SummarizerSpec& spec, int steps) {
  MdnnConfig cfg;
  cfg.hidden_sizes = {16};
  cfg.components = 3;
  cfg.input_dim = summary_dim(spec, task.state_dim(), task.action_dim(), steps);
  cfg.output_dim = task.param_space().size();
  ConditionalDensityModel model =
      ConditionalDensityModel::mdnn(cfg, task.param_space(), RandomStream(17, "model"));
  RandomStream rng(17, "fit");
  Matrix x(40, cfg.input_dim);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  model.standardizer().fit_inputs(x);
  return model;
}

}  // namespace

TEST_CASE("condition wraps the forward mixture and enforces the contracts", "[inference]") {
  const TaskSpec task = make_task(TaskName::MassSpringDamper);
  const Prior prior = Prior::uniform(task.param_space());
  SummarizerSpec spec{SummarizerKind::Start};
  spec.n_steps = 2;
  const int steps = 30;
  ConditionalDensityModel model = msd_model(task, spec, steps);

  const RealConfig real_cfg(task.param_space(),
                            {{"mass", 1.0}, {"stiffness", 2.0}, {"damping", 0.4}});
  const Trajectory real =
      real_rollout(task, real_cfg, Policy::random(), RandomStream(3, "real"), steps);

  const Posterior post = condition(model, real, spec, prior, ProposalDensity(prior));
  const GaussianMixtureDensity base = model.forward(summarize(real, spec));

  RandomStream probe(4, "pts");
  for (int i = 0; i < 100; ++i) {
    Vector theta(3);
    theta << probe.uniform(0.5, 2.0), probe.uniform(0.5, 5.0), probe.uniform(0.1, 1.0);
    // uniform prior == proposal: the log ratio is exactly zero
    CHECK(post.logpdf_unnorm(theta) == base.logpdf(theta));
  }

  Vector outside(3);
  outside << 99.0, 2.0, 0.4;
  CHECK(post.logpdf_unnorm(outside) == kNegInf);

  const Posterior again = condition(model, real, spec, prior, ProposalDensity(prior));
  Vector theta(3);
  theta << 1.0, 2.0, 0.4;
  CHECK(again.logpdf_unnorm(theta) == post.logpdf_unnorm(theta));

  // hiding contract: a parameter-carrying trajectory is rejected
  const Trajectory sim =
      rollout(task, real_cfg.theta(), Policy::random(), RandomStream(3, "real"), steps);
  CHECK_THROWS_AS(condition(model, sim, spec, prior, ProposalDensity(prior)),
                  std::invalid_argument);

  // summarizer mismatch: id recorded at training time must match
  model.set_summarizer_id("start:n_steps=9");
  CHECK_THROWS_WITH(condition(model, real, spec, prior, ProposalDensity(prior)),
                    Catch::Matchers::ContainsSubstring("summarizer mismatch"));

  SummarizerSpec wide{SummarizerKind::Start};
  wide.n_steps = 3;
  model.set_summarizer_id("");
  CHECK_THROWS_AS(condition(model, real, wide, prior, ProposalDensity(prior)),
                  std::invalid_argument);
}

TEST_CASE("proposal ratio shifts the unnormalized logpdf by a constant", "[inference]") {
  const auto base = gaussian1d(0.5, 0.2);
  const Prior prior = unit_prior();

  SECTION("uniform prior equals proposal") {
    const Posterior post(base, prior, ProposalDensity(prior));
    Vector t(1);
    t << 0.25;
    CHECK(post.logpdf_unnorm(t) == base.logpdf(t));
    // closed-box convention: the boundary is inside
    t << 1.0;
    CHECK(std::isfinite(post.logpdf_unnorm(t)));
  }

  SECTION("proposal box with twice the volume adds log 2") {
    const Prior wide = Prior::uniform(ParamSpace({{"a", -0.5, 1.5}}));
    const Posterior post(base, prior, ProposalDensity(wide));
    Vector t(1);
    t << 0.25;
    CHECK_THAT(post.logpdf_unnorm(t),
               Catch::Matchers::WithinAbs(base.logpdf(t) + std::log(2.0), 1e-12));
  }

  SECTION("mixture proposal applies its own logpdf") {
    const auto previous = gaussian1d(0.4, 0.3);
    const Posterior post(base, prior, ProposalDensity(previous));
    Vector t(1);
    t << 0.6;
    CHECK_THAT(post.logpdf_unnorm(t),
               Catch::Matchers::WithinAbs(prior.logpdf(t) - previous.logpdf(t) + base.logpdf(t),
                                          1e-12));
  }
}

TEST_CASE("ratio-correction neutrality is exact when proposal equals prior",
          "[inference][property]") {
  const auto base = bimodal1d();
  const Prior prior = unit_prior();
  const Posterior post(base, prior, ProposalDensity(prior));
  RandomStream rng(9, "pairs");
  for (int i = 0; i < 50; ++i) {
    Vector a(1), b(1);
    a << rng.uniform();
    b << rng.uniform();
    CHECK(post.logpdf_unnorm(a) - post.logpdf_unnorm(b) == base.logpdf(a) - base.logpdf(b));
  }
}

TEST_CASE("posterior sampling stays in support and matches the density", "[inference][oracle]") {
  const auto base = bimodal1d();
  const Prior prior = unit_prior();
  const Posterior post(base, prior, ProposalDensity(prior));

  RandomStream rng(11, "ps");
  const Matrix samples = post.sample(rng, 20000);
  CHECK(samples.minCoeff() >= 0.0);
  CHECK(samples.maxCoeff() <= 1.0);

  // deterministic given the stream
  RandomStream rng2(11, "ps");
  CHECK(post.sample(rng2, 20000) == samples);

  // TV distance between the sample histogram and the grid-normalized density
  const int grid = 200;
  std::vector<double> dens(grid, 0.0), hist(grid, 0.0);
  double total = 0.0;
  Vector t(1);
  for (int g = 0; g < grid; ++g) {
    t << (g + 0.5) / grid;
    dens[static_cast<std::size_t>(g)] = std::exp(post.logpdf_unnorm(t));
    total += dens[static_cast<std::size_t>(g)];
  }
  for (int i = 0; i < samples.rows(); ++i) {
    int cell = static_cast<int>(samples(i, 0) * grid);
    cell = std::clamp(cell, 0, grid - 1);
    hist[static_cast<std::size_t>(cell)] += 1.0 / samples.rows();
  }
  double tv = 0.0;
  for (int g = 0; g < grid; ++g)
    tv += std::abs(hist[static_cast<std::size_t>(g)] -
                   dens[static_cast<std::size_t>(g)] / total);
  CHECK(tv / 2.0 < 0.05);
}

TEST_CASE("posterior sampling errors when the mass escapes the support", "[inference]") {
  const auto escaped = gaussian1d(5.0, 1e-3);
  const Prior prior = unit_prior();
  const Posterior post(escaped, prior, ProposalDensity(prior));
  RandomStream rng(13, "esc");
  CHECK_THROWS_WITH(post.sample(rng, 10),
                    Catch::Matchers::ContainsSubstring("posterior mass escapes support"));
}

TEST_CASE("posterior slice normalizes, tracks the base density, and flags corrections",
          "[inference]") {
  const ParamSpace space({{"x", 0.0, 2.0}, {"y", 0.0, 2.0}});
  const Prior prior = Prior::uniform(space);
  Vector w = Vector::Ones(1);
  Matrix mean(1, 2);
  mean << 1.0, 1.0;
  const GaussianMixtureDensity base(w, mean, {Matrix::Identity(2, 2) * 0.3});
  const Posterior post(base, prior, ProposalDensity(prior));

  const int grid = 21;
  const PosteriorSlice slice = posterior_slice(post, 0, 1, grid);
  CHECK(slice.ratio_corrected);
  CHECK_THAT(slice.values.sum(), Catch::Matchers::WithinAbs(1.0, 1e-9));

  // proportional to the exact 2-D density at cell centers
  Vector p(2);
  p << slice.centers_a[3], slice.centers_b[10];
  const double ratio0 = slice.values(3, 10) / std::exp(base.logpdf(p));
  p << slice.centers_a[15], slice.centers_b[5];
  const double ratio1 = slice.values(15, 5) / std::exp(base.logpdf(p));
  CHECK_THAT(ratio0, Catch::Matchers::WithinRel(ratio1, 1e-9));

  // symmetric component centered mid-box: full dihedral symmetry
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      CHECK_THAT(slice.values(i, j),
                 Catch::Matchers::WithinAbs(slice.values(grid - 1 - i, grid - 1 - j), 1e-9));
      CHECK_THAT(slice.values(i, j), Catch::Matchers::WithinAbs(slice.values(j, i), 1e-9));
    }

  // the cell holding the component mean carries the peak density
  const int ci = slice_cell_index(1.0, 0.0, 2.0, grid);
  CHECK(slice.values(ci, ci) == slice.values.maxCoeff());

  CHECK_THROWS_AS(posterior_slice(post, 1, 1, grid), std::invalid_argument);
  CHECK_THROWS_AS(posterior_slice(post, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("slice against a mixture proposal is flagged uncorrected", "[inference]") {
  const ParamSpace space({{"x", 0.0, 2.0}, {"y", 0.0, 2.0}});
  const Prior prior = Prior::uniform(space);
  Vector w = Vector::Ones(1);
  Matrix mean(1, 2);
  mean << 1.0, 1.0;
  const GaussianMixtureDensity base(w, mean, {Matrix::Identity(2, 2) * 0.3});
  const Posterior post(base, prior, ProposalDensity(base));
  const PosteriorSlice slice = posterior_slice(post, 0, 1, 11);
  CHECK_FALSE(slice.ratio_corrected);
  CHECK_THAT(slice.values.sum(), Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("abc oracle returns the requested quantile with correct counts", "[inference]") {
  const TaskSpec task = make_task(TaskName::MassSpringDamper);
  const Prior prior = Prior::uniform(task.param_space());
  SummarizerSpec spec{SummarizerKind::CrossCorrDifference};
  spec.n_lags = 3;
  const int steps = 30;
  const RealConfig real_cfg(task.param_space(),
                            {{"mass", 1.0}, {"stiffness", 2.0}, {"damping", 0.4}});
  const Policy policy = Policy::random();
  const Trajectory real =
      real_rollout(task, real_cfg, policy, RandomStream(7, "real"), steps);

  const AbcResult all = abc_rejection_oracle(task, prior, policy, real, spec,
                                             RandomStream(7, "abc"), 1000, 1.0, 2);
  CHECK(all.accepted.rows() == 1000);

  const AbcResult some = abc_rejection_oracle(task, prior, policy, real, spec,
                                              RandomStream(7, "abc"), 1000, 0.1, 2);
  CHECK(some.accepted.rows() == 100);
  CHECK(some.distance_threshold > 0.0);

  CHECK_THROWS_AS(abc_rejection_oracle(task, prior, policy, real, spec,
                                       RandomStream(7, "abc"), 500, 0.1, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(abc_rejection_oracle(task, prior, policy, real, spec,
                                       RandomStream(7, "abc"), 1000, 0.0, 2),
                  std::invalid_argument);
}

TEST_CASE("abc oracle concentrates around the generating parameters", "[inference][oracle]") {
  // MSD with a fixed policy and deterministic init is a deterministic map
  // theta -> trajectory, so rejection-ABC must concentrate near theta*.
  const TaskSpec task = make_task(TaskName::MassSpringDamper);
  const Prior prior = Prior::uniform(task.param_space());
  SummarizerSpec spec{SummarizerKind::Waypoints};
  spec.stride = 2;
  const int steps = 40;
  Vector push(1);
  push << 1.0;
  const Policy policy = Policy::fixed(push);
  const RealConfig real_cfg(task.param_space(),
                            {{"mass", 1.0}, {"stiffness", 2.0}, {"damping", 0.4}});
  const Trajectory real =
      real_rollout(task, real_cfg, policy, RandomStream(19, "real"), steps);

  const AbcResult result = abc_rejection_oracle(task, prior, policy, real, spec,
                                                RandomStream(19, "abc"), 4000, 0.02, 2);
  REQUIRE(result.accepted.rows() == 80);
  const Vector truth = real_cfg.theta();
  for (int d = 0; d < 3; ++d) {
    std::vector<double> col(static_cast<std::size_t>(result.accepted.rows()));
    for (int i = 0; i < result.accepted.rows(); ++i)
      col[static_cast<std::size_t>(i)] = result.accepted(i, d);
    std::sort(col.begin(), col.end());
    const double median = col[col.size() / 2];
    const double q25 = col[col.size() / 4];
    const double q75 = col[(3 * col.size()) / 4];
    INFO("dim " << d << ": median " << median << " truth " << truth[d] << " iqr "
                << (q75 - q25));
    CHECK(std::abs(median - truth[d]) <= (q75 - q25));
  }
}
