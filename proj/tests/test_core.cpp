#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "simcal/math.hpp"
#include "simcal/mixture.hpp"
#include "simcal/param_space.hpp"
#include "simcal/random.hpp"

using namespace simcal;

namespace {

GaussianMixtureDensity standard_normal_mixture(int dim) {
  Vector w = Vector::Ones(1);
  Matrix means = Matrix::Zero(1, dim);
  return GaussianMixtureDensity(w, means, {Matrix::Identity(dim, dim)});
}

/// Deterministic pseudo-random mixture for oracle tests.
GaussianMixtureDensity random_mixture(int k, int dim, RandomStream& rng) {
  Vector w(k);
  for (int i = 0; i < k; ++i) w[i] = 0.2 + rng.uniform();
  w /= w.sum();
  Matrix means(k, dim);
  std::vector<Matrix> chols;
  for (int i = 0; i < k; ++i) {
    for (int d = 0; d < dim; ++d) means(i, d) = rng.uniform(-1.0, 1.0);
    Matrix chol = Matrix::Zero(dim, dim);
    for (int r = 0; r < dim; ++r) {
      chol(r, r) = 0.3 + 0.7 * rng.uniform();
      for (int c = 0; c < r; ++c) chol(r, c) = 0.3 * rng.uniform(-1.0, 1.0);
    }
    chols.push_back(chol);
  }
  return GaussianMixtureDensity(w, means, chols);
}

}  // namespace

TEST_CASE("param space rejects malformed dimensions", "[core]") {
  CHECK_THROWS_AS(ParamSpace({{"a", 1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"a", 2.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"a", 0.0, 1.0}, {"a", 0.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"", 0.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace(std::vector<ParamSpace::Dim>{}), std::invalid_argument);
}

TEST_CASE("uniform prior logpdf is the box-volume reciprocal", "[core]") {
  const Prior prior = Prior::uniform(ParamSpace({{"a", 0.0, 1.0}, {"b", 0.0, 2.0}}));
  Vector theta(2);
  theta << 0.5, 1.0;
  CHECK_THAT(prior.logpdf(theta), Catch::Matchers::WithinAbs(-0.6931471805599453, 1e-12));

  const Prior cube = Prior::uniform(ParamSpace({{"a", 0.0, 1.0}, {"b", 0.0, 1.0}, {"c", 0.0, 1.0}}));
  Vector inside(3);
  inside << 0.2, 0.2, 0.2;
  CHECK(cube.logpdf(inside) == 0.0);

  const Prior line = Prior::uniform(ParamSpace({{"a", 0.0, 1.0}}));
  Vector outside(1);
  outside << 1.5;
  CHECK(line.logpdf(outside) == kNegInf);

  Vector wrong(2);
  CHECK_THROWS_AS(line.logpdf(wrong), std::invalid_argument);
}

TEST_CASE("truncated gaussian prior integrates to one and vanishes outside", "[core]") {
  const ParamSpace space({{"a", -1.0, 2.0}});
  const Prior prior =
      Prior::truncated_gaussian(space, {Prior::GaussianDim{0.5, 0.8}});
  // midpoint quadrature of the density over the support
  const int n = 20000;
  double mass = 0.0;
  const double width = 3.0 / n;
  for (int i = 0; i < n; ++i) {
    Vector x(1);
    x << -1.0 + (i + 0.5) * width;
    mass += std::exp(prior.logpdf(x)) * width;
  }
  CHECK_THAT(mass, Catch::Matchers::WithinAbs(1.0, 1e-6));
  Vector out(1);
  out << 2.5;
  CHECK(prior.logpdf(out) == kNegInf);
}

TEST_CASE("prior sampling hits the expected mean and stays in support", "[core]") {
  const Prior prior = Prior::uniform(ParamSpace({{"a", 0.0, 1.0}, {"b", 0.0, 1.0}}));
  RandomStream rng(7, "prior_mean");
  const Matrix samples = prior.sample(rng, 1000);
  CHECK_THAT(samples.col(0).mean(), Catch::Matchers::WithinAbs(0.5, 0.05));
  CHECK_THAT(samples.col(1).mean(), Catch::Matchers::WithinAbs(0.5, 0.05));
  for (int i = 0; i < samples.rows(); ++i)
    CHECK(prior.logpdf(samples.row(i).transpose()) > kNegInf);
}

TEST_CASE("prior sampling rejects n = 0 and repeats under the same stream", "[core]") {
  const Prior prior = Prior::uniform(ParamSpace({{"a", 0.0, 1.0}}));
  RandomStream rng(3, "s");
  CHECK_THROWS_AS(prior.sample(rng, 0), std::invalid_argument);
  RandomStream a(3, "same");
  RandomStream b(3, "same");
  CHECK(prior.sample(a, 50) == prior.sample(b, 50));
}

TEST_CASE("truncated gaussian sampling respects the box; degenerate truncation errors",
          "[core]") {
  const ParamSpace space({{"a", 0.0, 1.0}});
  const Prior ok = Prior::truncated_gaussian(space, {Prior::GaussianDim{2.0, 1.0}});
  RandomStream rng(11, "trunc");
  const Matrix samples = ok.sample(rng, 500);
  CHECK(samples.minCoeff() >= 0.0);
  CHECK(samples.maxCoeff() <= 1.0);

  // mean 50 sigma away: acceptance mass far below 1e-6
  const Prior degenerate =
      Prior::truncated_gaussian(space, {Prior::GaussianDim{50.0, 1.0}});
  RandomStream rng2(11, "trunc2");
  CHECK_THROWS_WITH(degenerate.sample(rng2, 1),
                    Catch::Matchers::ContainsSubstring("degenerate truncation"));
}

TEST_CASE("mixture logpdf matches hand-computed values", "[core]") {
  const auto single = standard_normal_mixture(2);
  Vector origin = Vector::Zero(2);
  CHECK_THAT(single.logpdf(origin),
             Catch::Matchers::WithinAbs(-1.8378770664093454, 1e-12));

  // duplicate components leave the density unchanged
  Vector w2(2);
  w2 << 0.5, 0.5;
  Matrix means2 = Matrix::Zero(2, 2);
  GaussianMixtureDensity dup(w2, means2,
                             {Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  CHECK_THAT(dup.logpdf(origin), Catch::Matchers::WithinAbs(-1.8378770664093454, 1e-12));

  Matrix means1(2, 1);
  means1 << 0.0, 2.0;
  GaussianMixtureDensity two(w2, means1, {Matrix::Ones(1, 1), Matrix::Ones(1, 1)});
  Vector at(1);
  at << 1.0;
  CHECK_THAT(two.logpdf(at), Catch::Matchers::WithinAbs(-1.4189385332046727, 1e-12));

  Vector bad(2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(single.logpdf(bad), std::invalid_argument);
}

TEST_CASE("mixture construction validates the simplex and the factors", "[core]") {
  Vector w(2);
  w << 0.6, 0.6;
  Matrix means = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(
      GaussianMixtureDensity(w, means, {Matrix::Ones(1, 1), Matrix::Ones(1, 1)}),
      std::invalid_argument);

  Vector w1 = Vector::Ones(1);
  Matrix mean1 = Matrix::Zero(1, 1);
  Matrix bad_chol = -Matrix::Ones(1, 1);
  CHECK_THROWS_AS(GaussianMixtureDensity(w1, mean1, {bad_chol}), std::invalid_argument);

  // diagonal below the floor gets clamped up
  Matrix tiny = Matrix::Ones(1, 1) * 1e-9;
  GaussianMixtureDensity clamped(w1, mean1, {tiny});
  CHECK(clamped.chol_factors()[0](0, 0) == GaussianMixtureDensity::kDiagFloor);
}

TEST_CASE("mixture sampling follows weights and moments", "[core]") {
  Vector w = Vector::Ones(1);
  Matrix mean(1, 1);
  mean << 5.0;
  GaussianMixtureDensity spike(w, mean, {Matrix::Ones(1, 1) * 1e-6});
  RandomStream rng(5, "spike");
  const Matrix close = spike.sample(rng, 200);
  CHECK((close.array() - 5.0).abs().maxCoeff() < 1e-4);

  const auto normal = standard_normal_mixture(1);
  RandomStream rng2(5, "moments");
  const Matrix samples = normal.sample(rng2, 10000);
  const double m = samples.col(0).mean();
  const double var = (samples.col(0).array() - m).square().sum() / samples.rows();
  CHECK(std::abs(m) < 0.05);
  CHECK(var > 0.9);
  CHECK(var < 1.1);

  Vector w2(2);
  w2 << 1.0, 0.0;
  Matrix means2(2, 1);
  means2 << 0.0, 100.0;
  GaussianMixtureDensity gated(w2, means2, {Matrix::Ones(1, 1), Matrix::Ones(1, 1)});
  RandomStream rng3(5, "gated");
  CHECK(gated.sample(rng3, 500).maxCoeff() < 50.0);
}

TEST_CASE("marginal over all dims is the identity; diagonal sub-selection", "[core]") {
  RandomStream rng(17, "marg");
  const auto mix = random_mixture(2, 2, rng);
  const auto marg = mix.marginal(0, 1);
  RandomStream grid_rng(17, "marg_pts");
  for (int i = 0; i < 50; ++i) {
    Vector p(2);
    p << grid_rng.uniform(-3.0, 3.0), grid_rng.uniform(-3.0, 3.0);
    CHECK_THAT(marg.logpdf(p), Catch::Matchers::WithinAbs(mix.logpdf(p), 1e-10));
  }

  Vector w = Vector::Ones(1);
  Matrix mean = Matrix::Zero(1, 3);
  Matrix chol = Matrix::Zero(3, 3);
  chol(0, 0) = 1.0;
  chol(1, 1) = 2.0;
  chol(2, 2) = 3.0;
  GaussianMixtureDensity diag(w, mean, {chol});
  const auto sub = diag.marginal(0, 2);
  const Matrix cov = sub.chol_factors()[0] * sub.chol_factors()[0].transpose();
  CHECK_THAT(cov(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(cov(1, 1), Catch::Matchers::WithinAbs(9.0, 1e-12));
  CHECK_THAT(cov(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));

  CHECK_THROWS_AS(diag.marginal(1, 1), std::invalid_argument);
}

TEST_CASE("2-D marginal agrees with quadrature over the dropped dims", "[core][oracle]") {
  RandomStream rng(23, "marg_oracle");
  const auto mix = random_mixture(3, 4, rng);
  const auto marg = mix.marginal(0, 2);

  // integrate the joint over dims 1 and 3 with midpoint quadrature
  const int n = 200;
  const double lo = -6.0, hi = 6.0;  // means within +-1, sigmas < ~1.3: +-6 covers > 8 sigma
  const double width = (hi - lo) / n;
  auto marginal_by_quadrature = [&](double a, double b) {
    double acc = 0.0;
    Vector p(4);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        p << a, lo + (i + 0.5) * width, b, lo + (j + 0.5) * width;
        acc += std::exp(mix.logpdf(p));
      }
    }
    return acc * width * width;
  };

  Vector point(2);
  for (const auto [a, b] : {std::pair{0.0, 0.0}, std::pair{0.5, -0.5}, std::pair{-1.0, 1.0}}) {
    point << a, b;
    CHECK_THAT(std::exp(marg.logpdf(point)),
               Catch::Matchers::WithinAbs(marginal_by_quadrature(a, b), 1e-3));
  }
}

TEST_CASE("mixture density normalizes on a grid", "[core][property]") {
  RandomStream rng(31, "norm");
  for (int trial = 0; trial < 3; ++trial) {
    const auto mix1 = random_mixture(3, 1, rng);
    const int n = 4000;
    const double lo = -10.0, hi = 10.0;
    const double width = (hi - lo) / n;
    double mass = 0.0;
    Vector p(1);
    for (int i = 0; i < n; ++i) {
      p << lo + (i + 0.5) * width;
      mass += std::exp(mix1.logpdf(p)) * width;
    }
    CHECK_THAT(mass, Catch::Matchers::WithinAbs(1.0, 1e-3));
  }

  const auto mix2 = random_mixture(2, 2, rng);
  const int n = 400;
  const double lo = -10.0, hi = 10.0;
  const double width = (hi - lo) / n;
  double mass = 0.0;
  Vector p(2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      p << lo + (i + 0.5) * width, lo + (j + 0.5) * width;
      mass += std::exp(mix2.logpdf(p)) * width * width;
    }
  CHECK_THAT(mass, Catch::Matchers::WithinAbs(1.0, 1e-3));
}

TEST_CASE("sampling matches the density in total variation", "[core][property]") {
  RandomStream mix_rng(41, "tv_mix");
  const auto mix = random_mixture(3, 1, mix_rng);
  RandomStream rng(41, "tv");
  const Matrix samples = mix.sample(rng, 50000);

  const int bins = 50;
  const double lo = samples.minCoeff(), hi = samples.maxCoeff() + 1e-12;
  const double width = (hi - lo) / bins;
  std::vector<double> hist(bins, 0.0), dens(bins, 0.0);
  for (int i = 0; i < samples.rows(); ++i) {
    int b = static_cast<int>((samples(i, 0) - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0 / samples.rows();
  }
  double dens_total = 0.0;
  Vector p(1);
  for (int b = 0; b < bins; ++b) {
    p << lo + (b + 0.5) * width;
    dens[static_cast<std::size_t>(b)] = std::exp(mix.logpdf(p));
    dens_total += dens[static_cast<std::size_t>(b)];
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b)
    tv += std::abs(hist[static_cast<std::size_t>(b)] - dens[static_cast<std::size_t>(b)] / dens_total);
  CHECK(tv / 2.0 < 0.05);
}

TEST_CASE("random streams are reproducible and label-separated", "[core]") {
  RandomStream a(99, "x");
  RandomStream b(99, "x");
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  RandomStream c(99, "x");
  RandomStream d(99, "y");
  int differing = 0;
  for (int i = 0; i < 100; ++i)
    if (c.uniform() != d.uniform()) ++differing;
  CHECK(differing > 90);

  RandomStream parent(99, "p");
  CHECK(parent.substream("child").stream_id() == "p/child");
  // substreams do not advance the parent
  RandomStream parent2(99, "p");
  (void)parent.substream("child");
  CHECK(parent.uniform() == parent2.uniform());
}

TEST_CASE("normal draws have the right first two moments", "[core]") {
  RandomStream rng(123, "gauss");
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.05);
}
