#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "simcal/math.hpp"
#include "simcal/random.hpp"

namespace simcal {

/// Gaussian mixture with full-covariance components stored through their
/// Cholesky factors. Immutable once constructed; construction validates the
/// simplex weights and floors every Cholesky diagonal at 1e-6 so the
/// covariances stay positive definite.
class GaussianMixtureDensity {
 public:
  static constexpr double kDiagFloor = 1e-6;
  static constexpr double kWeightTol = 1e-9;

  GaussianMixtureDensity(Vector weights, Matrix means, std::vector<Matrix> chol_factors)
      : weights_(std::move(weights)),
        means_(std::move(means)),
        chols_(std::move(chol_factors)) {
    const int k = static_cast<int>(weights_.size());
    const int d = static_cast<int>(means_.cols());
    if (k < 1) throw std::invalid_argument("GaussianMixtureDensity: needs K >= 1");
    if (means_.rows() != k || static_cast<int>(chols_.size()) != k)
      throw std::invalid_argument("GaussianMixtureDensity: component count mismatch");
    if (d < 1) throw std::invalid_argument("GaussianMixtureDensity: needs D >= 1");
    if (!all_finite(weights_) || !all_finite(means_))
      throw std::invalid_argument("GaussianMixtureDensity: non-finite parameters");
    double wsum = 0.0;
    for (int i = 0; i < k; ++i) {
      if (weights_[i] < 0.0)
        throw std::invalid_argument("GaussianMixtureDensity: negative weight");
      wsum += weights_[i];
    }
    if (std::abs(wsum - 1.0) > kWeightTol)
      throw std::invalid_argument("GaussianMixtureDensity: weights do not sum to 1");
    for (auto& L : chols_) {
      if (L.rows() != d || L.cols() != d)
        throw std::invalid_argument("GaussianMixtureDensity: Cholesky factor shape mismatch");
      if (!all_finite(L))
        throw std::invalid_argument("GaussianMixtureDensity: non-finite Cholesky factor");
      for (int i = 0; i < d; ++i) {
        if (!(L(i, i) > 0.0))
          throw std::invalid_argument("GaussianMixtureDensity: non-positive Cholesky diagonal");
        L(i, i) = std::max(L(i, i), kDiagFloor);
        for (int j = i + 1; j < d; ++j) L(i, j) = 0.0;  // enforce lower-triangular storage
      }
    }
  }

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const Vector& weights() const { return weights_; }
  const Matrix& means() const { return means_; }
  const std::vector<Matrix>& chol_factors() const { return chols_; }

  /// log sum_k w_k N(theta; mu_k, L_k L_k^T), log-sum-exp stabilized.
  double logpdf(const Eigen::Ref<const Vector>& theta) const {
    if (theta.size() != dim())
      throw std::invalid_argument("GaussianMixtureDensity::logpdf: dimension mismatch");
    if (!all_finite(theta))
      throw std::invalid_argument("GaussianMixtureDensity::logpdf: non-finite point");
    std::vector<double> terms(static_cast<std::size_t>(components()));
    for (int k = 0; k < components(); ++k) {
      const double lw = weights_[k] > 0.0 ? std::log(weights_[k]) : kNegInf;
      terms[static_cast<std::size_t>(k)] = lw + component_logpdf(k, theta);
    }
    return log_sum_exp(terms);
  }

  /// Component log density via the Cholesky factor:
  ///   -0.5 ||L^-1 (theta-mu)||^2 - sum_d log L[d,d] - D/2 log(2 pi)
  double component_logpdf(int k, const Eigen::Ref<const Vector>& theta) const {
    const Matrix& L = chols_[static_cast<std::size_t>(k)];
    Vector delta = theta - means_.row(k).transpose();
    Vector y = L.triangularView<Eigen::Lower>().solve(delta);
    double log_det = 0.0;
    for (int i = 0; i < dim(); ++i) log_det += std::log(L(i, i));
    return -0.5 * y.squaredNorm() - log_det - 0.5 * dim() * kLogTwoPi;
  }

  /// Ancestral sampling: component by weight, then mu + L z.
  Matrix sample(RandomStream& rng, int n) const {
    if (n < 1) throw std::invalid_argument("GaussianMixtureDensity::sample: n must be >= 1");
    Matrix out(n, dim());
    Vector z(dim());
    for (int i = 0; i < n; ++i) {
      const int k = pick_component(rng);
      for (int d = 0; d < dim(); ++d) z[d] = rng.normal();
      out.row(i) = means_.row(k) +
                   (chols_[static_cast<std::size_t>(k)].triangularView<Eigen::Lower>() * z)
                       .transpose();
    }
    return out;
  }

  /// Exact 2-D marginal over a pair of dimensions: same weights, sub-vector
  /// means, re-factored 2x2 sub-blocks of each covariance.
  GaussianMixtureDensity marginal(int dim_a, int dim_b) const {
    if (dim_a == dim_b)
      throw std::invalid_argument("GaussianMixtureDensity::marginal: duplicate indices");
    if (dim_a < 0 || dim_b < 0 || dim_a >= dim() || dim_b >= dim())
      throw std::invalid_argument("GaussianMixtureDensity::marginal: index out of range");
    Matrix means(components(), 2);
    std::vector<Matrix> chols;
    chols.reserve(static_cast<std::size_t>(components()));
    for (int k = 0; k < components(); ++k) {
      const Matrix& L = chols_[static_cast<std::size_t>(k)];
      Matrix cov = L * L.transpose();
      Eigen::Matrix2d sub;
      sub << cov(dim_a, dim_a), cov(dim_a, dim_b), cov(dim_b, dim_a), cov(dim_b, dim_b);
      Eigen::LLT<Eigen::Matrix2d> llt(sub);
      Matrix L2;
      if (llt.info() == Eigen::Success) {
        L2 = llt.matrixL();
      } else {
        // sub-block numerically semidefinite; fall back to the explicit
        // 2x2 factorization with the diagonal floored
        const double l00 = std::sqrt(std::max(sub(0, 0), kDiagFloor * kDiagFloor));
        const double l10 = sub(1, 0) / l00;
        const double rem = std::max(sub(1, 1) - l10 * l10, kDiagFloor * kDiagFloor);
        L2 = Matrix::Zero(2, 2);
        L2(0, 0) = l00;
        L2(1, 0) = l10;
        L2(1, 1) = std::sqrt(rem);
      }
      means(k, 0) = means_(k, dim_a);
      means(k, 1) = means_(k, dim_b);
      chols.push_back(L2);
    }
    return GaussianMixtureDensity(weights_, std::move(means), std::move(chols));
  }

 private:
  int pick_component(RandomStream& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int k = 0; k < components(); ++k) {
      acc += weights_[k];
      if (u < acc) return k;
    }
    return components() - 1;
  }

  Vector weights_;
  Matrix means_;
  std::vector<Matrix> chols_;
};

inline double mixture_logpdf(const GaussianMixtureDensity& m,
                             const Eigen::Ref<const Vector>& theta) {
  return m.logpdf(theta);
}

inline Matrix mixture_sample(const GaussianMixtureDensity& m, RandomStream& rng, int n) {
  return m.sample(rng, n);
}

inline GaussianMixtureDensity mixture_marginal(const GaussianMixtureDensity& m, int dim_a,
                                               int dim_b) {
  return m.marginal(dim_a, dim_b);
}

}  // namespace simcal
