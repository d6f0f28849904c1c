#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "simcal/math.hpp"
#include "simcal/random.hpp"

namespace simcal {

/// Named, bounded simulation parameters. The box [low, high]^D is the
/// support for every prior and posterior over these parameters.
class ParamSpace {
 public:
  struct Dim {
    std::string name;
    double low;
    double high;
  };

  explicit ParamSpace(std::vector<Dim> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw std::invalid_argument("ParamSpace: needs at least one dimension");
    std::unordered_set<std::string> seen;
    for (const auto& d : dims_) {
      if (d.name.empty()) throw std::invalid_argument("ParamSpace: empty dimension name");
      if (!seen.insert(d.name).second)
        throw std::invalid_argument("ParamSpace: duplicate dimension name '" + d.name + "'");
      if (!(d.low < d.high))
        throw std::invalid_argument("ParamSpace: low >= high for '" + d.name + "'");
      if (!std::isfinite(d.low) || !std::isfinite(d.high))
        throw std::invalid_argument("ParamSpace: non-finite bound for '" + d.name + "'");
    }
  }

  int size() const { return static_cast<int>(dims_.size()); }
  const std::vector<Dim>& dims() const { return dims_; }
  const Dim& dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i)
      if (dims_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  /// Closed-box membership: boundary points count as inside.
  bool contains(const Eigen::Ref<const Vector>& theta) const {
    if (theta.size() != size()) return false;
    for (int d = 0; d < size(); ++d) {
      if (!std::isfinite(theta[d])) return false;
      if (theta[d] < dims_[d].low || theta[d] > dims_[d].high) return false;
    }
    return true;
  }

  double log_volume() const {
    double lv = 0.0;
    for (const auto& d : dims_) lv += std::log(d.high - d.low);
    return lv;
  }

  bool operator==(const ParamSpace& other) const {
    if (dims_.size() != other.dims_.size()) return false;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (dims_[i].name != other.dims_[i].name || dims_[i].low != other.dims_[i].low ||
          dims_[i].high != other.dims_[i].high)
        return false;
    }
    return true;
  }

 private:
  std::vector<Dim> dims_;
};

/// Factorized prior over a ParamSpace box. Each dimension is either uniform
/// on [low, high] or a Gaussian truncated to [low, high].
class Prior {
 public:
  struct GaussianDim {
    double mean;
    double std;
  };

  static Prior uniform(ParamSpace space) {
    return Prior(std::move(space), std::vector<std::optional<GaussianDim>>{});
  }

  /// gaussians[d] empty means dimension d stays uniform.
  static Prior truncated_gaussian(ParamSpace space,
                                  std::vector<std::optional<GaussianDim>> gaussians) {
    if (!gaussians.empty() &&
        gaussians.size() != static_cast<std::size_t>(space.size()))
      throw std::invalid_argument("Prior: gaussian spec count != dimension count");
    for (const auto& g : gaussians) {
      if (g && !(g->std > 0.0 && std::isfinite(g->std) && std::isfinite(g->mean)))
        throw std::invalid_argument("Prior: truncated gaussian needs finite mean, positive std");
    }
    return Prior(std::move(space), std::move(gaussians));
  }

  const ParamSpace& space() const { return space_; }
  bool is_uniform() const { return uniform_; }

  double logpdf(const Eigen::Ref<const Vector>& theta) const {
    if (theta.size() != space_.size())
      throw std::invalid_argument("Prior::logpdf: dimension mismatch");
    if (!space_.contains(theta)) return kNegInf;
    double lp = 0.0;
    for (int d = 0; d < space_.size(); ++d) {
      const auto& dim = space_.dim(d);
      if (gaussian_dim(d)) {
        const auto& g = *gaussian_dim(d);
        const double z = (theta[d] - g.mean) / g.std;
        lp += -0.5 * z * z - std::log(g.std) - 0.5 * kLogTwoPi - std::log(trunc_mass(d));
      } else {
        lp -= std::log(dim.high - dim.low);
      }
    }
    return lp;
  }

  Matrix sample(RandomStream& rng, int n) const {
    if (n < 1) throw std::invalid_argument("Prior::sample: n must be >= 1");
    for (int d = 0; d < space_.size(); ++d) {
      if (gaussian_dim(d) && trunc_mass(d) < 1e-6)
        throw std::runtime_error("Prior::sample: degenerate truncation on '" +
                                 space_.dim(d).name + "'");
    }
    Matrix out(n, space_.size());
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < space_.size(); ++d) {
        const auto& dim = space_.dim(d);
        if (gaussian_dim(d)) {
          const auto& g = *gaussian_dim(d);
          // rejection against the box; mass >= 1e-6 was checked above
          double x;
          do {
            x = g.mean + g.std * rng.normal();
          } while (x < dim.low || x > dim.high);
          out(i, d) = x;
        } else {
          out(i, d) = rng.uniform(dim.low, dim.high);
        }
      }
    }
    return out;
  }

  bool operator==(const Prior& other) const {
    if (!(space_ == other.space_) || uniform_ != other.uniform_) return false;
    for (int d = 0; d < space_.size(); ++d) {
      const auto *a = gaussian_dim(d), *b = other.gaussian_dim(d);
      if (static_cast<bool>(a) != static_cast<bool>(b)) return false;
      if (a && (a->mean != b->mean || a->std != b->std)) return false;
    }
    return true;
  }

 private:
  Prior(ParamSpace space, std::vector<std::optional<GaussianDim>> gaussians)
      : space_(std::move(space)), gaussians_(std::move(gaussians)) {
    uniform_ = true;
    for (const auto& g : gaussians_)
      if (g) uniform_ = false;
  }

  const GaussianDim* gaussian_dim(int d) const {
    if (gaussians_.empty()) return nullptr;
    const auto& g = gaussians_[static_cast<std::size_t>(d)];
    return g ? &*g : nullptr;
  }

  /// Probability mass of the untruncated gaussian inside [low, high].
  double trunc_mass(int d) const {
    const auto& g = *gaussian_dim(d);
    const auto& dim = space_.dim(d);
    const double a = (dim.low - g.mean) / g.std;
    const double b = (dim.high - g.mean) / g.std;
    return standard_normal_cdf(b) - standard_normal_cdf(a);
  }

  ParamSpace space_;
  std::vector<std::optional<GaussianDim>> gaussians_;
  bool uniform_ = true;
};

inline double prior_logpdf(const Prior& prior, const Eigen::Ref<const Vector>& theta) {
  return prior.logpdf(theta);
}

inline Matrix prior_sample(const Prior& prior, RandomStream& rng, int n) {
  return prior.sample(rng, n);
}

}  // namespace simcal
