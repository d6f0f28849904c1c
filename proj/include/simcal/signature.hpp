#pragma once

#include <stdexcept>
#include <vector>

#include "simcal/math.hpp"

namespace simcal {

/// Truncated path signature: levels 1..depth of iterated integrals of a
/// piecewise-linear path in R^c. Level k is the flattened order-k tensor
/// (row-major multi-index, c^k entries). Level 0 is the implicit scalar 1.
class TruncatedSignature {
 public:
  TruncatedSignature(int channels, int depth) : channels_(channels), depth_(depth) {
    if (channels < 1) throw std::invalid_argument("TruncatedSignature: channels >= 1 required");
    if (depth < 1 || depth > 4)
      throw std::invalid_argument("TruncatedSignature: depth must be in [1, 4]");
    levels_.resize(static_cast<std::size_t>(depth));
    std::size_t sz = 1;
    for (int k = 0; k < depth; ++k) {
      sz *= static_cast<std::size_t>(channels);
      levels_[static_cast<std::size_t>(k)] = Vector::Zero(static_cast<Eigen::Index>(sz));
    }
  }

  /// Signature of a single linear segment with increment v:
  /// level k = v^{tensor k} / k!.
  static TruncatedSignature segment(const Eigen::Ref<const Vector>& increment, int depth) {
    TruncatedSignature sig(static_cast<int>(increment.size()), depth);
    sig.levels_[0] = increment;
    for (int k = 1; k < depth; ++k) {
      // v^{(x)k}/k! = (v^{(x)k-1}/(k-1)!) (x) v / k
      sig.levels_[static_cast<std::size_t>(k)] =
          outer(sig.levels_[static_cast<std::size_t>(k - 1)], increment) / (k + 1);
    }
    return sig;
  }

  /// Chen's identity: signature of the concatenated path, via the truncated
  /// tensor-algebra product S(a*b)_k = sum_{i+j=k} S(a)_i (x) S(b)_j.
  TruncatedSignature concat(const TruncatedSignature& rhs) const {
    if (channels_ != rhs.channels_ || depth_ != rhs.depth_)
      throw std::invalid_argument("TruncatedSignature::concat: shape mismatch");
    TruncatedSignature out(channels_, depth_);
    for (int k = 1; k <= depth_; ++k) {
      Vector acc = level(k) + rhs.level(k);  // i=k,j=0 and i=0,j=k terms
      for (int i = 1; i < k; ++i) acc += outer(level(i), rhs.level(k - i));
      out.levels_[static_cast<std::size_t>(k - 1)] = std::move(acc);
    }
    return out;
  }

  int channels() const { return channels_; }
  int depth() const { return depth_; }

  /// k in 1..depth.
  const Vector& level(int k) const { return levels_.at(static_cast<std::size_t>(k - 1)); }

  /// Levels 1..depth concatenated, lowest level first.
  Vector flatten() const {
    Eigen::Index total = 0;
    for (const auto& l : levels_) total += l.size();
    Vector out(total);
    Eigen::Index at = 0;
    for (const auto& l : levels_) {
      out.segment(at, l.size()) = l;
      at += l.size();
    }
    return out;
  }

  static Eigen::Index flat_size(int channels, int depth) {
    Eigen::Index total = 0, p = 1;
    for (int k = 1; k <= depth; ++k) {
      p *= channels;
      total += p;
    }
    return total;
  }

 private:
  static Vector outer(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    Vector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
      out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
  }

  int channels_;
  int depth_;
  std::vector<Vector> levels_;  // levels_[k-1] holds level k
};

/// Signature of the piecewise-linear path through the rows of `points`.
inline TruncatedSignature path_signature(const Eigen::Ref<const Matrix>& points, int depth) {
  if (points.rows() < 2)
    throw std::invalid_argument("path_signature: needs at least 2 path points");
  TruncatedSignature sig =
      TruncatedSignature::segment((points.row(1) - points.row(0)).transpose(), depth);
  for (Eigen::Index t = 1; t + 1 < points.rows(); ++t) {
    sig = sig.concat(TruncatedSignature::segment(
        (points.row(t + 1) - points.row(t)).transpose(), depth));
  }
  return sig;
}

}  // namespace simcal
