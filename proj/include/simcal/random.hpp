#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

namespace simcal {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream keyed by (seed, stream_id). The same pair
/// always yields the same sample sequence; distinct stream ids behave as
/// independent streams, so parallel consumers can derive their own
/// substreams without coordinating draw order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string stream_id)
      : seed_(seed), stream_id_(std::move(stream_id)),
        engine_(detail::splitmix64(seed ^ detail::fnv1a64(stream_id_))) {}

  RandomStream substream(std::string_view label) const {
    return RandomStream(seed_, stream_id_ + "/" + std::string(label));
  }

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; two engine draws per variate so the
  /// consumption pattern is independent of call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // u1 == 0 would take log(0); nudge to the smallest representable draw
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n), n >= 1. Rejection-free multiply-shift would
  /// bias for huge n; modulo is fine for the index ranges used here.
  std::uint64_t uniform_index(std::uint64_t n) {
    return engine_() % n;
  }

 private:
  std::uint64_t seed_;
  std::string stream_id_;
  std::mt19937_64 engine_;
};

}  // namespace simcal
