#pragma once

// Counter-based random streams. A stream is identified by a 64-bit key
// derived from the campaign seed and the (grid point, angle, run, stage)
// coordinates; draw i of the stream is a SplitMix64 finaliser applied to
// key + (i + 1) * golden. Streams for distinct coordinates are independent
// of one another and of the order in which they are consumed.

#include <cmath>
#include <cstdint>
#include <limits>

namespace hscale {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Folds one coordinate into a key. Order matters: derive_key(derive_key(k,
/// a), b) differs from derive_key(derive_key(k, b), a).
inline constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t coordinate) {
  return splitmix_finalize(key ^ splitmix_finalize(coordinate + kGolden));
}

class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    ++counter_;
    return splitmix_finalize(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t key() const { return key_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream key for one stage of one protocol run. Coordinates are folded
/// grid-point first, then angle, then run, then stage.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t grid_index, std::uint64_t angle_index,
                                std::uint64_t run_index, std::uint64_t stage_index) {
  std::uint64_t k = splitmix_finalize(seed ^ 0x5DEECE66DULL);
  k = derive_key(k, grid_index);
  k = derive_key(k, angle_index);
  k = derive_key(k, run_index);
  return derive_key(k, stage_index);
}

/// Exact Binomial(trials, p) draw by inversion. The support is enumerated
/// outward from the mode, so the pmf never underflows at large trial counts
/// and the expected number of steps is O(sqrt(trials p (1 - p))).
template <class Rng>
std::int64_t sample_binomial(Rng& rng, std::int64_t trials, double p) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  const double q = 1.0 - p;
  const double n = static_cast<double>(trials);
  std::int64_t mode = static_cast<std::int64_t>(std::floor((n + 1.0) * p));
  if (mode > trials) mode = trials;
  const double log_pmf_mode = std::lgamma(n + 1.0) - std::lgamma(mode + 1.0) - std::lgamma(n - mode + 1.0) +
                              mode * std::log(p) + (n - mode) * std::log(q);
  const double pmf_mode = std::exp(log_pmf_mode);
  const double ratio = p / q;

  double u = rng.uniform();
  u -= pmf_mode;
  if (u < 0.0) return mode;

  std::int64_t up = mode, down = mode;
  double pmf_up = pmf_mode, pmf_down = pmf_mode;
  while (up < trials || down > 0) {
    if (up < trials) {
      pmf_up *= ratio * static_cast<double>(trials - up) / static_cast<double>(up + 1);
      ++up;
      u -= pmf_up;
      if (u < 0.0) return up;
    }
    if (down > 0) {
      pmf_down *= static_cast<double>(down) / (ratio * static_cast<double>(trials - down + 1));
      --down;
      u -= pmf_down;
      if (u < 0.0) return down;
    }
    if (pmf_up < 1e-300 && pmf_down < 1e-300) break;
  }
  // residual mass lost to rounding
  return mode;
}

}  // namespace hscale
