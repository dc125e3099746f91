#pragma once

// Shared vocabulary: angle conventions, stage configuration, measurement
// counts, outcome probabilities and the single-stage ambiguous estimator.
//
// Rotation angles theta live in [0, pi). The protocol works on the phase
// phi = 2 theta in [0, 2 pi). A stage with resource multiplier s observes
// s * phi modulo 2 pi.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hscale {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps x into [0, period). Uses mathematical floor, so negative inputs map
/// correctly.
inline double wrap(double x, double period) {
  double r = x - period * std::floor(x / period);
  // x slightly negative can round up to exactly `period`
  if (r >= period) r -= period;
  if (r < 0.0) r = 0.0;
  return r;
}

inline double wrap_phase(double phi) { return wrap(phi, kTwoPi); }
inline double wrap_rotation(double theta) { return wrap(theta, kPi); }

inline double phase_from_rotation(double theta) { return wrap_phase(2.0 * wrap_rotation(theta)); }
inline double rotation_from_phase(double phi) { return wrap_phase(phi) / 2.0; }

/// One rung of the ladder.
struct StageConfig {
  int s = 1;        // quantum-resource multiplier, s = m + 1
  int n = 2;        // photons in this stage, n/2 per basis
  double v = 1.0;   // fringe visibility

  void validate() const {
    if (s < 1) throw std::invalid_argument("stage: s must be >= 1");
    if (n < 0 || n % 2 != 0) throw std::invalid_argument("stage: n must be a non-negative even integer");
    if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("stage: visibility must lie in (0, 1]");
  }
};

/// q-plate topological charge for a given multiplier: s = 2q + 1.
inline double topological_charge(int s) { return (s - 1) / 2.0; }

struct MeasurementBatch {
  std::int64_t counts_h = 0;
  std::int64_t counts_v = 0;
  std::int64_t counts_d = 0;
  std::int64_t counts_a = 0;

  std::int64_t hv_total() const { return counts_h + counts_v; }
  std::int64_t da_total() const { return counts_d + counts_a; }
  double freq_hv() const { return static_cast<double>(counts_h) / static_cast<double>(hv_total()); }
  double freq_da() const { return static_cast<double>(counts_d) / static_cast<double>(da_total()); }
};

struct Probabilities {
  double p_hv = 0.5;
  double p_da = 0.5;
};

inline void check_visibility(double v) {
  if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument("visibility must lie in (0, 1]");
}

/// Outcome probabilities for H (in HV) and D (in DA) at rotation theta.
inline Probabilities outcome_probabilities(int s, double theta, double v) {
  if (s < 1) throw std::invalid_argument("outcome_probabilities: s must be >= 1");
  check_visibility(v);
  const double arg = 2.0 * s * theta;
  return {0.5 * (1.0 + v * std::cos(arg)), 0.5 * (1.0 + v * std::sin(arg))};
}

struct AmbiguousEstimate {
  double phase = 0.0;       // estimate of s * phi mod 2 pi, in [0, 2 pi)
  bool degenerate = false;  // both de-biased frequencies were exactly zero
};

/// Phase estimate from the de-biased frequencies. The HV basis carries the
/// cosine and the DA basis the sine, so atan2(sin-like, cos-like) recovers
/// s * phi.
inline AmbiguousEstimate ambiguous_estimate_from_frequencies(double f_hv, double f_da) {
  const double c = 2.0 * f_hv - 1.0;
  const double s = 2.0 * f_da - 1.0;
  if (c == 0.0 && s == 0.0) return {0.0, true};
  return {wrap_phase(std::atan2(s, c)), false};
}

inline AmbiguousEstimate ambiguous_estimator(const MeasurementBatch& batch) {
  if (batch.counts_h < 0 || batch.counts_v < 0 || batch.counts_d < 0 || batch.counts_a < 0)
    throw std::invalid_argument("ambiguous_estimator: negative counts");
  if (batch.hv_total() < 1 || batch.da_total() < 1)
    throw std::invalid_argument("ambiguous_estimator: both bases need at least one photon");
  return ambiguous_estimate_from_frequencies(batch.freq_hv(), batch.freq_da());
}

/// Distance between two rotation angles on the period-pi circle, in [0, pi/2].
inline double circular_distance(double estimate, double truth) {
  return kPi / 2.0 - std::abs(wrap(truth - estimate, kPi) - kPi / 2.0);
}

/// Distance between two phases on the period-2pi circle, in [0, pi].
inline double phase_distance(double a, double b) {
  return kPi - std::abs(wrap(a - b, kTwoPi) - kPi);
}

}  // namespace hscale
