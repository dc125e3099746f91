#pragma once

// Interval-width schedule: gamma recursion, feasible gamma_1 range,
// confidence factors, D coefficients and the analytical error bound.
//
// Stage indices in code are zero-based: stage k holds s[k], gamma[k] and is
// stage i = k + 1 in the usual one-based numbering. The conventions
// gamma_0 = 1 and s_0 = 1 apply to the stage before the first.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hscale/core.hpp"
#include "hscale/numeric.hpp"

namespace hscale {

/// Concentration constant of the confidence factor, validated numerically for
/// stages with up to 40 photons.
inline constexpr double kDefaultB = 0.7357;
inline constexpr double kEndpointShrink = 1e-9;
inline constexpr int kMinPhotons = 2;

inline void validate_ladder(std::span<const int> s) {
  if (s.empty()) throw std::invalid_argument("ladder must contain at least one stage");
  if (s[0] != 1) throw std::invalid_argument("ladder must start with s = 1");
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k] < s[k - 1]) throw std::invalid_argument("ladder must be non-decreasing");
  }
}

struct GammaSequence {
  bool feasible = false;
  std::vector<double> gamma;  // gamma_1..gamma_K (partial when infeasible)
  int failing_stage = -1;     // zero-based stage where feasibility broke
};

/// gamma_i = gamma_{i-1} / (gamma_{i-1} - s_i / s_{i-1}), starting from the
/// free choice gamma_1.
inline GammaSequence gamma_sequence(double gamma1, std::span<const int> s) {
  validate_ladder(s);
  GammaSequence out;
  out.gamma.reserve(s.size());
  if (!(gamma1 >= 1.0) || !std::isfinite(gamma1)) {
    out.failing_stage = 0;
    return out;
  }
  out.gamma.push_back(gamma1);
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double prev = out.gamma.back();
    const double denom = prev - static_cast<double>(s[k]) / static_cast<double>(s[k - 1]);
    if (!(denom > 0.0)) {
      out.failing_stage = static_cast<int>(k);
      return out;
    }
    const double g = prev / denom;
    if (!(g >= 1.0) || !std::isfinite(g)) {
      out.failing_stage = static_cast<int>(k);
      return out;
    }
    out.gamma.push_back(g);
  }
  out.feasible = true;
  return out;
}

/// Open interval (lower, upper) of gamma_1 values with a feasible sequence.
/// For a single-stage ladder the interval is [1, inf).
struct Gamma1Range {
  bool empty = true;
  double lower = 1.0;
  double upper = std::numeric_limits<double>::infinity();

  bool unbounded() const { return std::isinf(upper); }
  bool contains(double g) const { return !empty && g > lower && g < upper; }
  /// Endpoints pulled inwards, safe to evaluate.
  double inner_lower() const { return lower + kEndpointShrink; }
  double inner_upper() const { return unbounded() ? upper : upper - kEndpointShrink; }
};

inline Gamma1Range feasible_gamma1_range(std::span<const int> s) {
  validate_ladder(s);
  Gamma1Range r;
  if (s.size() == 1) {
    r.empty = false;
    return r;
  }
  auto feasible = [&](double g) { return gamma_sequence(g, s).feasible; };

  // gamma_1 must exceed s_2 / s_1; scan the excess on a log grid.
  const double base = static_cast<double>(s[1]) / static_cast<double>(s[0]);
  const auto at = [&](double excess) { return std::max(1.0, base) + excess; };
  constexpr int kGrid = 40000;
  const double lo_exp = -10.0, hi_exp = 7.0;
  std::vector<double> grid(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    grid[i] = at(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / (kGrid - 1)) * std::max(1.0, base));
  }
  int first = -1, last = -1;
  for (int i = 0; i < kGrid; ++i) {
    if (feasible(grid[i])) {
      if (first < 0) first = i;
      last = i;
    } else if (first >= 0) {
      break;
    }
  }
  if (first < 0) return r;

  constexpr double kTol = 1e-10;
  const double below = first == 0 ? std::max(1.0, base) : grid[first - 1];
  r.lower = numeric::bisect_predicate(feasible, below, grid[first], kTol, true);
  // bisect_predicate returns the feasible side; report the boundary itself.
  r.lower -= 0.5 * kTol;
  if (last == kGrid - 1 && feasible(1e15)) {
    r.upper = std::numeric_limits<double>::infinity();
  } else {
    const double hi = last == kGrid - 1 ? 1e15 : grid[last + 1];
    r.upper = numeric::bisect_predicate(feasible, grid[last], hi, kTol, false) + 0.5 * kTol;
  }
  r.empty = !(r.upper > r.lower);
  return r;
}

/// C(gamma) = exp(b sin^2(pi / gamma)).
inline double confidence_factor(double gamma, double b = kDefaultB) {
  const double sn = std::sin(kPi / gamma);
  return std::exp(b * sn * sn);
}

struct Schedule {
  std::vector<int> s;
  std::vector<double> gamma;
  double b = kDefaultB;
  std::vector<double> D;           // D_1..D_{K-1}
  std::vector<double> visibility;  // per stage, all 1 unless rescaled

  int stages() const { return static_cast<int>(s.size()); }
  double s_prev(int k) const { return k == 0 ? 1.0 : static_cast<double>(s[k - 1]); }
  double gamma_prev(int k) const { return k == 0 ? 1.0 : gamma[k - 1]; }
  double v(int k) const { return visibility.empty() ? 1.0 : visibility[k]; }

  /// log C_k after visibility rescaling C -> C^{v^2}.
  double log_confidence(int k) const {
    const double sn = std::sin(kPi / gamma[k]);
    return b * v(k) * v(k) * sn * sn;
  }
  /// b used by the last-stage terms after rescaling b -> b v_K^2.
  double last_stage_b() const { return b * v(stages() - 1) * v(stages() - 1); }

  /// (2 pi D_i / (gamma_{i-1} s_{i-1}))^2, the error incurred when stage k
  /// picks the wrong interval. Defined for k < K - 1.
  double failure_weight(int k) const {
    const double w = 2.0 * kPi * D[k] / (gamma_prev(k) * s_prev(k));
    return w * w;
  }
};

/// D_1 = 1/2; for i > 1 the tail sum over later intervals, capped so that
/// 2 pi D_i / (gamma_{i-1} s_{i-1}) never exceeds pi.
inline std::vector<double> compute_D(std::span<const int> s, std::span<const double> gamma) {
  const int K = static_cast<int>(s.size());
  std::vector<double> D;
  if (K < 2) return D;
  D.reserve(K - 1);
  D.push_back(0.5);
  // one-based indices below, to mirror the closed form
  auto S = [&](int i) { return static_cast<double>(s[i - 1]); };
  auto G = [&](int i) { return gamma[i - 1]; };
  for (int i = 2; i <= K - 1; ++i) {
    double bracket = 0.0;
    for (int k = i; k <= K - 2; ++k) bracket += 1.0 / (G(k) * S(k));
    bracket += 1.0 / (2.0 * S(K - 1) * G(K - 1));
    bracket += 1.0 / (2.0 * S(K));
    double d = 1.0 + G(i - 1) * S(i - 1) * bracket;
    if (2.0 * kPi * d / (G(i - 1) * S(i - 1)) >= kPi) d = G(i - 1) * S(i - 1) / 2.0;
    D.push_back(d);
  }
  return D;
}

inline std::vector<double> compute_D(const Schedule& sch) { return compute_D(sch.s, sch.gamma); }

/// Builds a feasible schedule or throws.
inline Schedule make_schedule(std::vector<int> s, double gamma1, double b = kDefaultB) {
  if (!(b > 0.0)) throw std::invalid_argument("schedule: b must be positive");
  auto seq = gamma_sequence(gamma1, s);
  if (!seq.feasible) {
    throw std::invalid_argument("schedule: gamma_1 = " + std::to_string(gamma1) +
                                " is infeasible at stage " + std::to_string(seq.failing_stage + 1));
  }
  Schedule sch;
  sch.s = std::move(s);
  sch.gamma = std::move(seq.gamma);
  sch.b = b;
  sch.D = compute_D(sch.s, sch.gamma);
  sch.visibility.assign(sch.s.size(), 1.0);
  return sch;
}

/// Bound on the squared phase error for real-valued photon counts, without
/// argument checks. Shared by the allocator's continuous relaxation.
inline double bound_value(const Schedule& sch, std::span<const double> n, double A = 1.0) {
  const int K = sch.stages();
  const double sK = sch.s[K - 1];
  const double bK = sch.last_stage_b();
  const double nK = n[K - 1];
  double total = A * kPi * kPi / (2.0 * bK * nK * sK * sK) +
                 3.0 * A * kPi * kPi / (4.0 * sK * sK) * std::exp(-bK * nK / 2.0);
  for (int k = 0; k < K - 1; ++k) {
    total += sch.failure_weight(k) * A * std::exp(-0.5 * n[k] * sch.log_confidence(k));
  }
  return total;
}

inline double error_upper_bound(const Schedule& sch, std::span<const int> n, double A = 1.0) {
  if (static_cast<int>(n.size()) != sch.stages())
    throw std::invalid_argument("error_upper_bound: one photon count per stage required");
  std::vector<double> nd(n.size());
  for (std::size_t k = 0; k < n.size(); ++k) {
    if (n[k] < kMinPhotons || n[k] % 2 != 0)
      throw std::invalid_argument("error_upper_bound: photon counts must be even and >= 2");
    nd[k] = n[k];
  }
  return bound_value(sch, nd, A);
}

}  // namespace hscale
