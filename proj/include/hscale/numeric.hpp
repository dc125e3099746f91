#pragma once

// Small one-dimensional solvers used by the schedule and allocator.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <utility>

namespace hscale::numeric {

/// Bisection for a boolean predicate that is false on [lo, x*) and true on
/// [x*, hi] (or the reverse when `rising` is false). Returns the bracket
/// endpoint on the `true` side after shrinking below `tol`.
template <class Pred>
double bisect_predicate(Pred&& pred, double lo, double hi, double tol, bool rising = true) {
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid) == rising) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return rising ? hi : lo;
}

/// Root of a monotone function f on [lo, hi] with f(lo) and f(hi) of
/// opposite sign. Stops when |f| < ftol or the bracket collapses.
template <class F>
double bisect_root(F&& f, double lo, double hi, double ftol, int max_iter = 500) {
  double flo = f(lo);
  double mid = lo;
  for (int it = 0; it < max_iter; ++it) {
    mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (std::abs(fm) < ftol || mid == lo || mid == hi) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return mid;
}

/// Newton iteration safeguarded by a bisection bracket [lo, hi], for an f
/// that changes sign on the bracket.
template <class F, class DF>
double safe_newton(F&& f, DF&& df, double lo, double hi, double xtol, int max_iter = 200) {
  double flo = f(lo);
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if ((fx < 0.0) == (flo < 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
    }
    const double d = df(x);
    double next = (d != 0.0) ? x - fx / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < xtol || hi - lo < xtol) return next;
    x = next;
  }
  return x;
}

struct Minimum {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

/// Golden-section search on [a, b] for a unimodal f.
template <class F>
Minimum golden_section(F&& f, double a, double b, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (std::abs(b - a) > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

/// Coarse grid scan to bracket the minimum, then golden-section refinement
/// between the neighbours of the best grid point.
template <class F>
Minimum grid_then_golden(F&& f, double lo, double hi, int grid_points, double tol) {
  Minimum best;
  int best_i = 0;
  const double step = (hi - lo) / (grid_points - 1);
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + step * i;
    const double v = f(x);
    if (v < best.value) {
      best = {x, v};
      best_i = i;
    }
  }
  if (!std::isfinite(best.value)) return best;
  const double a = lo + step * std::max(0, best_i - 1);
  const double b = lo + step * std::min(grid_points - 1, best_i + 1);
  Minimum refined = golden_section(f, a, b, tol);
  return refined.value <= best.value ? refined : best;
}

}  // namespace hscale::numeric
