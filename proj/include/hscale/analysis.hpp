#pragma once

// Precision statistics and scaling fits: circular RMSE, angle averages,
// error bars, weighted power-law fits C / N^alpha, batch scans, outlier
// removal and the variance gain over the standard quantum limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "hscale/core.hpp"

namespace hscale {

inline double sql_rmse(double N) { return 0.5 / std::sqrt(N); }
inline double hl_rmse(double N) { return kPi / (2.0 * N); }

inline double rmse_from_distances(std::span<const double> d) {
  if (d.empty()) throw std::invalid_argument("rmse: need at least one run");
  double sum = 0.0;
  for (double x : d) sum += x * x;
  return std::sqrt(sum / static_cast<double>(d.size()));
}

inline double rmse(std::span<const double> estimates, double theta_true) {
  std::vector<double> d;
  d.reserve(estimates.size());
  for (double e : estimates) d.push_back(circular_distance(e, theta_true));
  return rmse_from_distances(d);
}

inline double angle_averaged_rmse(std::span<const double> per_angle_rmse) {
  if (per_angle_rmse.empty()) throw std::invalid_argument("angle_averaged_rmse: need at least one angle");
  return std::accumulate(per_angle_rmse.begin(), per_angle_rmse.end(), 0.0) /
         static_cast<double>(per_angle_rmse.size());
}

struct ErrorBar {
  double value = 0.0;
  bool degenerate = false;  // every distance was zero
};

/// Variance contribution of one angle: half the sample variance of the
/// squared distances over sqrt(sum of squared distances).
inline double rmse_variance_term(std::span<const double> d) {
  const std::size_t R = d.size();
  if (R < 2) throw std::invalid_argument("error_bar: need at least two runs per angle");
  double sum_sq = 0.0;
  for (double x : d) sum_sq += x * x;
  const double mean = sum_sq / static_cast<double>(R);
  if (sum_sq == 0.0) return 0.0;
  double var = 0.0;
  for (double x : d) var += (x * x - mean) * (x * x - mean);
  var /= static_cast<double>(R - 1);
  return 0.5 * var / std::sqrt(sum_sq);
}

/// delta = (1/J) sqrt(sum_j Var_j). `distances[j]` holds the R circular
/// distances of angle j.
inline ErrorBar error_bar(const std::vector<std::vector<double>>& distances) {
  if (distances.empty()) throw std::invalid_argument("error_bar: need at least one angle");
  double total = 0.0;
  bool all_zero = true;
  for (const auto& d : distances) {
    total += rmse_variance_term(d);
    all_zero = all_zero && std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
  }
  if (all_zero) return {0.0, true};
  return {std::sqrt(total) / static_cast<double>(distances.size()), false};
}

/// 10 log10(SQL^2 / rmse^2): variance gain over the standard quantum limit.
inline double db_below_sql(double rmse_value, double N) {
  if (!(rmse_value > 0.0)) throw std::invalid_argument("db_below_sql: rmse must be positive");
  const double sql = sql_rmse(N);
  return 10.0 * std::log10(sql * sql / (rmse_value * rmse_value));
}

struct ScalingPoint {
  double N = 0.0;
  double rmse = 0.0;
  double sigma = 0.0;  // error bar on rmse; <= 0 means unweighted
};

struct ScalingFit {
  double alpha = 0.0;
  double alpha_sigma = 0.0;
  double C = 0.0;
  double N_lo = 0.0;
  double N_hi = 0.0;
  double r_squared = 0.0;
  int points = 0;
  double chi2_reduced = 0.0;
  std::vector<double> residuals;  // log-domain, in window order
};

struct FitOptions {
  // Scale the parameter covariance by the reduced chi-square, so the
  // standard error reflects the observed scatter as well as the error bars.
  bool scale_by_chi2 = true;
};

/// Weighted least squares of log(rmse) = log C - alpha log N over the points
/// with N in [N_lo, N_hi]. Log-domain sigma is sigma / rmse.
inline ScalingFit fit_power_law(std::span<const ScalingPoint> points, double N_lo, double N_hi,
                                const FitOptions& opt = {}) {
  std::vector<const ScalingPoint*> in;
  for (const auto& p : points)
    if (p.N >= N_lo && p.N <= N_hi) in.push_back(&p);
  if (in.size() < 3) throw std::invalid_argument("fit_power_law: need at least 3 points in the window");
  const bool weighted = std::all_of(in.begin(), in.end(), [](const ScalingPoint* p) { return p->sigma > 0.0; });

  const std::size_t n = in.size();
  std::vector<double> x(n), y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in[i]->rmse > 0.0) || !(in[i]->N > 0.0)) throw std::invalid_argument("fit_power_law: rmse and N must be positive");
    x[i] = std::log(in[i]->N);
    y[i] = std::log(in[i]->rmse);
    const double s_log = in[i]->sigma / in[i]->rmse;
    w[i] = weighted ? 1.0 / (s_log * s_log) : 1.0;
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - xm) * (x[i] - xm);
    sxy += w[i] * (x[i] - xm) * (y[i] - ym);
    syy += w[i] * (y[i] - ym) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_power_law: window needs distinct N values");
  const double slope = sxy / sxx;
  const double intercept = ym - slope * xm;

  ScalingFit fit;
  fit.alpha = -slope;
  fit.C = std::exp(intercept);
  fit.N_lo = in.front()->N;
  fit.N_hi = in.back()->N;
  fit.points = static_cast<int>(n);
  double chi2 = 0.0;
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fit.residuals[i] = y[i] - (intercept + slope * x[i]);
    chi2 += w[i] * fit.residuals[i] * fit.residuals[i];
  }
  fit.chi2_reduced = chi2 / static_cast<double>(n - 2);
  double var_slope = 1.0 / sxx;
  if (opt.scale_by_chi2 || !weighted) var_slope *= fit.chi2_reduced;
  fit.alpha_sigma = std::sqrt(var_slope);
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - chi2 / syy, 0.0, 1.0) : 1.0;
  return fit;
}

inline ScalingFit fit_power_law(std::span<const ScalingPoint> points, const FitOptions& opt = {}) {
  return fit_power_law(points, -INFINITY, INFINITY, opt);
}

/// Cumulative fits: starting at the first point with N >= start_N, fit the
/// first batch_size points, then extend the window by batch_size points at a
/// time up to end_N. A trailing partial batch is fitted as well.
inline std::vector<ScalingFit> batch_scan(std::span<const ScalingPoint> points, int batch_size, double start_N,
                                          double end_N = INFINITY, const FitOptions& opt = {}) {
  if (batch_size < 1) throw std::invalid_argument("batch_scan: batch size must be positive");
  std::vector<ScalingPoint> window;
  for (const auto& p : points)
    if (p.N >= start_N && p.N <= end_N) window.push_back(p);
  std::vector<ScalingFit> fits;
  for (std::size_t end = batch_size; ; end += batch_size) {
    const std::size_t stop = std::min(end, window.size());
    if (stop >= 3) fits.push_back(fit_power_law(std::span(window).first(stop), opt));
    if (stop == window.size()) break;
  }
  return fits;
}

/// Drops points whose standardised log residual exceeds k and refits once.
/// Residuals are weighted by the error bars and standardised with a robust
/// scale (1.4826 * median absolute deviation), falling back to their RMS,
/// with a small floor.
struct OutlierResult {
  std::vector<ScalingPoint> kept;
  std::vector<ScalingPoint> removed;
  ScalingFit refit;
};

inline OutlierResult remove_outliers(std::span<const ScalingPoint> points, const ScalingFit& fit, double k = 4.0,
                                     const FitOptions& opt = {}) {
  std::vector<ScalingPoint> in;
  for (const auto& p : points)
    if (p.N >= fit.N_lo && p.N <= fit.N_hi) in.push_back(p);
  const bool weighted = std::all_of(in.begin(), in.end(), [](const ScalingPoint& p) { return p.sigma > 0.0; });
  std::vector<double> e(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double pred = std::log(fit.C) - fit.alpha * std::log(in[i].N);
    const double r = std::log(in[i].rmse) - pred;
    e[i] = weighted ? r / (in[i].sigma / in[i].rmse) : r;
  }
  std::vector<double> sorted = e;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted[sorted.size() / 2];
  std::vector<double> dev;
  for (double x : e) dev.push_back(std::abs(x - med));
  std::sort(dev.begin(), dev.end());
  double scale = 1.4826 * dev[dev.size() / 2];
  if (!(scale > 0.0)) {
    double ss = 0.0;
    for (double x : e) ss += x * x;
    scale = std::sqrt(ss / static_cast<double>(e.size()));
  }
  // rounding noise of an exact fit is not scatter
  scale = std::max(scale, 1e-8);

  OutlierResult out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (scale > 0.0 && std::abs(e[i] - med) / scale > k) {
      out.removed.push_back(in[i]);
    } else {
      out.kept.push_back(in[i]);
    }
  }
  out.refit = out.removed.empty() || out.kept.size() < 3 ? fit : fit_power_law(out.kept, opt);
  return out;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace hscale
