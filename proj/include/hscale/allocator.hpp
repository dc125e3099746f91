#pragma once

// Resource allocation: split a total budget N = sum_i n_i s_i across the
// stages of a schedule so that the analytical error bound is minimal, pick
// gamma_1 per ladder, and decide at which budgets a longer ladder prefix
// takes over.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hscale/core.hpp"
#include "hscale/numeric.hpp"
#include "hscale/schedule.hpp"

namespace hscale {

/// Per-s visibility; multipliers not present default to 1.
using VisibilityMap = std::map<int, double>;

inline double visibility_for(const VisibilityMap& vis, int s) {
  auto it = vis.find(s);
  return it == vis.end() ? 1.0 : it->second;
}

class infeasible_budget : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ResourcePlan {
  Schedule schedule;
  std::vector<int> n;
  std::int64_t budget = 0;  // N requested
  std::int64_t n_used = 0;  // sum n_i s_i
  double bound = 0.0;
  double A = 1.0;

  // continuous relaxation diagnostics
  std::vector<double> continuous_n;
  double multiplier = 0.0;
  double budget_residual = 0.0;
};

struct AllocationOptions {
  int n_min = kMinPhotons;
  double A = 1.0;
};

inline Schedule rescale_for_visibility(Schedule sch, std::span<const double> v) {
  if (static_cast<int>(v.size()) != sch.stages())
    throw std::invalid_argument("rescale_for_visibility: one visibility per stage required");
  for (double x : v) check_visibility(x);
  sch.visibility.assign(v.begin(), v.end());
  return sch;
}

inline Schedule rescale_for_visibility(Schedule sch, const VisibilityMap& vis) {
  std::vector<double> v;
  for (int s : sch.s) v.push_back(visibility_for(vis, s));
  return rescale_for_visibility(std::move(sch), v);
}

namespace detail {

// -d/dn of the two last-stage terms.
inline double last_stage_slope(double n, double bK, double sK) {
  return kPi * kPi / (2.0 * bK * n * n * sK * sK) +
         3.0 * kPi * kPi * bK / (8.0 * sK * sK) * std::exp(-bK * n / 2.0);
}

inline double last_stage_slope_derivative(double n, double bK, double sK) {
  return -kPi * kPi / (bK * n * n * n * sK * sK) -
         3.0 * kPi * kPi * bK * bK / (16.0 * sK * sK) * std::exp(-bK * n / 2.0);
}

// Stationary photon counts of the Lagrangian at multiplier mu, clamped at
// n_min.
inline std::vector<double> stationary_counts(const Schedule& sch, double mu, double n_min) {
  const int K = sch.stages();
  std::vector<double> n(K, n_min);
  for (int k = 0; k < K - 1; ++k) {
    const double L = sch.log_confidence(k);
    const double a = sch.failure_weight(k);
    const double x = (2.0 / L) * std::log(a * L / (2.0 * mu * sch.s[k]));
    n[k] = std::max(n_min, x);
  }
  const double bK = sch.last_stage_b();
  const double sK = sch.s[K - 1];
  const double target = mu * sK;
  if (detail::last_stage_slope(n_min, bK, sK) > target) {
    auto f = [&](double x) { return last_stage_slope(x, bK, sK) - target; };
    auto df = [&](double x) { return last_stage_slope_derivative(x, bK, sK); };
    double hi = 2.0 * n_min;
    while (f(hi) > 0.0) hi *= 2.0;
    n[K - 1] = numeric::safe_newton(f, df, n_min, hi, 1e-12 * hi);
  }
  return n;
}

inline double spent(const Schedule& sch, std::span<const double> n) {
  double total = 0.0;
  for (int k = 0; k < sch.stages(); ++k) total += sch.s[k] * n[k];
  return total;
}

struct IntegerAllocation {
  std::vector<int> n;
  std::int64_t used = 0;
  double bound = std::numeric_limits<double>::infinity();
};

// Brings even counts within the budget by taking photons where the bound
// suffers least per photon freed (never from `locked`), then spends the
// leftover greedily by bound reduction per photon.
inline IntegerAllocation repair_and_fill(const Schedule& sch, std::vector<int> n, std::int64_t N,
                                         const AllocationOptions& opt, int locked) {
  const int K = sch.stages();
  IntegerAllocation out;
  std::int64_t used = 0;
  for (int k = 0; k < K; ++k) used += static_cast<std::int64_t>(n[k]) * sch.s[k];
  std::vector<double> nd(n.begin(), n.end());
  double current = bound_value(sch, nd, opt.A);
  while (used > N) {
    int pick = -1;
    double pick_cost = 0.0, pick_bound = 0.0;
    for (int k = 0; k < K; ++k) {
      if (k == locked || n[k] - 2 < opt.n_min) continue;
      nd[k] -= 2.0;
      const double b = bound_value(sch, nd, opt.A);
      nd[k] += 2.0;
      const double cost = (b - current) / (2.0 * sch.s[k]);
      if (pick < 0 || cost < pick_cost) {
        pick = k;
        pick_cost = cost;
        pick_bound = b;
      }
    }
    if (pick < 0) return out;  // cannot fit
    n[pick] -= 2;
    nd[pick] -= 2.0;
    used -= 2 * sch.s[pick];
    current = pick_bound;
  }
  for (;;) {
    int pick = -1;
    double pick_gain = 0.0, pick_bound = current;
    for (int k = 0; k < K; ++k) {
      if (used + 2 * sch.s[k] > N) continue;
      nd[k] += 2.0;
      const double b = bound_value(sch, nd, opt.A);
      nd[k] -= 2.0;
      const double gain = (current - b) / (2.0 * sch.s[k]);
      if (pick < 0 || gain > pick_gain) {
        pick = k;
        pick_gain = gain;
        pick_bound = b;
      }
    }
    if (pick < 0) break;
    n[pick] += 2;
    nd[pick] += 2.0;
    used += 2 * sch.s[pick];
    current = pick_bound;
  }
  out.n = std::move(n);
  out.used = used;
  out.bound = current;
  return out;
}

}  // namespace detail

inline std::int64_t minimum_budget(const Schedule& sch, int n_min = kMinPhotons) {
  std::int64_t total = 0;
  for (int s : sch.s) total += static_cast<std::int64_t>(s) * n_min;
  return total;
}

/// Continuous Lagrangian solution by bisection on log(mu), then rounding down
/// to even counts and greedy spending of the leftover budget, refined by
/// round-up combinations and single-stage exchanges.
inline ResourcePlan optimize_allocation(const Schedule& sch, std::int64_t N, const AllocationOptions& opt = {}) {
  const int K = sch.stages();
  if (K < 1) throw std::invalid_argument("optimize_allocation: empty schedule");
  if (opt.n_min < 2 || opt.n_min % 2 != 0) throw std::invalid_argument("optimize_allocation: n_min must be even and >= 2");
  if (N < minimum_budget(sch, opt.n_min)) {
    throw infeasible_budget("budget N = " + std::to_string(N) + " cannot fund " + std::to_string(opt.n_min) +
                            " photons on every stage (needs " + std::to_string(minimum_budget(sch, opt.n_min)) + ")");
  }
  const double n_min = opt.n_min;
  const double target = static_cast<double>(N);

  ResourcePlan plan;
  plan.schedule = sch;
  plan.budget = N;
  plan.A = opt.A;

  if (K == 1) {
    plan.continuous_n = {target};
  } else {
    auto residual = [&](double log_mu) {
      return detail::spent(sch, detail::stationary_counts(sch, std::exp(log_mu), n_min)) - target;
    };
    // spent() decreases with mu; bracket the root by doubling the step
    double lo = 0.0, hi = 0.0;
    double step = 1.0;
    if (residual(0.0) > 0.0) {
      while (residual(hi) > 0.0) {
        lo = hi;
        hi += step;
        step *= 2.0;
      }
    } else {
      while (residual(lo) < 0.0 && lo > -700.0) {
        hi = lo;
        lo -= step;
        step *= 2.0;
      }
    }
    const double log_mu = numeric::bisect_root(residual, lo, hi, 1e-10, 400);
    plan.multiplier = std::exp(log_mu);
    plan.continuous_n = detail::stationary_counts(sch, plan.multiplier, n_min);
    plan.budget_residual = std::abs(detail::spent(sch, plan.continuous_n) - target);
  }

  std::vector<int> floor_n(K);
  for (int k = 0; k < K; ++k)
    floor_n[k] = std::max(opt.n_min, 2 * static_cast<int>(std::floor(plan.continuous_n[k] / 2.0)));
  detail::IntegerAllocation best = detail::repair_and_fill(sch, floor_n, N, opt, -1);

  // Rounding down and filling greedily can strand photons when a stage is
  // expensive, so round every combination of stages up as well, then try
  // single-stage exchanges until none helps.
  if (K > 1 && K <= 8) {
    for (unsigned mask = 1; mask < (1u << K); ++mask) {
      std::vector<int> n = floor_n;
      for (int k = 0; k < K; ++k)
        if (mask & (1u << k)) n[k] += 2;
      const auto cand = detail::repair_and_fill(sch, n, N, opt, -1);
      if (cand.bound < best.bound) best = cand;
    }
  }
  for (bool improved = K > 1; improved;) {
    improved = false;
    for (int k = 0; k < K; ++k) {
      std::vector<int> n = best.n;
      n[k] += 2;
      const auto cand = detail::repair_and_fill(sch, n, N, opt, k);
      if (cand.bound < best.bound * (1.0 - 1e-12)) {
        best = cand;
        improved = true;
      }
    }
  }
  plan.n = best.n;
  const std::int64_t used = best.used;
  const double current = best.bound;
  plan.n_used = used;
  plan.bound = current;
  return plan;
}

/// Asymptotic overhead of the localisation stages,
/// sum_{i<K} s_i / (gamma_{i-1}^2 log C_i), with visibility-rescaled C_i.
inline double strategy_merit(std::span<const int> ladder, double gamma1, double b = kDefaultB,
                             const VisibilityMap& vis = {}) {
  auto seq = gamma_sequence(gamma1, ladder);
  if (!seq.feasible) return std::numeric_limits<double>::infinity();
  double merit = 0.0;
  for (std::size_t k = 0; k + 1 < ladder.size(); ++k) {
    const double g_prev = k == 0 ? 1.0 : seq.gamma[k - 1];
    const double v = visibility_for(vis, ladder[k]);
    const double log_c = v * v * std::log(confidence_factor(seq.gamma[k], b));
    merit += ladder[k] / (g_prev * g_prev * log_c);
  }
  return merit;
}

struct StrategyScore {
  std::vector<int> ladder;
  double merit = std::numeric_limits<double>::infinity();
  double gamma1 = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
};

/// gamma_1 minimising the merit: 200-point grid over the feasible range, then
/// golden-section refinement to 1e-6.
inline StrategyScore optimal_gamma1(std::span<const int> ladder, double b = kDefaultB, const VisibilityMap& vis = {}) {
  StrategyScore score;
  score.ladder.assign(ladder.begin(), ladder.end());
  const auto range = feasible_gamma1_range(ladder);
  if (range.empty) return score;
  score.feasible = true;
  if (ladder.size() == 1) {
    score.gamma1 = 2.0;  // unused by a single stage
    score.merit = 0.0;
    return score;
  }
  const double lo = range.inner_lower();
  const double hi = range.unbounded() ? 100.0 * range.lower : range.inner_upper();
  auto f = [&](double g) { return strategy_merit(ladder, g, b, vis); };
  const auto m = numeric::grid_then_golden(f, lo, hi, 200, 1e-6);
  score.gamma1 = m.x;
  score.merit = m.value;
  return score;
}

/// Ranks ladders by merit (ascending). Ladders with no feasible gamma_1 go
/// last with feasible = false.
inline std::vector<StrategyScore> compare_strategies(const std::vector<std::vector<int>>& ladders,
                                                     double b = kDefaultB, const VisibilityMap& vis = {}) {
  std::vector<StrategyScore> out;
  out.reserve(ladders.size());
  for (const auto& l : ladders) out.push_back(optimal_gamma1(l, b, vis));
  std::stable_sort(out.begin(), out.end(), [](const StrategyScore& x, const StrategyScore& y) {
    if (x.feasible != y.feasible) return x.feasible;
    return x.merit < y.merit;
  });
  return out;
}

/// All ascending subsets of `available` that contain 1 and end at `top`.
inline std::vector<std::vector<int>> candidate_ladders(std::vector<int> available, int top) {
  std::sort(available.begin(), available.end());
  available.erase(std::unique(available.begin(), available.end()), available.end());
  std::vector<int> middle;
  for (int s : available)
    if (s > 1 && s < top) middle.push_back(s);
  std::vector<std::vector<int>> out;
  const std::size_t m = middle.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    std::vector<int> l{1};
    for (std::size_t j = 0; j < m; ++j)
      if (mask & (std::uint64_t{1} << j)) l.push_back(middle[j]);
    if (top > 1) l.push_back(top);
    out.push_back(std::move(l));
  }
  return out;
}

/// A ladder together with the nested prefixes used as the budget grows.
struct StrategyCatalog {
  std::vector<int> available_s;  // ascending, starts at 1
  double b = kDefaultB;
  VisibilityMap visibility;
  std::vector<Schedule> prefixes;             // prefixes[p] has p + 1 stages
  std::vector<std::int64_t> upgrade_points;   // min N at which prefix p is used

  static constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

  /// Longest prefix whose upgrade point has been reached; -1 if none.
  int select(std::int64_t N) const {
    int chosen = -1;
    for (std::size_t p = 0; p < upgrade_points.size(); ++p)
      if (upgrade_points[p] <= N) chosen = static_cast<int>(p);
    return chosen;
  }

  std::string strategy_id(int p) const {
    std::string id = "s";
    for (int k = 0; k <= p; ++k) id += (k ? "-" : "") + std::to_string(available_s[k]);
    return id;
  }
};

/// Catalog with merit-optimal gamma_1 for every nested prefix of `ladder`.
inline StrategyCatalog make_catalog(std::vector<int> ladder, double b = kDefaultB, const VisibilityMap& vis = {}) {
  validate_ladder(ladder);
  StrategyCatalog cat;
  cat.available_s = ladder;
  cat.b = b;
  cat.visibility = vis;
  for (std::size_t p = 1; p <= ladder.size(); ++p) {
    std::vector<int> prefix(ladder.begin(), ladder.begin() + p);
    const auto score = optimal_gamma1(prefix, b, vis);
    if (!score.feasible) throw std::invalid_argument("catalog: ladder prefix has no feasible gamma_1");
    cat.prefixes.push_back(rescale_for_visibility(make_schedule(prefix, score.gamma1, b), vis));
  }
  return cat;
}

/// Optimised bound of a schedule at budget N, or +inf when N cannot fund it.
inline double optimized_bound(const Schedule& sch, std::int64_t N, const AllocationOptions& opt = {}) {
  if (N < minimum_budget(sch, opt.n_min)) return std::numeric_limits<double>::infinity();
  return optimize_allocation(sch, N, opt).bound;
}

/// Fills upgrade_points from the optimised bounds on an ascending N grid: a
/// longer prefix is adopted at the first N where it strictly beats every
/// shorter one.
inline StrategyCatalog upgrade_points(StrategyCatalog cat, std::span<const std::int64_t> grid,
                                      const AllocationOptions& opt = {}) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("upgrade_points: grid must be ascending");
  const std::size_t P = cat.prefixes.size();
  cat.upgrade_points.assign(P, StrategyCatalog::kNever);
  for (std::int64_t N : grid) {
    if (N >= minimum_budget(cat.prefixes[0], opt.n_min)) {
      cat.upgrade_points[0] = std::min(cat.upgrade_points[0], N);
      break;
    }
  }
  for (std::size_t p = 1; p < P; ++p) {
    if (cat.upgrade_points[p - 1] == StrategyCatalog::kNever) break;
    for (std::int64_t N : grid) {
      if (N < cat.upgrade_points[p - 1]) continue;
      const double mine = optimized_bound(cat.prefixes[p], N, opt);
      if (!std::isfinite(mine)) continue;
      bool wins = true;
      for (std::size_t q = 0; q < p && wins; ++q) wins = mine < optimized_bound(cat.prefixes[q], N, opt);
      if (wins) {
        cat.upgrade_points[p] = N;
        break;
      }
    }
  }
  return cat;
}

/// Plan for budget N using the prefix selected by the catalog.
inline ResourcePlan plan_for_budget(const StrategyCatalog& cat, std::int64_t N, const AllocationOptions& opt = {}) {
  const int p = cat.select(N);
  if (p < 0) throw infeasible_budget("budget N = " + std::to_string(N) + " is below every upgrade point");
  return optimize_allocation(cat.prefixes[p], N, opt);
}

}  // namespace hscale
