#pragma once

// Monte Carlo campaigns over a budget grid: for every N pick the ladder
// prefix, plan the allocation, run R protocol repetitions at each of J true
// angles and aggregate circular RMSE, error bars and dB below the SQL.
//
// Work is split into (grid point, angle) blocks that may run on several
// threads. Every run draws from its own substream, and aggregation happens
// in grid/angle/run order after all blocks finish, so results do not depend
// on the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "hscale/allocator.hpp"
#include "hscale/analysis.hpp"
#include "hscale/estimator.hpp"
#include "hscale/simulator.hpp"

namespace hscale {

enum class UpgradeMode { bound, simulation };

struct GridSpec {
  std::int64_t min = 2;
  std::int64_t max = 30000;
  int points = 150;
  bool densify = true;            // add points just above each upgrade point
  std::vector<std::int64_t> explicit_points;  // overrides min/max/points when set
};

struct AnalysisConfig {
  int batch_size = 10;
  double outlier_k = 4.0;
  bool remove_outliers = true;
  std::int64_t global_start_N = 0;  // 0: first N of the grid
  std::int64_t n0 = 0;              // 0: first N that uses more than one stage
  int min_region_points = 8;
  double hl_threshold = 0.75;       // alpha above this approaches the HL
  bool scale_by_chi2 = true;
};

struct CampaignConfig {
  std::vector<int> ladder{1, 2, 11, 51};
  VisibilityMap visibilities;
  double b = kDefaultB;
  double A = 1.0;
  int n_min = kMinPhotons;
  GridSpec grid;
  int runs = 200;                 // R
  int angle_count = 17;           // J, used when `angles` is empty
  std::vector<double> angles;     // true rotation angles in [0, pi)
  std::uint64_t seed = 20211;
  UpgradeMode upgrade_mode = UpgradeMode::bound;
  int calibration_runs = 40;      // per angle, simulation upgrade mode only
  double eta = 1.0;
  AnalysisConfig analysis;

  std::vector<double> resolved_angles() const {
    if (!angles.empty()) return angles;
    std::vector<double> out;
    for (int j = 0; j < angle_count; ++j) out.push_back((j + 0.5) * kPi / angle_count);
    return out;
  }

  void validate() const {
    validate_ladder(ladder);
    for (const auto& [s, v] : visibilities) check_visibility(v);
    if (runs < 2) throw std::invalid_argument("campaign: at least two runs per angle required");
    if (angles.empty() && angle_count < 1) throw std::invalid_argument("campaign: at least one angle required");
    for (double a : angles)
      if (!(a >= 0.0 && a < kPi)) throw std::invalid_argument("campaign: angles must lie in [0, pi)");
    if (!(b > 0.0)) throw std::invalid_argument("campaign: b must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("campaign: eta must lie in (0, 1]");
    const auto& g = grid.explicit_points;
    if (!g.empty()) {
      for (std::size_t i = 1; i < g.size(); ++i)
        if (g[i] <= g[i - 1]) throw std::invalid_argument("campaign: grid must be strictly ascending");
    } else if (grid.min < 1 || grid.max < grid.min || grid.points < 1) {
      throw std::invalid_argument("campaign: invalid grid range");
    }
  }
};

/// Budgets on a geometric grid rounded to even values, plus a geometric
/// run of extra points in [u, 2u] after every upgrade point u.
inline std::vector<std::int64_t> make_grid(const GridSpec& gs, std::span<const std::int64_t> upgrades = {}) {
  if (!gs.explicit_points.empty()) return gs.explicit_points;
  auto even = [](double x) { return std::max<std::int64_t>(2, 2 * static_cast<std::int64_t>(std::llround(x / 2.0))); };
  std::vector<std::int64_t> extra;
  constexpr int kPerUpgrade = 8;
  if (gs.densify) {
    for (std::int64_t u : upgrades) {
      if (u <= gs.min || u > gs.max) continue;
      for (int i = 0; i < kPerUpgrade; ++i) {
        const std::int64_t N = std::min(gs.max, even(u * std::pow(2.0, i / double(kPerUpgrade))));
        extra.push_back(std::max(N, u));
      }
    }
  }
  std::vector<std::int64_t> grid;
  int base = std::max(2, gs.points - static_cast<int>(extra.size()));
  // grow the base until rounding/deduplication leaves the requested size
  for (;; ++base) {
    grid = extra;
    const double ratio = std::log(double(gs.max) / double(gs.min));
    for (int i = 0; i < base; ++i) {
      const double x = gs.min * std::exp(ratio * i / std::max(1, base - 1));
      grid.push_back(std::clamp(even(x), gs.min, gs.max));
    }
    grid.push_back(gs.min);
    grid.push_back(gs.max);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (static_cast<int>(grid.size()) >= gs.points || base > 20 * gs.points) break;
  }
  return grid;
}

struct RunRecord {
  int grid_index = 0;
  std::int64_t N = 0;
  int angle_index = 0;
  int run_index = 0;
  double theta_hat = 0.0;
  double distance = 0.0;
  int first_failed_stage = -1;  // zero-based, -1 when every interval held

  auto key() const { return std::make_tuple(grid_index, angle_index, run_index); }
};

struct AngleRow {
  std::int64_t N = 0;
  std::string strategy_id;
  int angle_index = 0;
  double theta = 0.0;
  double rmse = 0.0;
  double error_bar = 0.0;
  double db_below_sql = 0.0;
};

struct AggregateRow {
  std::int64_t N = 0;
  std::string strategy_id;
  double rmse = 0.0;
  double error_bar = 0.0;
  bool degenerate = false;
  double db_below_sql = 0.0;
};

struct CampaignResult {
  CampaignConfig config;
  StrategyCatalog catalog;
  std::vector<std::int64_t> grid;
  std::vector<ResourcePlan> plans;
  std::vector<std::string> strategy_ids;
  std::vector<double> angles;
  std::vector<RunRecord> runs;       // grid-major, then angle, then run
  std::vector<AngleRow> per_angle;   // grid-major, then angle
  std::vector<AggregateRow> rows;    // one per grid point
};

/// Simulation-calibrated upgrade points: a longer prefix is adopted at the
/// first grid budget where its simulated angle-averaged RMSE beats every
/// shorter prefix.
inline StrategyCatalog upgrade_points_by_simulation(StrategyCatalog cat, std::span<const std::int64_t> grid,
                                                    int runs, int angle_count, std::uint64_t seed,
                                                    const AllocationOptions& opt = {}) {
  auto simulated_rmse = [&](const Schedule& sch, std::int64_t N) {
    if (N < minimum_budget(sch, opt.n_min)) return std::numeric_limits<double>::infinity();
    const auto plan = optimize_allocation(sch, N, opt);
    double total = 0.0;
    for (int j = 0; j < angle_count; ++j) {
      const double theta = (j + 0.5) * kPi / angle_count;
      std::vector<double> d;
      for (int r = 0; r < runs; ++r) {
        SimConfig cfg{theta, cat.visibility, seed, static_cast<std::uint64_t>(N), static_cast<std::uint64_t>(j),
                      static_cast<std::uint64_t>(r)};
        d.push_back(circular_distance(run_protocol_once(plan, cfg).final_theta, theta));
      }
      total += rmse_from_distances(d);
    }
    return total / angle_count;
  };
  const std::size_t P = cat.prefixes.size();
  cat.upgrade_points.assign(P, StrategyCatalog::kNever);
  for (std::int64_t N : grid) {
    if (N >= minimum_budget(cat.prefixes[0], opt.n_min)) {
      cat.upgrade_points[0] = N;
      break;
    }
  }
  for (std::size_t p = 1; p < P; ++p) {
    if (cat.upgrade_points[p - 1] == StrategyCatalog::kNever) break;
    for (std::int64_t N : grid) {
      if (N < cat.upgrade_points[p - 1]) continue;
      const double mine = simulated_rmse(cat.prefixes[p], N);
      if (!std::isfinite(mine)) continue;
      bool wins = true;
      for (std::size_t q = 0; q < p && wins; ++q) wins = mine < simulated_rmse(cat.prefixes[q], N);
      if (wins) {
        cat.upgrade_points[p] = N;
        break;
      }
    }
  }
  return cat;
}

/// Catalog with upgrade points, and the budget grid densified around them.
inline std::pair<StrategyCatalog, std::vector<std::int64_t>> prepare_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  const AllocationOptions opt{cfg.n_min, cfg.A};
  StrategyCatalog cat = make_catalog(cfg.ladder, cfg.b, cfg.visibilities);
  const std::int64_t lo = cfg.grid.explicit_points.empty() ? cfg.grid.min : cfg.grid.explicit_points.front();
  const std::int64_t hi = cfg.grid.explicit_points.empty() ? cfg.grid.max : cfg.grid.explicit_points.back();
  std::vector<std::int64_t> planning;
  for (std::int64_t N = std::max<std::int64_t>(2, lo - lo % 2); N <= hi; N += 2) planning.push_back(N);
  if (cfg.upgrade_mode == UpgradeMode::bound) {
    cat = upgrade_points(std::move(cat), planning, opt);
    return {cat, make_grid(cfg.grid, cat.upgrade_points)};
  }
  // simulation calibration scans the undensified grid
  GridSpec coarse = cfg.grid;
  coarse.densify = false;
  const auto candidates = make_grid(coarse);
  cat = upgrade_points_by_simulation(std::move(cat), candidates, cfg.calibration_runs, std::min(cfg.angle_count, 8),
                                     cfg.seed ^ 0xC0FFEEULL, opt);
  return {cat, make_grid(cfg.grid, cat.upgrade_points)};
}

using CompletedRuns = std::map<std::tuple<int, int, int>, RunRecord>;

struct ProgressSink {
  virtual ~ProgressSink() = default;
  // called once per finished (grid point, angle) block, possibly from a worker thread
  virtual void block_done(std::span<const RunRecord> block) = 0;
};

inline int first_failure(const std::vector<bool>& failed) {
  for (std::size_t k = 0; k < failed.size(); ++k)
    if (failed[k]) return static_cast<int>(k);
  return -1;
}

/// Runs (or completes, given `completed`) a campaign. Deterministic in
/// (config, seed) for any `jobs`.
inline CampaignResult run_campaign(const CampaignConfig& cfg, int jobs = 1, const CompletedRuns* completed = nullptr,
                                   ProgressSink* sink = nullptr) {
  CampaignResult res;
  res.config = cfg;
  std::tie(res.catalog, res.grid) = prepare_campaign(cfg);
  res.angles = cfg.resolved_angles();
  const AllocationOptions opt{cfg.n_min, cfg.A};

  std::vector<int> grid_active;  // grid indices with a usable prefix
  for (std::size_t g = 0; g < res.grid.size(); ++g) {
    const int p = res.catalog.select(res.grid[g]);
    if (p < 0) continue;
    grid_active.push_back(static_cast<int>(g));
  }
  res.plans.reserve(grid_active.size());
  for (int g : grid_active) {
    const int p = res.catalog.select(res.grid[g]);
    res.plans.push_back(optimize_allocation(res.catalog.prefixes[p], res.grid[g], opt));
    res.strategy_ids.push_back(res.catalog.strategy_id(p));
  }

  const int J = static_cast<int>(res.angles.size());
  const int R = cfg.runs;
  const std::size_t blocks = grid_active.size() * J;
  res.runs.assign(blocks * R, RunRecord{});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < blocks; b = next++) {
      const std::size_t gi = b / J;
      const int j = static_cast<int>(b % J);
      const int g = grid_active[gi];
      const ResourcePlan& plan = res.plans[gi];
      bool fresh = false;
      for (int r = 0; r < R; ++r) {
        RunRecord& rec = res.runs[b * R + r];
        if (completed) {
          auto it = completed->find({g, j, r});
          if (it != completed->end()) {
            rec = it->second;
            continue;
          }
        }
        fresh = true;
        SimConfig sc;
        sc.theta_true = res.angles[j];
        sc.visibilities = cfg.visibilities;
        sc.seed = cfg.seed;
        sc.grid_index = static_cast<std::uint64_t>(g);
        sc.angle_index = static_cast<std::uint64_t>(j);
        sc.run_index = static_cast<std::uint64_t>(r);
        sc.eta = cfg.eta;
        const auto run = run_protocol_once(plan, sc);
        rec.grid_index = g;
        rec.N = res.grid[g];
        rec.angle_index = j;
        rec.run_index = r;
        rec.theta_hat = run.final_theta;
        rec.distance = circular_distance(run.final_theta, res.angles[j]);
        rec.first_failed_stage = first_failure(stage_failure_flag(run, phase_from_rotation(res.angles[j])));
      }
      if (sink && fresh) sink->block_done(std::span(res.runs).subspan(b * R, R));
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t gi = 0; gi < grid_active.size(); ++gi) {
    const std::int64_t N = res.grid[grid_active[gi]];
    std::vector<std::vector<double>> distances(J);
    std::vector<double> per_angle_rmse(J);
    for (int j = 0; j < J; ++j) {
      for (int r = 0; r < R; ++r) {
        RunRecord& rec = res.runs[(gi * J + j) * R + r];
        // recompute from the estimate so resumed and fresh runs agree bit for bit
        rec.distance = circular_distance(rec.theta_hat, res.angles[j]);
        distances[j].push_back(rec.distance);
      }
      per_angle_rmse[j] = rmse_from_distances(distances[j]);
      const ErrorBar eb = error_bar({distances[j]});
      res.per_angle.push_back({N, res.strategy_ids[gi], j, res.angles[j], per_angle_rmse[j], eb.value,
                               per_angle_rmse[j] > 0.0 ? db_below_sql(per_angle_rmse[j], double(N)) : INFINITY});
    }
    const double avg = angle_averaged_rmse(per_angle_rmse);
    const ErrorBar eb = error_bar(distances);
    res.rows.push_back({N, res.strategy_ids[gi], avg, eb.value, eb.degenerate,
                        avg > 0.0 ? db_below_sql(avg, double(N)) : INFINITY});
  }
  return res;
}

/// Region of consecutive grid points that share a strategy, or a
/// sub-region of one.
struct RegionFit {
  std::string strategy_id;
  ScalingFit fit;
  std::vector<ScalingFit> batches;   // cumulative batch fits inside the region
  std::vector<double> removed_N;     // outliers dropped before fitting
  bool hl_compatible = false;        // |alpha - 1| <= 3 sigma
  bool sql_compatible = false;       // |alpha - 0.5| <= 3 sigma
};

struct AnalysisReport {
  std::vector<ScalingFit> global_from_start;  // cumulative batches from the first N
  std::vector<ScalingFit> global_from_n0;     // cumulative batches from N0
  ScalingFit full_from_start;
  ScalingFit full_from_n0;
  std::int64_t n0 = 0;
  std::vector<RegionFit> regions;
  double best_db = -INFINITY;
  std::int64_t best_db_N = 0;
};

inline std::vector<ScalingPoint> scaling_points(std::span<const AggregateRow> rows) {
  std::vector<ScalingPoint> pts;
  for (const auto& r : rows) pts.push_back({double(r.N), r.rmse, r.error_bar});
  return pts;
}

namespace detail {

inline RegionFit fit_region(std::span<const ScalingPoint> pts, const std::string& id, const AnalysisConfig& cfg) {
  const FitOptions fo{cfg.scale_by_chi2};
  RegionFit rf;
  rf.strategy_id = id;
  std::vector<ScalingPoint> kept(pts.begin(), pts.end());
  rf.fit = fit_power_law(kept, fo);
  if (cfg.remove_outliers) {
    auto cleaned = remove_outliers(kept, rf.fit, cfg.outlier_k, fo);
    for (const auto& p : cleaned.removed) rf.removed_N.push_back(p.N);
    if (cleaned.kept.size() >= 3) {
      kept = std::move(cleaned.kept);
      rf.fit = cleaned.refit;
    }
  }
  rf.batches = batch_scan(kept, cfg.batch_size, kept.front().N, kept.back().N, fo);
  rf.hl_compatible = std::abs(rf.fit.alpha - 1.0) <= 3.0 * rf.fit.alpha_sigma;
  rf.sql_compatible = std::abs(rf.fit.alpha - 0.5) <= 3.0 * rf.fit.alpha_sigma;
  return rf;
}

}  // namespace detail

/// Global and local scaling analysis of the aggregate rows.
///
/// Local regions follow the strategy in use. A multi-stage region is split
/// in two when it opens with a stretch whose fitted alpha exceeds the HL
/// threshold: the longest such onset window (at least min_region_points,
/// leaving as many after it) becomes its own region.
inline AnalysisReport analyze_rows(std::span<const AggregateRow> rows, const AnalysisConfig& cfg = {}) {
  if (rows.size() < 3) throw std::invalid_argument("analyze: need at least 3 aggregate rows");
  const FitOptions fo{cfg.scale_by_chi2};
  AnalysisReport rep;
  const auto pts = scaling_points(rows);

  const double start = cfg.global_start_N > 0 ? double(cfg.global_start_N) : pts.front().N;
  rep.global_from_start = batch_scan(pts, cfg.batch_size, start, INFINITY, fo);
  rep.full_from_start = fit_power_law(pts, start, INFINITY, fo);

  rep.n0 = cfg.n0;
  if (rep.n0 == 0) {
    for (const auto& r : rows) {
      if (r.strategy_id.find('-') != std::string::npos) {
        rep.n0 = r.N;
        break;
      }
    }
  }
  if (rep.n0 > 0) {
    std::size_t after = std::count_if(pts.begin(), pts.end(), [&](const ScalingPoint& p) { return p.N >= rep.n0; });
    if (after >= 3) {
      rep.global_from_n0 = batch_scan(pts, cfg.batch_size, double(rep.n0), INFINITY, fo);
      rep.full_from_n0 = fit_power_law(pts, double(rep.n0), INFINITY, fo);
    }
  }

  for (const auto& r : rows) {
    if (r.rmse > 0.0 && r.db_below_sql > rep.best_db) {
      rep.best_db = r.db_below_sql;
      rep.best_db_N = r.N;
    }
  }

  // contiguous strategy regions
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j + 1 < rows.size() && rows[j + 1].strategy_id == rows[i].strategy_id) ++j;
    std::vector<ScalingPoint> region(pts.begin() + i, pts.begin() + j + 1);
    const std::string& id = rows[i].strategy_id;
    i = j + 1;
    if (region.size() < 3) continue;

    const int m = cfg.min_region_points;
    std::size_t split = 0;
    if (id.find('-') != std::string::npos && static_cast<int>(region.size()) >= 2 * m) {
      for (std::size_t len = region.size() - m; len >= static_cast<std::size_t>(m); --len) {
        const auto f = fit_power_law(std::span(region).first(len), fo);
        if (f.alpha > cfg.hl_threshold) {
          split = len;
          break;
        }
      }
    }
    if (split > 0) {
      rep.regions.push_back(detail::fit_region(std::span(region).first(split), id, cfg));
      rep.regions.push_back(detail::fit_region(std::span(region).subspan(split), id, cfg));
    } else {
      rep.regions.push_back(detail::fit_region(region, id, cfg));
    }
  }
  return rep;
}

}  // namespace hscale
