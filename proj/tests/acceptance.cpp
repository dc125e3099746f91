// Acceptance checks. Prints one PASS/FAIL line per evaluated criterion and
// exits non-zero when any of them fails.
//
//   acceptance                 all criteria
//   acceptance --criterion 3   one criterion
//   acceptance --prepare       compute the shared full-ladder campaign only
//
// Criteria 2, 3, 4, 8 and 9 share the full-ladder campaign, which is stored
// under $HSCALE_TMP/acceptance and reused while its config is unchanged.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <algorithm>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hscale/io.hpp"

using namespace hscale;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(prec);
  o << x;
  return o.str();
}

int worker_count() { return std::max(4, static_cast<int>(std::thread::hardware_concurrency())); }

fs::path work_root() {
  const char* base = std::getenv("HSCALE_TMP");
  return fs::path(base ? base : (fs::temp_directory_path() / "hscale-tests").string()) / "acceptance";
}

// ---------------------------------------------------------------- campaigns

CampaignConfig sql_campaign() {
  CampaignConfig c;
  c.ladder = {1};
  c.grid.min = 2;
  c.grid.max = 1000;
  c.grid.points = 40;
  c.runs = 200;
  c.angle_count = 17;
  return c;
}

CampaignConfig full_campaign() {
  CampaignConfig c;  // ladder (1, 2, 11, 51), N in [2, 30000], 150 points, R = 200, J = 17, v = 1
  c.analysis.n0 = 62;
  return c;
}

fs::path full_dir() { return work_root() / "full-jobsN"; }

/// The shared campaign directory, computed when absent or stale.
fs::path prepare_full() {
  const fs::path dir = full_dir();
  const CampaignConfig cfg = full_campaign();
  const std::string cfg_text = io::config_to_json(cfg).dump(2) + "\n";
  if (io::campaign_complete(dir) && io::read_file(dir / io::kConfigFile) == cfg_text) return dir;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  const auto t0 = Clock::now();
  io::simulate_to_dir(cfg, dir, {worker_count(), false, "", "acceptance"});
  std::cout << "full-ladder campaign computed with " << worker_count() << " workers in " << fmt(seconds_since(t0), 1)
            << " s\n";
  io::write_file(work_root() / "full-seconds.txt", fmt(seconds_since(t0), 3) + "\n");
  return dir;
}

std::vector<AggregateRow> full_rows() { return io::load_aggregate_rows(prepare_full()); }

double full_runtime_seconds() {
  const auto p = work_root() / "full-seconds.txt";
  return fs::exists(p) ? std::stod(io::read_file(p)) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------- criteria

Verdict criterion_1() {
  const auto t0 = Clock::now();
  const auto res = run_campaign(sql_campaign(), worker_count());
  const double secs = seconds_since(t0);
  const auto fit = fit_power_law(scaling_points(res.rows));
  int outside = 0;
  double worst = 0.0;
  std::int64_t worst_N = 0;
  for (const auto& r : res.rows) {
    const double z = std::abs(r.rmse - sql_rmse(double(r.N))) / r.error_bar;
    if (z > 3.0) ++outside;
    if (z > worst) {
      worst = z;
      worst_N = r.N;
    }
  }
  const bool alpha_ok = fit.alpha >= 0.45 && fit.alpha <= 0.55;
  Verdict v;
  v.pass = alpha_ok && outside == 0 && secs <= 60.0;
  v.detail = "alpha = " + fmt(fit.alpha) + " +- " + fmt(fit.alpha_sigma) + " (need [0.45, 0.55]); " +
             std::to_string(outside) + "/" + std::to_string(res.rows.size()) +
             " points beyond 3 error bars of 1/(2 sqrt N) (worst " + fmt(worst, 1) + " bars at N = " +
             std::to_string(worst_N) + "); " + fmt(secs, 1) + " s";
  return v;
}

Verdict criterion_2() {
  const auto rows = full_rows();
  const auto rep = analyze_rows(rows, full_campaign().analysis);
  const auto& g = rep.full_from_n0;
  int hl_windows = 0;
  std::string windows;
  for (const auto& r : rep.regions) {
    windows += " [" + fmt(r.fit.N_lo, 0) + ", " + fmt(r.fit.N_hi, 0) + "] " + r.strategy_id + " alpha " +
               fmt(r.fit.alpha, 3) + " +- " + fmt(r.fit.alpha_sigma, 3) + (r.hl_compatible ? " (HL)" : "") + ";";
    if (r.hl_compatible && r.fit.points >= 8) ++hl_windows;
  }
  const double secs = full_runtime_seconds();

  // not part of the verdict: the same campaign with simulation-calibrated
  // upgrade points
  CampaignConfig sim_cfg = full_campaign();
  sim_cfg.upgrade_mode = UpgradeMode::simulation;
  const auto sim_rep = analyze_rows(run_campaign(sim_cfg, worker_count()).rows, sim_cfg.analysis);
  std::cout << "info: simulation-calibrated upgrade points give local windows:";
  for (const auto& r : sim_rep.regions)
    std::cout << " [" << fmt(r.fit.N_lo, 0) << ", " << fmt(r.fit.N_hi, 0) << "] " << r.strategy_id << " alpha "
              << fmt(r.fit.alpha, 3) << " +- " << fmt(r.fit.alpha_sigma, 3) << (r.hl_compatible ? " (HL)" : "") << ";";
  std::cout << "\n";

  Verdict v;
  v.pass = g.alpha >= 0.65 && hl_windows >= 2 && !(secs > 1200.0);
  v.detail = "global alpha from N0 = " + std::to_string(rep.n0) + ": " + fmt(g.alpha) + " +- " +
             fmt(g.alpha_sigma) + " (need >= 0.65); HL-compatible windows of >= 8 points: " +
             std::to_string(hl_windows) + " (need >= 2); campaign " + fmt(secs, 1) + " s; regions:" + windows;
  return v;
}

Verdict criterion_3() {
  const auto rep = analyze_rows(full_rows(), full_campaign().analysis);
  Verdict v;
  v.pass = rep.best_db >= 10.0;
  v.detail = "best point " + fmt(rep.best_db, 2) + " dB below the SQL at N = " + std::to_string(rep.best_db_N) +
             " (need >= 10 dB)";
  return v;
}

Verdict criterion_4() {
  int violations = 0;
  std::string where;
  for (const auto& r : full_rows()) {
    const double hl = hl_rmse(double(r.N));
    if (r.rmse < hl - 3.0 * r.error_bar) {
      ++violations;
      where += " N = " + std::to_string(r.N) + " (rmse " + fmt(r.rmse) + ", HL " + fmt(hl) + ", bar " +
               fmt(r.error_bar) + ");";
    }
  }
  Verdict v;
  v.pass = violations == 0;
  v.detail = std::to_string(violations) + " points beat pi/(2N) by more than 3 error bars" +
             (where.empty() ? std::string() : ":" + where);
  return v;
}

// exhaustive oracle over even counts >= 2
double exhaustive_two_stage(const Schedule& sch, std::int64_t N) {
  double best = std::numeric_limits<double>::infinity();
  const int s1 = sch.s[0], s2 = sch.s[1];
  for (std::int64_t n1 = 2; n1 * s1 + 2 * s2 <= N; n1 += 2)
    for (std::int64_t n2 = 2; n1 * s1 + n2 * s2 <= N; n2 += 2) {
      const std::vector<int> n{int(n1), int(n2)};
      best = std::min(best, error_upper_bound(sch, n));
    }
  return best;
}

Verdict criterion_5() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> s2d(2, 20);
  int checked = 0, failed = 0;
  double worst = 0.0;
  while (checked < 50) {
    const std::vector<int> s{1, s2d(gen)};
    const auto range = feasible_gamma1_range(s);
    const double hi = std::isfinite(range.upper) ? range.inner_upper() : range.lower + 5.0;
    std::uniform_real_distribution<double> gd(range.inner_lower(), hi);
    const Schedule sch = make_schedule(s, gd(gen));
    const std::int64_t lo = minimum_budget(sch);
    if (lo > 200) continue;
    std::uniform_int_distribution<std::int64_t> Nd(lo, 200);
    const std::int64_t N = Nd(gen);
    const double planned = optimize_allocation(sch, N).bound;
    const double oracle = exhaustive_two_stage(sch, N);
    const double excess = planned / oracle - 1.0;
    worst = std::max(worst, excess);
    if (excess > 0.01) ++failed;
    ++checked;
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = failed == 0 && secs <= 10.0;
  v.detail = std::to_string(checked - failed) + "/" + std::to_string(checked) +
             " configurations within 1% of the exhaustive optimum (worst excess " + fmt(100.0 * worst, 3) + "%); " +
             fmt(secs, 2) + " s";
  return v;
}

// A single stage at multiplier 1 estimates phi; it fails when the estimate
// misses the interval of half-width pi / gamma around the truth.
Verdict criterion_6() {
  const auto t0 = Clock::now();
  const int trials = 10000;
  int cells = 0, bad = 0;
  double worst_ratio = 0.0;
  std::string worst_cell;
  for (int gi = 0; gi < 3; ++gi) {
    const double gamma = 2.0 + gi;
    const double bound_base = confidence_factor(gamma);
    for (int n = 4; n <= 40; n += 2) {
      int failures = 0;
      for (int r = 0; r < trials; ++r) {
        const double theta = kPi * ((r % 101) + 0.5) / 101.0;
        CounterRng rng(stream_key(606, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(gi),
                                  static_cast<std::uint64_t>(r), 0));
        const double psi = estimate_batch(sample_stage(StageConfig{1, n, 1.0}, theta, rng)).phase;
        failures += !(phase_distance(psi, phase_from_rotation(theta)) < kPi / gamma);
      }
      const double rate = double(failures) / trials;
      const double bound = 4.0 * std::pow(bound_base, -n / 2.0);
      ++cells;
      if (rate > bound) ++bad;
      if (rate / bound > worst_ratio) {
        worst_ratio = rate / bound;
        worst_cell = "n = " + std::to_string(n) + ", gamma = " + fmt(gamma, 0);
      }
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = bad == 0 && secs <= 60.0;
  v.detail = std::to_string(cells - bad) + "/" + std::to_string(cells) +
             " (n, gamma) cells at or below 4 C^(-n/2); largest rate/bound " + fmt(worst_ratio, 3) + " at " +
             worst_cell + "; " + fmt(secs, 1) + " s";
  return v;
}

Verdict criterion_7() {
  const auto cat = make_catalog({1, 2, 11, 51});
  int errors = 0, overlaps = 0, checked = 0;
  double worst = 0.0;
  for (const Schedule& sch : cat.prefixes) {
    for (int i = 0; i < 1000; ++i) {
      const double phi = kTwoPi * i / 1000.0;
      const auto run = algorithm1(exact_stage_estimates(phi, sch), sch, true);
      const double err = phase_distance(run.final_phi, phi);
      worst = std::max(worst, err);
      if (!(err <= 1e-9)) ++errors;
      if (!run.branches_exclusive) ++overlaps;
      ++checked;
    }
  }
  Verdict v;
  v.pass = errors == 0 && overlaps == 0;
  v.detail = std::to_string(checked) + " noiseless passes over every ladder prefix: max error " +
             [&] {
               char b[32];
               std::snprintf(b, sizeof b, "%.2e", worst);
               return std::string(b);
             }() +
             " rad (need <= 1e-9), " + std::to_string(overlaps) + " non-exclusive branch decisions";
  return v;
}

Verdict criterion_8() {
  const fs::path dir = prepare_full();
  const auto side = io::json::parse(io::read_file(dir / io::kSidecarFile));
  const std::vector<double> angles = side["angles"].get<std::vector<double>>();
  const std::size_t J = angles.size();
  // per-angle RMSE recomputed from the raw runs
  std::map<std::int64_t, std::vector<double>> sum_sq, count;
  for (const auto& r : io::parse_runs_csv(io::read_file(dir / io::kRunsFile))) {
    auto& s = sum_sq[r.N];
    auto& c = count[r.N];
    if (s.empty()) {
      s.assign(J, 0.0);
      c.assign(J, 0.0);
    }
    const double d = circular_distance(r.theta_hat, angles[r.angle_index]);
    s[r.angle_index] += d * d;
    c[r.angle_index] += 1.0;
  }
  int violations = 0;
  double worst = 0.0;
  std::int64_t worst_N = 0;
  for (const auto& [N, s] : sum_sq) {
    std::vector<double> rm(J);
    for (std::size_t j = 0; j < J; ++j) rm[j] = std::sqrt(s[j] / count[N][j]);
    const double rho = spearman(rm, angles);
    if (!(std::abs(rho) < 0.3)) ++violations;
    if (std::abs(rho) > worst) {
      worst = std::abs(rho);
      worst_N = N;
    }
  }
  // reference only: how often |rho| >= 0.3 arises with no dependence at all
  std::mt19937_64 gen(808);
  std::vector<double> ranks(J), perm(J);
  for (std::size_t j = 0; j < J; ++j) ranks[j] = perm[j] = double(j);
  int null_hits = 0;
  const int null_trials = 20000;
  for (int t = 0; t < null_trials; ++t) {
    std::shuffle(perm.begin(), perm.end(), gen);
    null_hits += !(std::abs(spearman(ranks, perm)) < 0.3);
  }
  const double null_rate = double(null_hits) / null_trials;
  std::cout << "info: with no angle dependence |rho| >= 0.3 occurs with probability " << fmt(null_rate, 3)
            << " per budget, about " << fmt(null_rate * sum_sq.size(), 1) << " of " << sum_sq.size() << " budgets\n";

  Verdict v;
  v.pass = violations == 0;
  v.detail = std::to_string(violations) + "/" + std::to_string(sum_sq.size()) +
             " budgets with |rho| >= 0.3 (largest |rho| = " + fmt(worst, 3) + " at N = " + std::to_string(worst_N) +
             "; J = " + std::to_string(J) + ")";
  return v;
}

Verdict criterion_9() {
  const fs::path many = prepare_full();
  const fs::path one = work_root() / "full-jobs1";
  fs::remove_all(one);
  io::simulate_to_dir(full_campaign(), one, {1, false, "", "acceptance"});
  std::string differing;
  for (const char* f : {io::kConfigFile, io::kSidecarFile, io::kPlansFile, io::kRunsFile, io::kAnglesFile,
                        io::kResultsFile})
    if (io::read_file(one / f) != io::read_file(many / f)) differing += std::string(" ") + f;
  Verdict v;
  v.pass = differing.empty();
  v.detail = differing.empty() ? "result files byte-identical for --jobs 1 and --jobs " + std::to_string(worker_count())
                               : "files differ:" + differing;
  return v;
}

const std::map<int, std::function<Verdict()>> kCriteria{
    {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
    {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--prepare") {
      prepare_full();
      return 0;
    }
    if (a == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]... | --prepare\n";
      return 2;
    }
  }
  if (selected.empty())
    for (const auto& [c, f] : kCriteria) selected.push_back(c);

  bool all = true;
  for (int c : selected) {
    auto it = kCriteria.find(c);
    if (it == kCriteria.end()) {
      std::cerr << "unknown criterion " << c << "\n";
      return 2;
    }
    Verdict v;
    try {
      v = it->second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.detail << ")" << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
