#pragma once

// Persistence: JSON configs, plans, traces and fit reports; CSV result rows
// and per-run records; campaign output directories with resume support.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hscale/campaign.hpp"
#include "hscale/version.hpp"

namespace hscale::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string fmt_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  if (s == "nan") return NAN;
  std::size_t pos = 0;
  const double x = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters in number: " + s);
  return x;
}

// ---------------------------------------------------------------- files

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw io_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary file and a rename, so readers never see a
/// half-written file.
inline void write_file(const fs::path& p, const std::string& content) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw io_error("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------- config

inline const char* to_string(UpgradeMode m) { return m == UpgradeMode::bound ? "bound" : "simulation"; }

inline UpgradeMode upgrade_mode_from_string(const std::string& s) {
  if (s == "bound") return UpgradeMode::bound;
  if (s == "simulation") return UpgradeMode::simulation;
  throw config_error("upgrade_mode must be \"bound\" or \"simulation\", got \"" + s + "\"");
}

inline json config_to_json(const CampaignConfig& c, bool with_docs = false) {
  json j;
  json ladder;
  if (with_docs) ladder["_doc"] = "s: multiplier ladder starting at 1; b: concentration constant; A: bound prefactor; n_min: photons per active stage";
  ladder["s"] = c.ladder;
  ladder["b"] = c.b;
  ladder["A"] = c.A;
  ladder["n_min"] = c.n_min;
  j["ladder"] = ladder;

  json vis = json::object();
  if (with_docs) vis["_doc"] = "fringe visibility per multiplier s, in (0, 1]; missing entries default to 1";
  for (const auto& [s, v] : c.visibilities) vis[std::to_string(s)] = v;
  j["visibilities"] = vis;

  json grid;
  if (with_docs) grid["_doc"] = "even budgets on a geometric grid in [min, max]; densify adds 8 points in [u, 2u] after each upgrade point u; a non-empty explicit list replaces the grid";
  grid["min"] = c.grid.min;
  grid["max"] = c.grid.max;
  grid["points"] = c.grid.points;
  grid["densify"] = c.grid.densify;
  grid["explicit"] = c.grid.explicit_points;
  j["grid"] = grid;

  json camp;
  if (with_docs) camp["_doc"] = "runs: repetitions R per (N, angle); angle_count: J angles (j + 1/2) pi / J unless angles is given; upgrade_mode: bound or simulation; calibration_runs: runs per angle for simulation upgrades; eta: detection efficiency";
  camp["runs"] = c.runs;
  camp["angle_count"] = c.angle_count;
  camp["angles"] = c.angles;
  camp["seed"] = c.seed;
  camp["upgrade_mode"] = to_string(c.upgrade_mode);
  camp["calibration_runs"] = c.calibration_runs;
  camp["eta"] = c.eta;
  j["campaign"] = camp;

  json an;
  if (with_docs) an["_doc"] = "batch_size: points per batch step; outlier_k: standardized residual cut; global_start_N and n0: 0 picks the first grid point and the first multi-stage point; min_region_points: smallest split region; hl_threshold: alpha marking a Heisenberg-like onset; scale_by_chi2: scale alpha errors by the reduced chi-square";
  an["batch_size"] = c.analysis.batch_size;
  an["outlier_k"] = c.analysis.outlier_k;
  an["remove_outliers"] = c.analysis.remove_outliers;
  an["global_start_N"] = c.analysis.global_start_N;
  an["n0"] = c.analysis.n0;
  an["min_region_points"] = c.analysis.min_region_points;
  an["hl_threshold"] = c.analysis.hl_threshold;
  an["scale_by_chi2"] = c.analysis.scale_by_chi2;
  j["analysis"] = an;
  return j;
}

namespace detail {

inline void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw config_error("section \"" + section + "\" must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (k != "_doc" && !ok.count(k)) throw config_error("unknown key \"" + k + "\" in section \"" + section + "\"");
}

template <class T>
void read_key(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(section + "." + key + ": " + e.what());
  }
}

}  // namespace detail

/// Missing keys keep their defaults; unknown keys are rejected.
inline CampaignConfig config_from_json(const json& j) {
  CampaignConfig c;
  if (!j.is_object()) throw config_error("config must be a JSON object");
  detail::check_keys(j, "top level", {"ladder", "visibilities", "grid", "campaign", "analysis"});
  if (j.contains("ladder")) {
    const auto& l = j["ladder"];
    detail::check_keys(l, "ladder", {"s", "b", "A", "n_min"});
    detail::read_key(l, "s", c.ladder, "ladder");
    detail::read_key(l, "b", c.b, "ladder");
    detail::read_key(l, "A", c.A, "ladder");
    detail::read_key(l, "n_min", c.n_min, "ladder");
  }
  if (j.contains("visibilities")) {
    const auto& v = j["visibilities"];
    if (!v.is_object()) throw config_error("section \"visibilities\" must be an object");
    for (const auto& [k, val] : v.items()) {
      if (k == "_doc") continue;
      int s = 0;
      try {
        std::size_t pos = 0;
        s = std::stoi(k, &pos);
        if (pos != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw config_error("visibility key \"" + k + "\" is not an integer multiplier");
      }
      if (!val.is_number()) throw config_error("visibility for s = " + k + " must be a number");
      c.visibilities[s] = val.get<double>();
    }
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::check_keys(g, "grid", {"min", "max", "points", "densify", "explicit"});
    detail::read_key(g, "min", c.grid.min, "grid");
    detail::read_key(g, "max", c.grid.max, "grid");
    detail::read_key(g, "points", c.grid.points, "grid");
    detail::read_key(g, "densify", c.grid.densify, "grid");
    detail::read_key(g, "explicit", c.grid.explicit_points, "grid");
  }
  if (j.contains("campaign")) {
    const auto& cp = j["campaign"];
    detail::check_keys(cp, "campaign",
                       {"runs", "angle_count", "angles", "seed", "upgrade_mode", "calibration_runs", "eta"});
    detail::read_key(cp, "runs", c.runs, "campaign");
    detail::read_key(cp, "angle_count", c.angle_count, "campaign");
    detail::read_key(cp, "angles", c.angles, "campaign");
    detail::read_key(cp, "seed", c.seed, "campaign");
    std::string mode = to_string(c.upgrade_mode);
    detail::read_key(cp, "upgrade_mode", mode, "campaign");
    c.upgrade_mode = upgrade_mode_from_string(mode);
    detail::read_key(cp, "calibration_runs", c.calibration_runs, "campaign");
    detail::read_key(cp, "eta", c.eta, "campaign");
  }
  if (j.contains("analysis")) {
    const auto& a = j["analysis"];
    detail::check_keys(a, "analysis",
                       {"batch_size", "outlier_k", "remove_outliers", "global_start_N", "n0", "min_region_points",
                        "hl_threshold", "scale_by_chi2"});
    detail::read_key(a, "batch_size", c.analysis.batch_size, "analysis");
    detail::read_key(a, "outlier_k", c.analysis.outlier_k, "analysis");
    detail::read_key(a, "remove_outliers", c.analysis.remove_outliers, "analysis");
    detail::read_key(a, "global_start_N", c.analysis.global_start_N, "analysis");
    detail::read_key(a, "n0", c.analysis.n0, "analysis");
    detail::read_key(a, "min_region_points", c.analysis.min_region_points, "analysis");
    detail::read_key(a, "hl_threshold", c.analysis.hl_threshold, "analysis");
    detail::read_key(a, "scale_by_chi2", c.analysis.scale_by_chi2, "analysis");
  }
  if (c.analysis.batch_size < 1) throw config_error("analysis.batch_size must be positive");
  if (c.analysis.min_region_points < 3) throw config_error("analysis.min_region_points must be at least 3");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  return c;
}

inline CampaignConfig load_config(const fs::path& p) {
  const std::string text = read_file(p);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(p.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------- plans, traces, fits

inline json plan_to_json(const ResourcePlan& plan, const std::string& strategy_id = {}) {
  json j;
  if (!strategy_id.empty()) j["strategy_id"] = strategy_id;
  j["s"] = plan.schedule.s;
  j["gamma"] = plan.schedule.gamma;
  j["n"] = plan.n;
  j["N"] = plan.budget;
  j["N_used"] = plan.n_used;
  j["bound"] = plan.bound;
  j["b"] = plan.schedule.b;
  std::vector<double> v;
  for (int k = 0; k < plan.schedule.stages(); ++k) v.push_back(plan.schedule.v(k));
  j["v"] = v;
  return j;
}

inline json trace_to_json(const EstimationRun& run) {
  json j;
  j["stage_estimates"] = run.stage_estimates;
  j["running_phi"] = run.running_phi;
  std::vector<std::string> branches;
  for (Branch b : run.branch_taken) branches.emplace_back(to_string(b));
  j["branch_taken"] = branches;
  j["interval_half_width"] = run.interval_half_width;
  j["final_phi"] = run.final_phi;
  j["final_theta"] = run.final_theta;
  return j;
}

inline json fit_to_json(const ScalingFit& f) {
  json j;
  j["window"] = {f.N_lo, f.N_hi};
  j["alpha"] = f.alpha;
  j["alpha_sigma"] = f.alpha_sigma;
  j["C"] = f.C;
  j["r_squared"] = f.r_squared;
  j["points"] = f.points;
  return j;
}

inline json fits_to_json(const std::vector<ScalingFit>& fits) {
  json arr = json::array();
  for (const auto& f : fits) arr.push_back(fit_to_json(f));
  return arr;
}

inline json report_to_json(const AnalysisReport& rep) {
  json j;
  j["n0"] = rep.n0;
  j["best_db"] = rep.best_db;
  j["best_db_N"] = rep.best_db_N;
  j["global_full_from_start"] = fit_to_json(rep.full_from_start);
  if (rep.full_from_n0.points > 0) j["global_full_from_n0"] = fit_to_json(rep.full_from_n0);
  j["global_batches_from_start"] = fits_to_json(rep.global_from_start);
  j["global_batches_from_n0"] = fits_to_json(rep.global_from_n0);
  json regions = json::array();
  for (const auto& r : rep.regions) {
    json rj = fit_to_json(r.fit);
    rj["strategy_id"] = r.strategy_id;
    rj["hl_compatible"] = r.hl_compatible;
    rj["sql_compatible"] = r.sql_compatible;
    rj["removed_N"] = r.removed_N;
    rj["batches"] = fits_to_json(r.batches);
    regions.push_back(rj);
  }
  j["regions"] = regions;
  return j;
}

// ---------------------------------------------------------------- CSV

inline constexpr const char* kResultHeader = "N,strategy_id,angle_index,rmse,error_bar,db_below_sql";
inline constexpr const char* kRunHeader = "grid_index,N,angle_index,run_index,theta_hat,distance,first_failed_stage";

inline std::string run_line(const RunRecord& r) {
  return std::to_string(r.grid_index) + "," + std::to_string(r.N) + "," + std::to_string(r.angle_index) + "," +
         std::to_string(r.run_index) + "," + fmt_double(r.theta_hat) + "," + fmt_double(r.distance) + "," +
         std::to_string(r.first_failed_stage);
}

inline std::string runs_csv(const std::vector<RunRecord>& runs) {
  std::string out = std::string(kRunHeader) + "\n";
  for (const auto& r : runs) out += run_line(r) + "\n";
  return out;
}

/// Aggregate rows carry angle_index -1.
inline std::string results_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kResultHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.N) + "," + r.strategy_id + ",-1," + fmt_double(r.rmse) + "," + fmt_double(r.error_bar) +
           "," + fmt_double(r.db_below_sql) + "\n";
  return out;
}

inline std::string angles_csv(const std::vector<AngleRow>& rows) {
  std::string out = std::string(kResultHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.N) + "," + r.strategy_id + "," + std::to_string(r.angle_index) + "," +
           fmt_double(r.rmse) + "," + fmt_double(r.error_bar) + "," + fmt_double(r.db_below_sql) + "\n";
  return out;
}

struct ResultRow {
  std::int64_t N = 0;
  std::string strategy_id;
  int angle_index = -1;
  double rmse = 0.0;
  double error_bar = 0.0;
  double db_below_sql = 0.0;
};

inline std::vector<ResultRow> parse_results_csv(const std::string& text, const std::string& name = "results.csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kResultHeader))
    throw io_error(name + ": unexpected header");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw io_error(name + ":" + std::to_string(lineno) + ": expected 6 fields");
    try {
      rows.push_back({std::stoll(f[0]), f[1], std::stoi(f[2]), parse_double(f[3]), parse_double(f[4]),
                      parse_double(f[5])});
    } catch (const std::exception&) {
      throw io_error(name + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return rows;
}

inline std::vector<AggregateRow> aggregate_rows(const std::vector<ResultRow>& rows) {
  std::vector<AggregateRow> out;
  for (const auto& r : rows)
    if (r.angle_index < 0) out.push_back({r.N, r.strategy_id, r.rmse, r.error_bar, r.error_bar == 0.0, r.db_below_sql});
  return out;
}

/// Parses per-run records; a truncated final line (interrupted write) is
/// skipped, any other malformed line is an error.
inline std::vector<RunRecord> parse_runs_csv(const std::string& text, const std::string& name = "runs.csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRunHeader) throw io_error(name + ": unexpected header");
  std::vector<RunRecord> runs;
  const bool ends_clean = !text.empty() && text.back() == '\n';
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    if (last && !ends_clean) break;
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    try {
      if (f.size() != 7) throw std::invalid_argument("field count");
      RunRecord r;
      r.grid_index = std::stoi(f[0]);
      r.N = std::stoll(f[1]);
      r.angle_index = std::stoi(f[2]);
      r.run_index = std::stoi(f[3]);
      r.theta_hat = parse_double(f[4]);
      r.distance = parse_double(f[5]);
      r.first_failed_stage = std::stoi(f[6]);
      runs.push_back(r);
    } catch (const std::exception&) {
      throw io_error(name + ":" + std::to_string(i + 2) + ": malformed run record");
    }
  }
  return runs;
}

// ---------------------------------------------------------------- campaign directories

inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kSidecarFile = "campaign.json";
inline constexpr const char* kPlansFile = "plans.json";
inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kAnglesFile = "angles.csv";
inline constexpr const char* kRunsFile = "runs.csv";
inline constexpr const char* kPartialFile = "runs.partial.csv";
inline constexpr const char* kManifestFile = "manifest.json";

inline json sidecar_json(const CampaignResult& res) {
  json j;
  j["version"] = kVersion;
  j["seed"] = res.config.seed;
  j["config"] = config_to_json(res.config);
  json up = json::object();
  for (std::size_t p = 0; p < res.catalog.prefixes.size(); ++p) {
    const auto u = res.catalog.upgrade_points[p];
    up[res.catalog.strategy_id(static_cast<int>(p))] = u == StrategyCatalog::kNever ? json(nullptr) : json(u);
  }
  j["upgrade_points"] = up;
  j["grid"] = res.grid;
  j["angles"] = res.angles;
  return j;
}

inline json plans_json(const CampaignResult& res) {
  json arr = json::array();
  for (std::size_t i = 0; i < res.plans.size(); ++i) arr.push_back(plan_to_json(res.plans[i], res.strategy_ids[i]));
  return arr;
}

struct Manifest {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string subcommand;
  std::vector<std::string> files;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The manifest is the only file carrying a wall-clock timestamp.
inline void write_manifest(const fs::path& dir, const Manifest& m) {
  json j;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["output_dir"] = m.output_dir;
  j["subcommand"] = m.subcommand;
  j["timestamp"] = utc_timestamp();
  j["version"] = kVersion;
  j["files"] = m.files;
  write_file(dir / kManifestFile, j.dump(2) + "\n");
}

inline bool campaign_complete(const fs::path& dir) { return fs::exists(dir / kResultsFile); }

/// Appends finished blocks to the partial-runs file as they complete.
class PartialRunsWriter : public ProgressSink {
 public:
  explicit PartialRunsWriter(const fs::path& path) : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw io_error("cannot open " + path.string());
    if (fs::file_size(path) == 0) out_ << kRunHeader << "\n" << std::flush;
  }
  void block_done(std::span<const RunRecord> block) override {
    std::string text;
    for (const auto& r : block) text += run_line(r) + "\n";
    std::lock_guard lock(mu_);
    out_ << text << std::flush;
    if (!out_) failed_ = true;
  }
  bool failed() const { return failed_; }

 private:
  std::ofstream out_;
  std::mutex mu_;
  bool failed_ = false;
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io_error("cannot create directory " + dir.string());
}

struct SimulateOptions {
  int jobs = 1;
  bool resume = false;
  std::string config_path;
  std::string subcommand = "simulate";
};

/// Runs a campaign into `dir`. A completed directory is never overwritten;
/// with `resume`, runs recorded in the partial file are reused after the
/// stored config is checked against `cfg`.
inline CampaignResult simulate_to_dir(const CampaignConfig& cfg, const fs::path& dir, const SimulateOptions& opt) {
  const std::string cfg_text = config_to_json(cfg).dump(2) + "\n";
  CompletedRuns completed;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opt.resume) throw io_error(dir.string() + " is not empty; pass --resume to continue a campaign there");
    if (!fs::exists(dir / kConfigFile)) throw io_error(dir.string() + " holds no campaign to resume");
    if (read_file(dir / kConfigFile) != cfg_text)
      throw config_error("config differs from the one stored in " + (dir / kConfigFile).string());
    if (campaign_complete(dir)) throw io_error(dir.string() + " holds a completed campaign; it is left unchanged");
    if (fs::exists(dir / kPartialFile))
      for (const auto& r : parse_runs_csv(read_file(dir / kPartialFile), kPartialFile)) completed[r.key()] = r;
  } else {
    ensure_dir(dir);
    write_file(dir / kConfigFile, cfg_text);
  }

  CampaignResult res;
  {
    PartialRunsWriter partial(dir / kPartialFile);
    res = run_campaign(cfg, opt.jobs, completed.empty() ? nullptr : &completed, &partial);
    if (partial.failed()) throw io_error("failed writing " + (dir / kPartialFile).string());
  }
  write_file(dir / kSidecarFile, sidecar_json(res).dump(2) + "\n");
  write_file(dir / kPlansFile, plans_json(res).dump(2) + "\n");
  write_file(dir / kRunsFile, runs_csv(res.runs));
  write_file(dir / kAnglesFile, angles_csv(res.per_angle));
  write_file(dir / kResultsFile, results_csv(res.rows));
  std::error_code ec;
  fs::remove(dir / kPartialFile, ec);
  write_manifest(dir, {opt.config_path, cfg.seed, dir.string(), opt.subcommand,
                       {kConfigFile, kSidecarFile, kPlansFile, kRunsFile, kAnglesFile, kResultsFile}});
  return res;
}

/// Config stored with a campaign directory.
inline CampaignConfig load_campaign_config(const fs::path& dir) { return load_config(dir / kConfigFile); }

inline std::vector<AggregateRow> load_aggregate_rows(const fs::path& dir) {
  return aggregate_rows(parse_results_csv(read_file(dir / kResultsFile), kResultsFile));
}

}  // namespace hscale::io
