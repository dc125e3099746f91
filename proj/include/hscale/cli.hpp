#pragma once

// Command-line front end. `run_cli` is the whole program; tools/hscale.cpp
// only forwards argv. Exit codes: 0 success, 2 config or infeasibility,
// 3 I/O.

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hscale/io.hpp"

namespace hscale::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

/// "s1-only" or "s1-2-11" style ids; "full" keeps the configured ladder.
inline std::optional<std::vector<int>> ladder_from_strategy(const std::string& id) {
  if (id.empty() || id == "full") return std::nullopt;
  if (id == "s1-only") return std::vector<int>{1};
  if (id.size() < 2 || id[0] != 's') throw io::config_error("unknown strategy \"" + id + "\"");
  std::vector<int> ladder;
  std::stringstream ss(id.substr(1));
  std::string part;
  while (std::getline(ss, part, '-')) {
    try {
      std::size_t pos = 0;
      const int s = std::stoi(part, &pos);
      if (pos != part.size()) throw std::invalid_argument(part);
      ladder.push_back(s);
    } catch (const std::exception&) {
      throw io::config_error("unknown strategy \"" + id + "\"");
    }
  }
  try {
    validate_ladder(ladder);
  } catch (const std::invalid_argument& e) {
    throw io::config_error("strategy \"" + id + "\": " + e.what());
  }
  return ladder;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
  std::string strategy;
  bool resume = false;
  std::string upgrade_mode;
  // plan
  std::vector<std::int64_t> budgets;
  // simulate
  bool traces = false;
  // analyze
  std::string results_dir;
  // reproduce
  std::string figure;
};

inline CampaignConfig resolve_config(const Options& o) {
  CampaignConfig cfg = o.config_path.empty() ? CampaignConfig{} : io::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (auto ladder = ladder_from_strategy(o.strategy)) cfg.ladder = *ladder;
  if (!o.upgrade_mode.empty()) cfg.upgrade_mode = io::upgrade_mode_from_string(o.upgrade_mode);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw io::config_error(e.what());
  }
  return cfg;
}

inline void print_rows(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << std::setw(8) << "N" << "  " << std::left << std::setw(14) << "strategy" << std::right << std::setw(13)
      << "rmse" << std::setw(13) << "error_bar" << std::setw(9) << "dB" << "\n";
  for (const auto& r : rows)
    out << std::setw(8) << r.N << "  " << std::left << std::setw(14) << r.strategy_id << std::right
        << std::scientific << std::setprecision(4) << std::setw(13) << r.rmse << std::setw(13) << r.error_bar
        << std::fixed << std::setprecision(2) << std::setw(9) << r.db_below_sql << "\n"
        << std::defaultfloat;
}

inline std::string table_csv(const AnalysisReport& rep) {
  std::string out = "N_lo,N_hi,strategy_id,points,alpha,alpha_sigma,r_squared,hl_compatible,sql_compatible\n";
  for (const auto& r : rep.regions)
    out += io::fmt_double(r.fit.N_lo) + "," + io::fmt_double(r.fit.N_hi) + "," + r.strategy_id + "," +
           std::to_string(r.fit.points) + "," + io::fmt_double(r.fit.alpha) + "," + io::fmt_double(r.fit.alpha_sigma) +
           "," + io::fmt_double(r.fit.r_squared) + "," + (r.hl_compatible ? "1" : "0") + "," +
           (r.sql_compatible ? "1" : "0") + "\n";
  return out;
}

inline void print_report(std::ostream& out, const AnalysisReport& rep) {
  auto line = [&](const char* label, const ScalingFit& f) {
    out << label << " [" << f.N_lo << ", " << f.N_hi << "]: alpha = " << std::fixed << std::setprecision(4) << f.alpha
        << " +- " << f.alpha_sigma << ", R^2 = " << std::setprecision(3) << f.r_squared << std::defaultfloat << "\n";
  };
  line("global fit", rep.full_from_start);
  if (rep.full_from_n0.points > 0) line("global fit from N0", rep.full_from_n0);
  out << "best point: " << std::fixed << std::setprecision(2) << rep.best_db << " dB below the SQL at N = "
      << rep.best_db_N << std::defaultfloat << "\n\n";
  out << std::setw(16) << "N range" << "  " << std::left << std::setw(14) << "strategy" << std::right << std::setw(18)
      << "alpha" << std::setw(8) << "R^2" << "  flag\n";
  for (const auto& r : rep.regions) {
    std::ostringstream range;
    range << r.fit.N_lo << " - " << r.fit.N_hi;
    std::ostringstream alpha;
    alpha << std::fixed << std::setprecision(3) << r.fit.alpha << " +- " << r.fit.alpha_sigma;
    out << std::setw(16) << range.str() << "  " << std::left << std::setw(14) << r.strategy_id << std::right
        << std::setw(18) << alpha.str() << std::setw(7) << std::fixed << std::setprecision(1)
        << 100.0 * r.fit.r_squared << "%" << std::defaultfloat;
    if (r.hl_compatible) out << "  HL (alpha = 1 within 3 sigma)";
    else if (r.sql_compatible) out << "  SQL (alpha = 0.5 within 3 sigma)";
    out << "\n";
  }
}

// ---------------------------------------------------------------- subcommands

inline int cmd_print_default_config(std::ostream& out) {
  out << io::config_to_json(CampaignConfig{}, true).dump(2) << "\n";
  return kExitOk;
}

inline int cmd_plan(const Options& o, std::ostream& out) {
  const CampaignConfig cfg = resolve_config(o);
  const AllocationOptions opt{cfg.n_min, cfg.A};
  auto [cat, grid] = prepare_campaign(cfg);
  const std::vector<std::int64_t> budgets = o.budgets.empty() ? grid : o.budgets;
  io::json plans = io::json::array();
  for (std::int64_t N : budgets) {
    const int p = cat.select(N);
    const ResourcePlan plan = plan_for_budget(cat, N, opt);
    plans.push_back(io::plan_to_json(plan, cat.strategy_id(p)));
  }
  const std::string text = (o.budgets.size() == 1 ? plans[0] : plans).dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
    return kExitOk;
  }
  const io::fs::path dir(o.out);
  io::ensure_dir(dir);
  io::write_file(dir / io::kPlansFile, text);
  io::write_manifest(dir, {o.config_path, cfg.seed, dir.string(), "plan", {io::kPlansFile}});
  out << "wrote " << budgets.size() << " plan(s) to " << (dir / io::kPlansFile).string() << "\n";
  return kExitOk;
}

/// First run of every (grid point, angle) block, replayed from its substream.
inline io::json traces_json(const CampaignResult& res) {
  io::json arr = io::json::array();
  std::size_t gi = 0;
  for (std::size_t g = 0; g < res.grid.size() && gi < res.plans.size(); ++g) {
    if (res.plans[gi].budget != res.grid[g]) continue;
    for (std::size_t j = 0; j < res.angles.size(); ++j) {
      SimConfig sc;
      sc.theta_true = res.angles[j];
      sc.visibilities = res.config.visibilities;
      sc.seed = res.config.seed;
      sc.grid_index = g;
      sc.angle_index = j;
      sc.run_index = 0;
      sc.eta = res.config.eta;
      io::json t = io::trace_to_json(run_protocol_once(res.plans[gi], sc));
      io::json entry;
      entry["N"] = res.grid[g];
      entry["angle_index"] = j;
      entry["run_index"] = 0;
      entry["theta_true"] = res.angles[j];
      entry["trace"] = t;
      arr.push_back(entry);
    }
    ++gi;
  }
  return arr;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw io::config_error("simulate needs --out DIR");
  const CampaignConfig cfg = resolve_config(o);
  const io::fs::path dir(o.out);
  const CampaignResult res = io::simulate_to_dir(cfg, dir, {o.jobs, o.resume, o.config_path, "simulate"});
  if (o.traces) io::write_file(dir / "traces.json", traces_json(res).dump(2) + "\n");
  out << "campaign: " << res.rows.size() << " grid points, " << res.angles.size() << " angles, " << cfg.runs
      << " runs per angle\nupgrade points:";
  for (std::size_t p = 0; p < res.catalog.prefixes.size(); ++p) {
    const auto u = res.catalog.upgrade_points[p];
    out << " " << res.catalog.strategy_id(static_cast<int>(p)) << "@"
        << (u == StrategyCatalog::kNever ? std::string("never") : std::to_string(u));
  }
  out << "\nwrote " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_analyze(const Options& o, std::ostream& out) {
  const std::string src = !o.results_dir.empty() ? o.results_dir : "";
  if (src.empty()) throw io::config_error("analyze needs a results directory");
  const io::fs::path dir(src);
  CampaignConfig cfg = o.config_path.empty() ? io::load_campaign_config(dir) : io::load_config(o.config_path);
  const auto rows = io::load_aggregate_rows(dir);
  const AnalysisReport rep = analyze_rows(rows, cfg.analysis);
  print_report(out, rep);
  if (!o.out.empty()) {
    const io::fs::path od(o.out);
    io::ensure_dir(od);
    io::write_file(od / "fits.json", io::report_to_json(rep).dump(2) + "\n");
    io::write_file(od / "table.csv", table_csv(rep));
    io::write_manifest(od, {o.config_path.empty() ? (dir / io::kConfigFile).string() : o.config_path, cfg.seed,
                            od.string(), "analyze", {"fits.json", "table.csv"}});
  }
  return kExitOk;
}

/// Campaign rows for a reproduce bundle: reused when `dir` already holds a
/// completed campaign with the same config, run otherwise.
inline std::vector<AggregateRow> campaign_rows(const CampaignConfig& cfg, const io::fs::path& dir, const Options& o) {
  if (io::campaign_complete(dir)) {
    if (io::read_file(dir / io::kConfigFile) != io::config_to_json(cfg).dump(2) + "\n")
      throw io::config_error(dir.string() + " holds a campaign with a different config");
    return io::load_aggregate_rows(dir);
  }
  return io::simulate_to_dir(cfg, dir, {o.jobs, o.resume || io::fs::exists(dir / io::kConfigFile), o.config_path,
                                        "reproduce"})
      .rows;
}

inline int cmd_reproduce(const Options& o, std::ostream& out) {
  if (!o.seed) throw io::config_error("reproduce requires --seed");
  if (o.out.empty()) throw io::config_error("reproduce needs --out DIR");
  const CampaignConfig cfg = resolve_config(o);
  const io::fs::path od(o.out);
  io::ensure_dir(od);
  const auto rows = campaign_rows(cfg, od / "campaign", o);
  const AnalysisReport rep = analyze_rows(rows, cfg.analysis);
  std::vector<std::string> files;

  if (o.figure == "fig3") {
    std::string csv = "N,strategy_id,rmse,error_bar,sql,hl\n";
    for (const auto& r : rows)
      csv += std::to_string(r.N) + "," + r.strategy_id + "," + io::fmt_double(r.rmse) + "," +
             io::fmt_double(r.error_bar) + "," + io::fmt_double(sql_rmse(double(r.N))) + "," +
             io::fmt_double(hl_rmse(double(r.N))) + "\n";
    io::write_file(od / "fig3.csv", csv);
    io::json g;
    g["from_start"] = io::fits_to_json(rep.global_from_start);
    g["n0"] = rep.n0;
    g["from_n0"] = io::fits_to_json(rep.global_from_n0);
    io::write_file(od / "fig3_global.json", g.dump(2) + "\n");
    files = {"fig3.csv", "fig3_global.json"};
    out << "fig3: " << rows.size() << " points\n";
    print_report(out, rep);
  } else if (o.figure == "fig4") {
    std::string csv = "N,strategy_id,rmse,error_bar\n";
    for (const auto& r : rows)
      csv += std::to_string(r.N) + "," + r.strategy_id + "," + io::fmt_double(r.rmse) + "," +
             io::fmt_double(r.error_bar) + "\n";
    io::write_file(od / "fig4.csv", csv);
    std::string batches = "region,strategy_id,N_lo,N_hi,points,alpha,alpha_sigma\n";
    for (std::size_t i = 0; i < rep.regions.size(); ++i)
      for (const auto& f : rep.regions[i].batches)
        batches += std::to_string(i) + "," + rep.regions[i].strategy_id + "," + io::fmt_double(f.N_lo) + "," +
                   io::fmt_double(f.N_hi) + "," + std::to_string(f.points) + "," + io::fmt_double(f.alpha) + "," +
                   io::fmt_double(f.alpha_sigma) + "\n";
    io::write_file(od / "fig4_local.csv", batches);
    files = {"fig4.csv", "fig4_local.csv"};
    print_report(out, rep);
  } else if (o.figure == "table") {
    io::write_file(od / "table.csv", table_csv(rep));
    io::write_file(od / "fits.json", io::report_to_json(rep).dump(2) + "\n");
    files = {"table.csv", "fits.json"};
    print_report(out, rep);
  } else {
    throw io::config_error("unknown figure \"" + o.figure + "\" (fig3, fig4 or table)");
  }
  io::write_manifest(od, {o.config_path, cfg.seed, od.string(), "reproduce " + o.figure, files});
  return kExitOk;
}

// ---------------------------------------------------------------- entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-stage phase estimation planner and Monte Carlo harness", "hscale"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  Options o;
  app.add_option("--config", o.config_path, "JSON config file (see print-default-config)");
  app.add_option("--seed", o.seed, "master seed; overrides the config");
  app.add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "output directory");
  app.add_option("--strategy", o.strategy, "restrict the ladder, e.g. s1-only or s1-2-11");
  app.add_flag("--resume", o.resume, "continue an interrupted campaign in --out");
  app.add_option("--upgrade-mode", o.upgrade_mode, "bound or simulation")
      ->check(CLI::IsMember({"bound", "simulation"}));

  auto* plan = app.add_subcommand("plan", "optimal allocations for budgets or the configured grid");
  plan->add_option("--budget,-N", o.budgets, "total budget N (repeatable); default: the campaign grid");
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo campaign into --out");
  sim->add_flag("--traces", o.traces, "also write the first run of every block as a trace");
  auto* ana = app.add_subcommand("analyze", "global and local scaling fits of a campaign directory");
  ana->add_option("dir", o.results_dir, "campaign directory")->required();
  auto* rep = app.add_subcommand("reproduce", "data behind a figure or the region table");
  rep->add_option("figure", o.figure, "fig3, fig4 or table")->required()->check(CLI::IsMember({"fig3", "fig4", "table"}));
  auto* pdc = app.add_subcommand("print-default-config", "print the default config with inline docs");

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (pdc->parsed()) return cmd_print_default_config(out);
    if (plan->parsed()) return cmd_plan(o, out);
    if (sim->parsed()) return cmd_simulate(o, out);
    if (ana->parsed()) return cmd_analyze(o, out);
    if (rep->parsed()) return cmd_reproduce(o, out);
  } catch (const io::io_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const io::fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // config errors, infeasible budgets and schedules
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace hscale::cli
