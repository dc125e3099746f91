#pragma once

// Stage-by-stage disambiguation. Stage i sees s_i * phi only modulo 2 pi,
// i.e. s_i candidate phases spaced 2 pi / s_i apart. The candidate that
// falls inside the window around the previous stage's estimate is kept; the
// gamma recursion makes those windows tile the circle, so exactly one
// candidate qualifies.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "hscale/core.hpp"
#include "hscale/schedule.hpp"

namespace hscale {

enum class Branch { center, minus, plus };

inline std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::minus: return "minus";
    case Branch::plus: return "plus";
    default: return "center";
  }
}

struct EstimationRun {
  std::vector<double> stage_estimates;      // psi_i in [0, 2 pi)
  std::vector<double> running_phi;          // phi estimate after each stage
  std::vector<Branch> branch_taken;
  std::vector<double> interval_half_width;  // pi / (s_i gamma_i)
  double final_phi = 0.0;
  double final_theta = 0.0;
  // validation mode only: false if some stage satisfied both shift windows
  bool branches_exclusive = true;
};

/// Processes the ambiguous stage estimates in order. With `validate` set,
/// both shift windows are tested at every stage and overlaps are reported in
/// `branches_exclusive`; the branch taken is always the first match.
inline EstimationRun algorithm1(std::span<const double> stage_estimates, const Schedule& sch, bool validate = false) {
  const int K = sch.stages();
  if (static_cast<int>(stage_estimates.size()) != K)
    throw std::invalid_argument("algorithm1: one estimate per stage required");

  EstimationRun run;
  run.stage_estimates.assign(stage_estimates.begin(), stage_estimates.end());
  run.running_phi.reserve(K);
  run.branch_taken.reserve(K);
  run.interval_half_width.reserve(K);

  double phi = 0.0;
  for (int k = 0; k < K; ++k) {
    const double s = sch.s[k];
    const double g = sch.gamma[k];
    const double prev_width = kPi / (sch.s_prev(k) * sch.gamma_prev(k));

    double xi = stage_estimates[k] / s;
    const double m = std::floor(s * phi / kTwoPi - 0.5 * s / (sch.s_prev(k) * sch.gamma_prev(k)));
    xi += kTwoPi * m / s;

    const double inner = kPi * (2.0 * g - 1.0) / (s * g);
    const double outer = kPi * (2.0 * g + 1.0) / (s * g);
    const bool shift_down = phi + inner - prev_width < xi && xi < phi + outer + prev_width;
    const bool shift_up = phi - outer - prev_width < xi && xi < phi - inner + prev_width;
    if (validate && shift_down && shift_up) run.branches_exclusive = false;

    Branch taken = Branch::center;
    if (shift_down) {
      phi = xi - kTwoPi / s;
      taken = Branch::minus;
    } else if (shift_up) {
      phi = xi + kTwoPi / s;
      taken = Branch::plus;
    } else {
      phi = xi;
    }
    phi = wrap_phase(phi);

    run.running_phi.push_back(phi);
    run.branch_taken.push_back(taken);
    run.interval_half_width.push_back(kPi / (s * g));
  }
  run.final_phi = phi;
  run.final_theta = rotation_from_phase(phi);
  return run;
}

/// Stage k failed when its selected interval, centred on running_phi[k] with
/// half-width pi / (s_k gamma_k), does not contain the true phase.
inline std::vector<bool> stage_failure_flag(const EstimationRun& run, double phi_true) {
  std::vector<bool> failed(run.running_phi.size());
  for (std::size_t k = 0; k < failed.size(); ++k)
    failed[k] = !(phase_distance(run.running_phi[k], phi_true) < run.interval_half_width[k]);
  return failed;
}

/// Noise-free stage estimates (s_k phi mod 2 pi) for a true phase.
inline std::vector<double> exact_stage_estimates(double phi, const Schedule& sch) {
  std::vector<double> out;
  out.reserve(sch.s.size());
  for (int s : sch.s) out.push_back(wrap_phase(s * phi));
  return out;
}

}  // namespace hscale
