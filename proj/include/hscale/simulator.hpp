#pragma once

// Stand-in for the photonic apparatus: per-stage counts in the HV and DA
// bases drawn from the binomial law of the outcome probabilities.

#include <cstdint>
#include <vector>

#include "hscale/allocator.hpp"
#include "hscale/core.hpp"
#include "hscale/estimator.hpp"
#include "hscale/rng.hpp"

namespace hscale {

struct SimConfig {
  double theta_true = 0.0;
  VisibilityMap visibilities;
  std::uint64_t seed = 0;
  // substream coordinates of this run
  std::uint64_t grid_index = 0;
  std::uint64_t angle_index = 0;
  std::uint64_t run_index = 0;
  // detection efficiency; photons are thinned when < 1
  double eta = 1.0;
  // replace sampled frequencies by the exact probabilities
  bool exact_frequencies = false;
};

template <class Rng>
MeasurementBatch sample_stage(const StageConfig& stage, double theta_true, Rng& rng, double eta = 1.0) {
  const auto p = outcome_probabilities(stage.s, theta_true, stage.v);
  std::int64_t per_basis_hv = stage.n / 2;
  std::int64_t per_basis_da = stage.n / 2;
  if (eta < 1.0) {
    per_basis_hv = sample_binomial(rng, per_basis_hv, eta);
    per_basis_da = sample_binomial(rng, per_basis_da, eta);
  }
  MeasurementBatch batch;
  batch.counts_h = sample_binomial(rng, per_basis_hv, p.p_hv);
  batch.counts_v = per_basis_hv - batch.counts_h;
  batch.counts_d = sample_binomial(rng, per_basis_da, p.p_da);
  batch.counts_a = per_basis_da - batch.counts_d;
  return batch;
}

/// Ambiguous estimate of a batch; a basis that lost every photon contributes
/// no information (de-biased component 0).
inline AmbiguousEstimate estimate_batch(const MeasurementBatch& batch) {
  const double f_hv = batch.hv_total() > 0 ? batch.freq_hv() : 0.5;
  const double f_da = batch.da_total() > 0 ? batch.freq_da() : 0.5;
  return ambiguous_estimate_from_frequencies(f_hv, f_da);
}

inline std::vector<StageConfig> stage_configs(const ResourcePlan& plan, const VisibilityMap& vis) {
  std::vector<StageConfig> stages;
  for (int k = 0; k < plan.schedule.stages(); ++k)
    stages.push_back({plan.schedule.s[k], plan.n[k], visibility_for(vis, plan.schedule.s[k])});
  return stages;
}

/// Stage estimates of one non-adaptive run. Every stage draws from its own
/// substream.
inline std::vector<double> sample_stage_estimates(const ResourcePlan& plan, const SimConfig& cfg) {
  std::vector<double> estimates;
  const auto stages = stage_configs(plan, cfg.visibilities);
  for (std::size_t k = 0; k < stages.size(); ++k) {
    if (cfg.exact_frequencies) {
      const auto p = outcome_probabilities(stages[k].s, cfg.theta_true, stages[k].v);
      estimates.push_back(ambiguous_estimate_from_frequencies(p.p_hv, p.p_da).phase);
      continue;
    }
    CounterRng rng(stream_key(cfg.seed, cfg.grid_index, cfg.angle_index, cfg.run_index, k));
    estimates.push_back(estimate_batch(sample_stage(stages[k], cfg.theta_true, rng, cfg.eta)).phase);
  }
  return estimates;
}

inline EstimationRun run_protocol_once(const ResourcePlan& plan, const SimConfig& cfg) {
  return algorithm1(sample_stage_estimates(plan, cfg), plan.schedule);
}

}  // namespace hscale
