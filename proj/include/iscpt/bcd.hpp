#pragma once

#include <functional>
#include <optional>

#include "iscpt/allocation.hpp"
#include "iscpt/beamforming.hpp"
#include "iscpt/ris_phase.hpp"

namespace iscpt {

enum class SolveOutcome { converged, max_iter, infeasible };

struct Solution {
  BeamformingSet bf;
  RisPhase theta;
  DecodingOrder order;
  PowerSplit ps;
  double objective = 0.0;  // sum ||w_k||^2 [W]
  int iterations = 0;
  std::vector<double> trace;  // objective per sweep, non-increasing
  SolveOutcome status = SolveOutcome::infeasible;
};

double total_power(const BeamformingSet& bf);

// One sweep's diagnostics for the JSON-lines trace.
struct SweepRecord {
  int sweep = 0;
  double objective = 0.0;
  double min_slack = 0.0;
  double crb_margin = 0.0;
  double qos_margin = 0.0;
  double eh_margin = 0.0;
  double sic_margin = 0.0;
  double beamforming_seconds = 0.0;
  double ris_seconds = 0.0;
  double order_seconds = 0.0;
  double ps_seconds = 0.0;
};

struct DriverOptions {
  double objective_tol = 1e-3;  // nu [W]
  int max_sweeps = 100;
  bool optimize_ris = true;    // baselines switch the phase block off
  bool optimize_order = true;  // and/or the decoding-order block
  BeamformingOptions beamforming;
  RisOptions ris;
  PsOptions ps;
  std::function<void(const SweepRecord&)> on_sweep;

  DriverOptions() { ris.max_sweeps = 150; }
};

// Algorithm: cyclic sweeps of beamforming, RIS phase, SIC order, and PS
// ratio until the objective change drops below objective_tol. A failed block
// keeps its previous value; blocks that would worsen the replayed feasibility
// margin are rejected, which preserves the monotone objective.
Solution minimize_power(const ScenarioConfig& cfg, const ChannelSet& ch,
                        const std::optional<Solution>& init = std::nullopt,
                        const DriverOptions& opts = {});

struct ComplexityEstimate {
  double beamforming = 0.0;  // (N_T + 1)^3.5
  double ris = 0.0;          // k_admm M^3
  double order = 0.0;        // M
  double ps = 0.0;           // K^3.5
  double per_sweep = 0.0;
};

ComplexityEstimate complexity_estimate(const ScenarioConfig& cfg, int k_admm = 100);

}  // namespace iscpt
