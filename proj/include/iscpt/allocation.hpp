#pragma once

#include "iscpt/conic.hpp"
#include "iscpt/metrics.hpp"

namespace iscpt {

// Integrated channel gains ||h_k^H Theta G||^2 = theta^H Lambda_k theta.
struct GainLedger {
  std::vector<CMat> lambda;  // Hermitian PSD, one per user

  static GainLedger build(const ChannelSet& ch, const ScenarioConfig& cfg);

  double gain(int k, const CVec& theta) const;
  double total_gain(const CVec& theta) const;
  // Majorized surrogate of the total gain around theta_t (tangent value).
  double surrogate(const CVec& theta, const CVec& theta_t) const;
};

// Closed-form majorize-minimize step: phase alignment with the linear
// coefficient of the gain surrogate.
RisPhase mm_gain_step(const RisPhase& theta_t, const GainLedger& ledger);

struct SicDiagnostics {
  int iterations = 0;
  double best_gain = 0.0;
  RVec gains;       // per-user integrated gains at the selected phase
  CVec theta_best;  // gain-maximizing phase iterate
};

// MM ascent on the summed integrated gain, keeping the best iterate, then a
// descending-gain-decoded-last sort (ties by user index).
DecodingOrder optimize_sic_order(const ChannelSet& ch, const ScenarioConfig& cfg,
                                 const RisPhase& theta_init, SicDiagnostics* diag = nullptr);

struct PsOptions {
  int max_rounds = 20;
  double rho_tol = 1e-6;
  ConicSettings conic;

  PsOptions() {
    conic.tol = 1e-8;
    conic.max_iter = 20000;
  }
};

// SCA feasibility step for the split ratios: linearized SIC (the 1/rho term
// is kept through a 2x2 epigraph cone, the other tangent-expanded), QoS, EH,
// and box rows, with a maximum-minimum-slack objective. Throws "PS
// infeasible" when no round produces a feasible point.
PowerSplit solve_ps_ratio(const ChannelSet& ch, const RisPhase& theta, const BeamformingSet& bf,
                          const DecodingOrder& order, const ScenarioConfig& cfg,
                          const PowerSplit& rho_init, const PsOptions& opts = {});

}  // namespace iscpt
