#pragma once

#include <array>
#include <optional>

#include "iscpt/conic.hpp"
#include "iscpt/metrics.hpp"

namespace iscpt {

// One quartic of the RIS variable, (theta^H A theta)(theta^H B theta); the
// Kronecker-lifted matrix is A (x) B. Sums of such terms express every
// consensus function of the phase subproblem.
struct QuarticPair {
  CMat a;
  CMat b;
};

struct QuarticSum {
  std::vector<QuarticPair> terms;

  Cplx eval(const CVec& theta) const;
  // Sum of A (x) B; M^2 x M^2, intended for small-M identity checks.
  CMat materialize() const;
  Cplx eval_lifted(const CVec& theta_kron) const;

  // Antilinear coefficient of the split form
  //   g(theta, vt1, vt2, vt3) = vt3^H (A (x) B) (theta (x) vt1)
  // with respect to each block variable, so that g = a^H x (+ conj for vt3).
  CVec coeff_theta(const CVec& vt1, const CMat& vt3_mat) const;
  CVec coeff_vt1(const CVec& theta, const CMat& vt3_mat) const;
  CVec coeff_vt2(const CMat& vt3_mat) const;
  CVec coeff_vt3(const CVec& vt2) const;

  Cplx eval_split(const CVec& theta, const CVec& vt1, const CMat& vt3_mat) const;
};

// Quadratic forms of theta entering the SINR/EH/SIC constraints:
// |h_k^H Theta G w_j|^2 = theta^H E_{k,j} theta with rank-one E.
CMat phase_quadratic(const CVec& h_user, const CMat& g, const CVec& w);

// Precomputed coefficients of the phase subproblem at fixed beams, split
// ratios, and decoding order.
struct GCoefficients {
  int m = 0;

  // Consensus functions (scaled to unit order): gbar_1..gbar_4 feed the CRB
  // LMI, aggregate g5/g6 feed the SIC coupling.
  std::array<QuarticSum, 6> consensus;
  std::array<double, 6> consensus_scale{};  // raw value = scale * stored value

  // Raw per-pair SIC pieces and their quadratic-side matrices.
  struct SicPair {
    int weak = 0;
    int strong = 0;
    QuarticSum g5;     // raw scale
    QuarticSum g6;     // raw scale
    CMat d;            // g7 = theta^H D theta
    CMat d_bar;        // g8 = theta^H Dbar theta
    CMat d_tilde;      // Dbar - D
  };
  std::vector<SicPair> sic;

  // Per-user QoS/EH quadratics and constants.
  std::vector<CMat> own_quadratic;                // E_{k,k}
  std::vector<std::vector<CMat>> beam_quadratic;  // E_{k,j} for all beams j
  std::vector<std::vector<int>> interferers;      // beams decoded after k
  RVec rho;                                       // split ratios at build time
  RVec noise_const;                               // A_k
  RVec qos_target;                                // 2^gamma_k - 1
  RVec eh_rhs;                                    // Q/(eta(1-rho)) - sigma^2

  // CRB LMI data (scaled units, congruent with the beamforming stage).
  double fim_scale = 0.0;
  Cplx rcs{0.0, 0.0};
  double f_tt0 = 1.0;
  double f_aa0 = 1.0;
  double crb_threshold = 0.0;  // 1 / (epsilon f_tt0)

  // Raw consensus values g_i(theta), unscaled.
  std::array<Cplx, 6> raw_values(const CVec& theta) const;
};

GCoefficients build_g_coefficients(const ChannelSet& ch, const BeamformingSet& bf,
                                   const PowerSplit& ps, const DecodingOrder& order,
                                   const ScenarioConfig& cfg);

// ADMM state of the phase solve: six scalar consensus auxiliaries with duals,
// the unit-modulus splitting vectors with duals, and the penalty weights.
struct AdmmState {
  std::array<Cplx, 6> xi{};
  std::array<Cplx, 6> xi_dual{};
  double penalty = 1.0;        // rho_1
  double penalty_dual = 1.0;   // rho_bar_1
  CVec vartheta1;              // M
  CVec vartheta2;              // M^2
  CVec vartheta3;              // M^2
  CVec mu1;                    // M
  CVec mu2;                    // M^2
  CVec mu3;                    // M^2
  std::array<double, 4> lambdas{1.0, 1.0, 1.0, 1.0};
  RisPhase theta;

  static AdmmState init(const RisPhase& theta0);
  void validate() const;
};

struct RisOptions {
  int max_sweeps = 500;
  double residual_tol = 1e-4;
  int mm_rounds = 100;
  double mm_tol = 1e-8;
  // Margin maximization pushes every constraint slack toward the target once
  // feasible; pure feasibility stops at zero margin.
  bool margin_maximization = true;
  double hinge_weight = 10.0;
  ConicSettings xi_conic;

  RisOptions() {
    xi_conic.tol = 1e-8;
    xi_conic.max_iter = 20000;
  }
};

// Small SDP in the six auxiliaries: proximal objective subject to the CRB
// LMI and the SIC coupling row, at fixed theta.
void xi_update(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
               const RisOptions& opts = {});

// Majorize-minimize update of theta under |theta_m| = 1 with the linearized
// SINR/EH/SIC hinge penalties; returns the achieved objective value and
// optionally the per-round objective trace.
double theta_update(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
                    double margin_target, const RisOptions& opts = {},
                    std::vector<double>* mm_trace = nullptr);

// Same machinery for the three splitting vectors.
void vartheta_updates(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
                      const RisOptions& opts = {});

// Scaled dual ascent on the consensus residuals.
void dual_update(AdmmState& state, const GCoefficients& gc);

struct RisDiagnostics {
  int sweeps = 0;
  bool converged = false;
  double best_margin = 0.0;
  std::vector<double> residual_trace;  // consensus residual per sweep
  std::vector<double> margin_trace;    // replayed min margin per sweep
};

// Outer ADMM loop; returns the best-feasibility unit-modulus phase found.
RisPhase solve_ris(const ChannelSet& ch, const BeamformingSet& bf, const DecodingOrder& order,
                   const PowerSplit& ps, const ScenarioConfig& cfg, const RisPhase& theta_init,
                   const RisOptions& opts = {}, RisDiagnostics* diag = nullptr);

}  // namespace iscpt
