#pragma once

#include <optional>

#include "iscpt/conic.hpp"
#include "iscpt/metrics.hpp"

namespace iscpt {

// Auxiliaries of the CRB Schur-complement reformulation: zeta >= 1/epsilon at
// feasibility and [[zeta1, zeta2], [zeta2^T, zeta3]] PSD.
struct CrbAuxiliaries {
  double zeta = 0.0;
  double zeta1 = 0.0;
  Eigen::RowVector2d zeta2 = Eigen::RowVector2d::Zero();
  Eigen::Matrix2d zeta3 = Eigen::Matrix2d::Zero();
};

// Expansion-point state across SCA rounds.
struct ScaState {
  BeamformingSet w_prev;
  int iteration = 0;
  std::vector<double> obj_history;
};

// Assembled SDP for one SCA round plus the variable layout needed to read the
// solution back.
struct SdrProblem {
  ConicProblem problem;
  CMat basis;  // lifted variables live as B C B^H on this orthonormal span
  std::vector<HermitianVarBlock> w_blocks;
  int zeta_index = -1;  // -1 when the CRB constraint is inactive
  double zeta_scale_tt = 1.0;  // FIM rows are carried in these units
  double zeta_scale_aa = 1.0;
  // Scaled affine forms of F_tt (zeta term excluded), F_ta(0), F_ta(1), F_aa;
  // kept so the auxiliaries can be read back from a solution.
  std::vector<LinearRow> fim_rows;
  int psd_block_count = 0;

  std::vector<CMat> extract_lifted(const ConicSolution& sol) const;
  CrbAuxiliaries extract_aux(const ConicSolution& sol) const;
};

// Problem (power minimization over lifted beamformers) around the expansion
// point sca.w_prev: CRB Schur block + FIM couplings, QoS rows, one rotated
// 2x2 LMI per SIC pair (exact at the expansion point), EH rows, PSD lifts,
// power budget.
SdrProblem build_sdr_problem(const ChannelSet& ch, const RisPhase& theta,
                             const DecodingOrder& order, const PowerSplit& ps,
                             const ScenarioConfig& cfg, const ScaState& sca);

// Margin-maximizing SDR over QoS/EH at full budget, without CRB rows; used to
// seed the SCA expansion point.
BeamformingSet initial_beamformers(const ChannelSet& ch, const RisPhase& theta,
                                   const DecodingOrder& order, const PowerSplit& ps,
                                   const ScenarioConfig& cfg);

struct BeamformingOptions {
  int max_sca_rounds = 30;
  double obj_tol = 1e-5;
  ConicSettings conic;

  BeamformingOptions() {
    conic.tol = 1e-6;
    conic.max_iter = 80000;
  }
};

struct BeamformingDiagnostics {
  std::vector<double> obj_history;
  int sca_rounds = 0;
  double eigen_ratio_min = 1.0;  // min over users of lambda_1 / tr
  bool randomization_used = false;
};

// SCA loop over build_sdr_problem + conic solve, then rank-one recovery.
// Throws "subproblem infeasible" when the first round cannot be solved.
BeamformingSet solve_beamforming(const ChannelSet& ch, const RisPhase& theta,
                                 const DecodingOrder& order, const PowerSplit& ps,
                                 const ScenarioConfig& cfg, const BeamformingSet& w_init,
                                 const BeamformingOptions& opts = {},
                                 BeamformingDiagnostics* diag = nullptr);

// Context for the Gaussian-randomization fallback of rank-one recovery.
struct RankOneContext {
  const ChannelSet* ch = nullptr;
  const RisPhase* theta = nullptr;
  const DecodingOrder* order = nullptr;
  const PowerSplit* ps = nullptr;
  const ScenarioConfig* cfg = nullptr;
  const std::vector<CMat>* lifted = nullptr;  // all users' solved matrices
  int user = 0;
  std::uint64_t seed = 0;
  int candidates = 1000;
};

double eigen_ratio(const CMat& w);

// Joint recovery for a full solved set: principal components when every
// matrix is near rank one (with a feasibility rescale), otherwise one joint
// Gaussian randomization so all users' beams come from the same candidate.
std::vector<CVec> recover_beamformers(const std::vector<CMat>& lifted,
                                      const RankOneContext& ctx);

// Principal-component extraction when lambda_1 / tr >= 0.999; otherwise
// Gaussian randomization over `candidates` draws, each candidate set rescaled
// jointly until QoS/EH/CRB hold, minimum-power feasible candidate returned.
// Throws "rank-one recovery failed" when no candidate is feasible.
CVec extract_rank_one(const CMat& w, const RankOneContext* ctx = nullptr);

}  // namespace iscpt
