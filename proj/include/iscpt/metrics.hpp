#pragma once

#include <optional>
#include <vector>

#include "iscpt/scenario.hpp"

namespace iscpt {

// Diagonal of the RIS reflection matrix; entries must stay unit modulus.
struct RisPhase {
  CVec theta;

  static RisPhase ones(int m) { return RisPhase{CVec::Ones(m)}; }
  void validate(double tol = 1e-9) const;
};

// Beamformers w_k, optionally with lifted matrices W_k = w_k w_k^H.
struct BeamformingSet {
  std::vector<CVec> w;
  std::vector<CMat> lifted;  // empty or one PSD matrix per user

  static BeamformingSet zeros(int k, int n_tx);
  bool has_lifted() const { return !lifted.empty(); }
  void validate(double rel_tol = 1e-6) const;
};

// d[k] = 0-based position of user k in the SIC decoding sequence.
struct DecodingOrder {
  std::vector<int> d;

  static DecodingOrder identity(int k);
  void validate() const;
  bool decoded_before(int j, int k) const { return d[j] < d[k]; }
};

struct PowerSplit {
  RVec rho;

  static PowerSplit uniform(int k, double value = 0.5) { return PowerSplit{RVec::Constant(k, value)}; }
  void validate() const;
};

// Fisher information blocks over (theta, Re alpha, Im alpha) and the
// resulting angle CRB.
struct FimRecord {
  double f_tt = 0.0;                                  // F_theta,theta
  Eigen::RowVector2d f_ta = Eigen::RowVector2d::Zero();  // F_theta,alpha
  Eigen::Matrix2d f_aa = Eigen::Matrix2d::Zero();        // F_alpha,alpha
  double crb = 0.0;                                   // [rad^2]

  Eigen::Matrix3d full() const;
};

// |h^H diag(theta) G w|^2.
double effective_gain(const CVec& h, const RisPhase& theta, const CMat& g, const CVec& w);

// Composite BS->user channel through the RIS: G^H Theta^H h.
CVec composite_channel(const CVec& h, const RisPhase& theta, const CMat& g);

// SINR of user k with interference from users decoded after k.
double sinr(int k, const DecodingOrder& order, const ChannelSet& ch, const RisPhase& theta,
            const BeamformingSet& bf, const PowerSplit& ps, const ScenarioConfig& cfg);

// Numerator convention for the cross-decoding SINR. The printed equation
// shows the decoder's own beam; SIC semantics require the decoded stream's
// beam, which is the default. Both are available for auditing.
enum class CrossSinrNumerator { decoded_stream, own_stream };

// SINR at user k_strong while decoding user k_weak's stream. Requires
// d(k_weak) <= d(k_strong).
double cross_sinr(int k_strong, int k_weak, const DecodingOrder& order, const ChannelSet& ch,
                  const RisPhase& theta, const BeamformingSet& bf, const PowerSplit& ps,
                  const ScenarioConfig& cfg,
                  CrossSinrNumerator numerator = CrossSinrNumerator::decoded_stream);

// eta_k (1-rho_k) (sum_k' |h_k^H Theta G w_k'|^2 + sigma_k^2) [W].
double harvested_power(int k, const ChannelSet& ch, const RisPhase& theta,
                       const BeamformingSet& bf, const PowerSplit& ps,
                       const ScenarioConfig& cfg);

// Entry m = -j m pi cos(angle); elementwise derivative factor of a steering
// vector with respect to its angle.
CVec angle_derivative_mask(int m, double angle);

// Sensing operators shared by the FIM evaluation and the beamforming SDP:
// H_t = G^H Theta^H h_s h_s^H Theta G and its angle derivative H_tilde.
struct SensingOperators {
  CMat h_t;      // N_T x N_T, Hermitian PSD rank one
  CMat h_tilde;  // N_T x N_T, Hermitian
  double fim_scale = 0.0;  // 2N / sigma_s^2
  Cplx rcs{0.0, 0.0};

  static SensingOperators build(const ChannelSet& ch, const RisPhase& theta,
                                const ScenarioConfig& cfg);

  // FIM blocks from the three scalar traces over sum_k W_k.
  FimRecord fim_from_traces(double tr_tilde, double tr_plain, Cplx tr_cross) const;
};

FimRecord fim(const ChannelSet& ch, const RisPhase& theta, const BeamformingSet& bf,
              const ScenarioConfig& cfg);

// 1 / (F_tt - F_ta F_aa^-1 F_ta^T); throws if the Schur complement is not
// positive.
double crb(const FimRecord& record);

// Relative slack of every constraint of the master problem, evaluated with
// the exact nonlinear metrics. Positive means satisfied with margin.
struct ConstraintReplay {
  RVec qos;        // sinr_k / (2^gamma_k - 1) - 1, users with gamma_k > 0
  RVec eh;         // E_k / Q_k - 1, users with Q_k > 0
  RVec sic;        // cross/own - 1 per ordered pair with d(k) < d(kbar)
  double crb_margin = 0.0;  // epsilon / crb - 1
  double power_margin = 0.0;  // 1 - sum ||w||^2 / P_T
  double min_slack = 0.0;

  bool feasible(double tol = 1e-4) const { return min_slack >= -tol; }
};

ConstraintReplay replay_constraints(const ChannelSet& ch, const RisPhase& theta,
                                    const BeamformingSet& bf, const PowerSplit& ps,
                                    const DecodingOrder& order, const ScenarioConfig& cfg);

}  // namespace iscpt
