#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "iscpt/common.hpp"
#include "iscpt/rng.hpp"

namespace iscpt {

// Problem instance: geometry, propagation constants, thresholds, budgets.
// Per-user quantities are stored as length-K vectors; the text config format
// accepts either a scalar (broadcast to all users) or a comma list.
struct ScenarioConfig {
  int n_tx = 8;        // transmit antennas N_T
  int n_rx = 8;        // receive antennas N_R (echo is processed on the
                       // transmit aperture in this model; kept for reporting)
  int n_ris = 16;      // RIS elements M
  int n_users = 3;     // IoT devices K, K < N_T
  int n_samples = 16;  // radar sample count N (the paper's L is the same count)

  Vec3 bs_pos{0.0, 0.0, 15.0};
  Vec3 ris_pos{25.0, 25.0, 15.0};
  double user_region_radius = 50.0;  // users uniform on a ground disk at origin
  Vec3 target_center{0.0, 40.0, 0.0};
  double target_region_radius = 30.0;

  double pathloss_exp_bs_ris = 3.0;    // alpha_G
  double pathloss_exp_ris_user = 2.2;  // alpha_u
  double ref_pathloss_db = -20.0;      // power gain at 1 m
  double rician_bs_ris = 2.0;          // beta, linear
  double rician_ris_user = 2.0;        // beta_u, linear

  Cplx rcs{1.0, 0.0};  // target reflection coefficient alpha

  RVec noise_rf;        // sigma_k^2 per user [W]
  RVec noise_baseband;  // sigma_bar_k^2 (= delta_k^2) per user [W]
  double noise_radar = 1e-16;  // sigma_s^2 (= sigma_r^2) [W], post-integration floor

  RVec eh_efficiency;   // eta_k in (0,1]
  RVec sinr_threshold;  // gamma_k [bit/s/Hz]
  RVec eh_threshold;    // Q_k [W]

  double crb_limit = 2.0;        // epsilon [rad^2]
  double power_budget = 2000.0;  // P_T [W]
  std::uint64_t rng_seed = 1;

  // Broadcast helpers used by presets and the config parser.
  void resize_per_user();
  void validate() const;
};

// Desk-scale default used by tests and the CLI: N_T=8, M=16, K=3, N=16.
ScenarioConfig desk_scenario();

// Full-scale setup with the published constants (N_T=M=64, K=4).
ScenarioConfig paper_scenario();

// Realized channels of one coherence block.
struct ChannelSet {
  CMat g_bs_ris;                 // G, M x N_T
  std::vector<CVec> h_ris_user;  // h_u,k, each length M
  CVec h_ris_target;             // h_s, length M (pure LoS)
  Cplx rcs{0.0, 0.0};
  double target_angle = 0.0;  // phi_DoA [rad]

  void validate_against(const ScenarioConfig& cfg) const;
};

struct Placement {
  std::vector<Vec3> user_positions;
  Vec3 target_position;
};

// Array response a_n(angle), entry m = exp(-j m pi sin(angle)).
CVec steering_vector(int n_elems, double angle);

// Linear power gain 10^(ref_db/10) * d^(-exponent); amplitude gains used in
// the channel mixers are the square root of this.
double pathloss_linear(double distance_m, double exponent, double ref_db);

// Azimuth of `to` as seen from `from`, in the ground plane.
double azimuth(const Vec3& from, const Vec3& to);

// Uniform draws on the configured disks. Substream "placement" of cfg.rng_seed.
Placement place_users_and_target(const ScenarioConfig& cfg);

// Rician draws for G and h_u,k plus the LoS radar link. Substream "channels"
// of cfg.rng_seed; draw order: G NLoS, then h_u,k NLoS for k = 0..K-1.
ChannelSet sample_channels(const ScenarioConfig& cfg, const std::vector<Vec3>& user_positions,
                           const Vec3& target_position);

// Convenience: placement + channels from cfg.rng_seed.
ChannelSet sample_scenario(const ScenarioConfig& cfg, Placement* placement_out = nullptr);

// Flat key/value scenario files ("key = value", '#' comments). Unknown keys
// are an error. Units match the struct fields (meters, Watts, dB where named).
ScenarioConfig load_scenario_file(const std::string& path);
ScenarioConfig parse_scenario_text(std::istream& in, const ScenarioConfig& base);
void write_scenario_file(const ScenarioConfig& cfg, const std::string& path);

}  // namespace iscpt
