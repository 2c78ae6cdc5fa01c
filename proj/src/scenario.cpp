#include "iscpt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace iscpt {

namespace {

RVec broadcast(double v, int k) { return RVec::Constant(k, v); }

void check_per_user(const RVec& v, int k, const std::string& name) {
  require(v.size() == k, "scenario: " + name + " must have one entry per user");
}

}  // namespace

void ScenarioConfig::resize_per_user() {
  auto fix = [this](RVec& v, double fallback) {
    if (v.size() == 0)
      v = broadcast(fallback, n_users);
    else if (v.size() != n_users)
      v = broadcast(v(0), n_users);
  };
  fix(noise_rf, 1e-10);
  fix(noise_baseband, 1e-10);
  fix(eh_efficiency, 0.7);
  fix(sinr_threshold, 1.0);
  fix(eh_threshold, 3e-10);
}

void ScenarioConfig::validate() const {
  require(n_tx >= 1 && n_rx >= 1 && n_ris >= 1 && n_users >= 1 && n_samples >= 1,
          "scenario: all counts must be >= 1");
  require(n_users < n_tx, "scenario: requires K < N_T");
  check_per_user(noise_rf, n_users, "noise_rf");
  check_per_user(noise_baseband, n_users, "noise_baseband");
  check_per_user(eh_efficiency, n_users, "eh_efficiency");
  check_per_user(sinr_threshold, n_users, "sinr_threshold");
  check_per_user(eh_threshold, n_users, "eh_threshold");
  require((noise_rf.array() > 0).all() && (noise_baseband.array() > 0).all() && noise_radar > 0,
          "scenario: noise variances must be positive");
  for (int k = 0; k < n_users; ++k) {
    require(eh_efficiency(k) > 0 && eh_efficiency(k) <= 1.0,
            "scenario: eh_efficiency must lie in (0,1]");
    require(sinr_threshold(k) >= 0 && eh_threshold(k) >= 0,
            "scenario: thresholds must be nonnegative");
  }
  require(crb_limit > 0, "scenario: crb_limit must be positive");
  require(power_budget > 0, "scenario: power_budget must be positive");
  require(rician_bs_ris >= 0 && rician_ris_user >= 0,
          "scenario: Rician factors must be nonnegative");
  require(user_region_radius >= 0 && target_region_radius >= 0,
          "scenario: region radii must be nonnegative");
}

ScenarioConfig desk_scenario() {
  ScenarioConfig cfg;
  cfg.resize_per_user();
  cfg.validate();
  return cfg;
}

ScenarioConfig paper_scenario() {
  ScenarioConfig cfg;
  cfg.n_tx = 64;
  cfg.n_rx = 64;
  cfg.n_ris = 64;
  cfg.n_users = 4;
  cfg.n_samples = 64;
  cfg.rician_bs_ris = db_to_linear(3.0);
  cfg.rician_ris_user = db_to_linear(3.0);
  cfg.rcs = Cplx(0.01, 0.0);
  cfg.noise_radar = dbm_to_watt(-70.0);
  cfg.noise_rf = broadcast(dbm_to_watt(-70.0), cfg.n_users);
  cfg.noise_baseband = broadcast(dbm_to_watt(-70.0), cfg.n_users);
  cfg.crb_limit = 1e-3;
  cfg.power_budget = 1.0;  // 30 dBm
  cfg.resize_per_user();
  cfg.validate();
  return cfg;
}

void ChannelSet::validate_against(const ScenarioConfig& cfg) const {
  require(g_bs_ris.rows() == cfg.n_ris && g_bs_ris.cols() == cfg.n_tx,
          "channels: G dimension mismatch");
  require(static_cast<int>(h_ris_user.size()) == cfg.n_users,
          "channels: user channel count mismatch");
  for (const auto& h : h_ris_user)
    require(h.size() == cfg.n_ris, "channels: h_u,k dimension mismatch");
  require(h_ris_target.size() == cfg.n_ris, "channels: h_s dimension mismatch");
}

CVec steering_vector(int n_elems, double angle) {
  require(n_elems >= 1, "steering_vector: n_elems must be >= 1");
  require(std::isfinite(angle), "steering_vector: angle must be finite");
  CVec a(n_elems);
  const double phase_step = kPi * std::sin(angle);
  for (int m = 0; m < n_elems; ++m) a(m) = std::polar(1.0, -phase_step * m);
  return a;
}

double pathloss_linear(double distance_m, double exponent, double ref_db) {
  require(distance_m > 0, "pathloss_linear: distance must be positive");
  return db_to_linear(ref_db) * std::pow(distance_m, -exponent);
}

double azimuth(const Vec3& from, const Vec3& to) {
  return std::atan2(to.y() - from.y(), to.x() - from.x());
}

Placement place_users_and_target(const ScenarioConfig& cfg) {
  cfg.validate();
  auto rng = RandomStream::substream(cfg.rng_seed, /*stream_id=*/0);
  Placement p;
  p.user_positions.reserve(cfg.n_users);
  auto disk_point = [&rng](const Vec3& center, double radius) {
    // r = R sqrt(u) gives a uniform density on the disk.
    const double r = radius * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return Vec3(center.x() + r * std::cos(phi), center.y() + r * std::sin(phi), center.z());
  };
  const Vec3 user_center(0.0, 0.0, 0.0);
  for (int k = 0; k < cfg.n_users; ++k)
    p.user_positions.push_back(disk_point(user_center, cfg.user_region_radius));
  p.target_position = disk_point(cfg.target_center, cfg.target_region_radius);
  return p;
}

ChannelSet sample_channels(const ScenarioConfig& cfg, const std::vector<Vec3>& user_positions,
                           const Vec3& target_position) {
  cfg.validate();
  require(static_cast<int>(user_positions.size()) == cfg.n_users,
          "sample_channels: user position count mismatch");
  auto rng = RandomStream::substream(cfg.rng_seed, /*stream_id=*/1);

  ChannelSet ch;
  const int m = cfg.n_ris;

  // BS -> RIS link.
  const double d_bs_ris = (cfg.ris_pos - cfg.bs_pos).norm();
  const double amp_g = std::sqrt(pathloss_linear(d_bs_ris, cfg.pathloss_exp_bs_ris, cfg.ref_pathloss_db));
  const double theta_dod = azimuth(cfg.bs_pos, cfg.ris_pos);
  const double theta_doa = azimuth(cfg.ris_pos, cfg.bs_pos);
  const CVec a_ris = steering_vector(m, theta_doa);
  const CVec a_bs = steering_vector(cfg.n_tx, theta_dod);
  const double beta = cfg.rician_bs_ris;
  const CMat g_los = a_ris * a_bs.transpose();
  const CMat g_nlos = rng.complex_normal_matrix(m, cfg.n_tx);
  ch.g_bs_ris = amp_g * (std::sqrt(beta / (beta + 1.0)) * g_los +
                         std::sqrt(1.0 / (beta + 1.0)) * g_nlos);

  // RIS -> user links.
  ch.h_ris_user.reserve(cfg.n_users);
  const double beta_u = cfg.rician_ris_user;
  for (int k = 0; k < cfg.n_users; ++k) {
    const double d = (user_positions[k] - cfg.ris_pos).norm();
    const double amp = std::sqrt(pathloss_linear(d, cfg.pathloss_exp_ris_user, cfg.ref_pathloss_db));
    const CVec los = steering_vector(m, azimuth(cfg.ris_pos, user_positions[k]));
    const CVec nlos = rng.complex_normal_vector(m);
    ch.h_ris_user.push_back(amp * (std::sqrt(beta_u / (beta_u + 1.0)) * los +
                                   std::sqrt(1.0 / (beta_u + 1.0)) * nlos));
  }

  // RIS -> target link, pure LoS; the RIS-side exponent is reused for the
  // unspecified radar link gain.
  const double d_t = (target_position - cfg.ris_pos).norm();
  const double alpha_s =
      std::sqrt(pathloss_linear(d_t, cfg.pathloss_exp_ris_user, cfg.ref_pathloss_db));
  ch.target_angle = azimuth(cfg.ris_pos, target_position);
  ch.h_ris_target = alpha_s * steering_vector(m, ch.target_angle);

  ch.rcs = cfg.rcs;
  ch.validate_against(cfg);
  return ch;
}

ChannelSet sample_scenario(const ScenarioConfig& cfg, Placement* placement_out) {
  Placement p = place_users_and_target(cfg);
  ChannelSet ch = sample_channels(cfg, p.user_positions, p.target_position);
  if (placement_out) *placement_out = p;
  return ch;
}

namespace {

RVec parse_list(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    vals.push_back(std::stod(item));
  }
  require(!vals.empty(), "scenario file: empty value list");
  RVec v(static_cast<Eigen::Index>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

Vec3 parse_vec3(const std::string& text) {
  RVec v = parse_list(text);
  require(v.size() == 3, "scenario file: expected 3 coordinates");
  return Vec3(v(0), v(1), v(2));
}

}  // namespace

ScenarioConfig parse_scenario_text(std::istream& in, const ScenarioConfig& base) {
  ScenarioConfig cfg = base;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    require(eq != std::string::npos,
            "scenario file: missing '=' on line " + std::to_string(line_no));
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    require(!key.empty() && !val.empty(),
            "scenario file: malformed entry on line " + std::to_string(line_no));

    if (key == "n_tx") cfg.n_tx = std::stoi(val);
    else if (key == "n_rx") cfg.n_rx = std::stoi(val);
    else if (key == "n_ris") cfg.n_ris = std::stoi(val);
    else if (key == "n_users") cfg.n_users = std::stoi(val);
    else if (key == "n_samples") cfg.n_samples = std::stoi(val);
    else if (key == "bs_pos") cfg.bs_pos = parse_vec3(val);
    else if (key == "ris_pos") cfg.ris_pos = parse_vec3(val);
    else if (key == "user_region_radius") cfg.user_region_radius = std::stod(val);
    else if (key == "target_center") cfg.target_center = parse_vec3(val);
    else if (key == "target_region_radius") cfg.target_region_radius = std::stod(val);
    else if (key == "pathloss_exp_bs_ris") cfg.pathloss_exp_bs_ris = std::stod(val);
    else if (key == "pathloss_exp_ris_user") cfg.pathloss_exp_ris_user = std::stod(val);
    else if (key == "ref_pathloss_db") cfg.ref_pathloss_db = std::stod(val);
    else if (key == "rician_bs_ris") cfg.rician_bs_ris = std::stod(val);
    else if (key == "rician_ris_user") cfg.rician_ris_user = std::stod(val);
    else if (key == "rcs_abs") cfg.rcs = std::polar(std::stod(val), std::arg(cfg.rcs));
    else if (key == "rcs_phase") cfg.rcs = std::polar(std::abs(cfg.rcs), std::stod(val));
    else if (key == "noise_rf") cfg.noise_rf = parse_list(val);
    else if (key == "noise_baseband") cfg.noise_baseband = parse_list(val);
    else if (key == "noise_radar") cfg.noise_radar = std::stod(val);
    else if (key == "eh_efficiency") cfg.eh_efficiency = parse_list(val);
    else if (key == "sinr_threshold") cfg.sinr_threshold = parse_list(val);
    else if (key == "eh_threshold") cfg.eh_threshold = parse_list(val);
    else if (key == "crb_limit") cfg.crb_limit = std::stod(val);
    else if (key == "power_budget") cfg.power_budget = std::stod(val);
    else if (key == "rng_seed") cfg.rng_seed = std::stoull(val);
    else
      throw std::invalid_argument("scenario file: unknown key '" + key + "' on line " +
                                  std::to_string(line_no));
  }
  cfg.resize_per_user();
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "scenario file: cannot open " + path);
  return parse_scenario_text(in, ScenarioConfig{});
}

void write_scenario_file(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "scenario file: cannot write " + path);
  auto list = [](const RVec& v) {
    std::ostringstream ss;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) ss << ",";
      ss << v(i);
    }
    return ss.str();
  };
  out << "# antenna/array sizes\n";
  out << "n_tx = " << cfg.n_tx << "\nn_rx = " << cfg.n_rx << "\nn_ris = " << cfg.n_ris
      << "\nn_users = " << cfg.n_users << "\nn_samples = " << cfg.n_samples << "\n";
  out << "# geometry [m]\n";
  out << "bs_pos = " << cfg.bs_pos.x() << "," << cfg.bs_pos.y() << "," << cfg.bs_pos.z() << "\n";
  out << "ris_pos = " << cfg.ris_pos.x() << "," << cfg.ris_pos.y() << "," << cfg.ris_pos.z()
      << "\n";
  out << "user_region_radius = " << cfg.user_region_radius << "\n";
  out << "target_center = " << cfg.target_center.x() << "," << cfg.target_center.y() << ","
      << cfg.target_center.z() << "\n";
  out << "target_region_radius = " << cfg.target_region_radius << "\n";
  out << "# propagation\n";
  out << "pathloss_exp_bs_ris = " << cfg.pathloss_exp_bs_ris << "\n";
  out << "pathloss_exp_ris_user = " << cfg.pathloss_exp_ris_user << "\n";
  out << "ref_pathloss_db = " << cfg.ref_pathloss_db << "\n";
  out << "rician_bs_ris = " << cfg.rician_bs_ris << "\n";
  out << "rician_ris_user = " << cfg.rician_ris_user << "\n";
  out << "rcs_abs = " << std::abs(cfg.rcs) << "\nrcs_phase = " << std::arg(cfg.rcs) << "\n";
  out << "# noise [W] and thresholds\n";
  out << "noise_rf = " << list(cfg.noise_rf) << "\n";
  out << "noise_baseband = " << list(cfg.noise_baseband) << "\n";
  out << "noise_radar = " << cfg.noise_radar << "\n";
  out << "eh_efficiency = " << list(cfg.eh_efficiency) << "\n";
  out << "sinr_threshold = " << list(cfg.sinr_threshold) << "\n";
  out << "eh_threshold = " << list(cfg.eh_threshold) << "\n";
  out << "crb_limit = " << cfg.crb_limit << "\n";
  out << "power_budget = " << cfg.power_budget << "\n";
  out << "rng_seed = " << cfg.rng_seed << "\n";
}

}  // namespace iscpt
