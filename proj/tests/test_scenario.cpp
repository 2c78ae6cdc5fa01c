#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "iscpt/parallel.hpp"
#include "iscpt/scenario.hpp"

#include <sstream>

using namespace iscpt;

TEST_CASE("steering vector closed forms") {
  const CVec single = steering_vector(1, 0.7);
  CHECK(single.size() == 1);
  CHECK(std::abs(single(0) - Cplx(1.0, 0.0)) < 1e-15);

  const CVec flat = steering_vector(4, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(flat(i) - Cplx(1.0, 0.0)) < 1e-15);

  // sin(pi/2) = 1: entries 1, e^{-j pi}, e^{-j 2 pi}.
  const CVec broadside = steering_vector(3, kPi / 2.0);
  CHECK(std::abs(broadside(0) - Cplx(1.0, 0.0)) < 1e-12);
  CHECK(std::abs(broadside(1) - Cplx(-1.0, 0.0)) < 1e-12);
  CHECK(std::abs(broadside(2) - Cplx(1.0, 0.0)) < 1e-12);
}

TEST_CASE("steering vector entries stay unit modulus") {
  RandomStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 24);
    const CVec a = steering_vector(n, rng.uniform(-kPi, kPi));
    for (int m = 0; m < n; ++m) CHECK(std::abs(std::abs(a(m)) - 1.0) <= 1e-12);
  }
}

TEST_CASE("pathloss reference values") {
  CHECK(pathloss_linear(1.0, 3.0, -20.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(pathloss_linear(1.0, 7.7, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pathloss_linear(10.0, 2.2, -20.0) ==
        doctest::Approx(0.01 * std::pow(10.0, -2.2)).epsilon(1e-12));
  CHECK_THROWS_AS(pathloss_linear(0.0, 2.0, -20.0), std::invalid_argument);
}

TEST_CASE("placement stays inside regions and radius-0 collapses") {
  ScenarioConfig cfg = desk_scenario();
  cfg.rng_seed = 42;
  const Placement p = place_users_and_target(cfg);
  for (const auto& u : p.user_positions) {
    CHECK(u.head<2>().norm() <= cfg.user_region_radius + 1e-9);
    CHECK(u.z() == 0.0);
  }
  CHECK((p.target_position - cfg.target_center).norm() <= cfg.target_region_radius + 1e-9);

  cfg.user_region_radius = 0.0;
  const Placement collapsed = place_users_and_target(cfg);
  for (const auto& u : collapsed.user_positions) CHECK(u.head<2>().norm() < 1e-12);
}

TEST_CASE("uniform disk mean radial distance is 2R/3") {
  // Independent oracle: E[r] for uniform density on a disk of radius R is
  // (2/3) R. 1e5 draws, 1% tolerance.
  ScenarioConfig cfg = desk_scenario();
  cfg.n_users = 1;
  cfg.resize_per_user();
  const int draws = 100000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    cfg.rng_seed = 1000 + i;
    acc += place_users_and_target(cfg).user_positions[0].head<2>().norm();
  }
  const double mean = acc / draws;
  CHECK(mean == doctest::Approx(2.0 / 3.0 * cfg.user_region_radius).epsilon(0.01));
}

TEST_CASE("channel sampling is reproducible bit for bit") {
  ScenarioConfig cfg = desk_scenario();
  cfg.rng_seed = 9;
  Placement p1, p2;
  const ChannelSet a = sample_scenario(cfg, &p1);
  const ChannelSet b = sample_scenario(cfg, &p2);
  CHECK(a.g_bs_ris == b.g_bs_ris);
  for (int k = 0; k < cfg.n_users; ++k) CHECK(a.h_ris_user[k] == b.h_ris_user[k]);
  CHECK(a.h_ris_target == b.h_ris_target);
  CHECK(p1.target_position == p2.target_position);
}

TEST_CASE("radar link is pure LoS with constant magnitude") {
  ScenarioConfig cfg = desk_scenario();
  const ChannelSet ch = sample_scenario(cfg);
  const double mag0 = std::abs(ch.h_ris_target(0));
  for (int m = 0; m < cfg.n_ris; ++m)
    CHECK(std::abs(ch.h_ris_target(m)) == doctest::Approx(mag0).epsilon(1e-12));
  // ||h_s||^2 = M |alpha_s|^2 exactly.
  CHECK(ch.h_ris_target.squaredNorm() ==
        doctest::Approx(cfg.n_ris * mag0 * mag0).epsilon(1e-12));
}

TEST_CASE("Rician factor limit recovers the LoS outer product") {
  ScenarioConfig cfg = desk_scenario();
  cfg.rician_bs_ris = 1e12;
  const Placement p = place_users_and_target(cfg);
  const ChannelSet ch = sample_channels(cfg, p.user_positions, p.target_position);
  const double amp =
      std::sqrt(pathloss_linear((cfg.ris_pos - cfg.bs_pos).norm(), cfg.pathloss_exp_bs_ris,
                                cfg.ref_pathloss_db));
  const CMat los = amp * steering_vector(cfg.n_ris, azimuth(cfg.ris_pos, cfg.bs_pos)) *
                   steering_vector(cfg.n_tx, azimuth(cfg.bs_pos, cfg.ris_pos)).transpose();
  CHECK((ch.g_bs_ris - los).norm() / los.norm() < 1e-5);
}

TEST_CASE("Rician mixing preserves average power") {
  // Monte-Carlo oracle of E||G||_F^2 = a_G^2 M N_T and E||h_u||^2 = a_u^2 M,
  // 10^4 draws within 2%.
  ScenarioConfig cfg = desk_scenario();
  cfg.n_users = 1;
  cfg.rician_bs_ris = 1.0;
  cfg.rician_ris_user = 1.0;
  cfg.resize_per_user();
  const Placement p = place_users_and_target(cfg);

  const int draws = 10000;
  std::vector<double> g_power(draws), h_power(draws);
  parallel_for(draws, [&](long i) {
    ScenarioConfig local = cfg;
    local.rng_seed = 50000 + i;
    const ChannelSet ch = sample_channels(local, p.user_positions, p.target_position);
    g_power[i] = ch.g_bs_ris.squaredNorm();
    h_power[i] = ch.h_ris_user[0].squaredNorm();
  });
  double g_mean = 0.0, h_mean = 0.0;
  for (int i = 0; i < draws; ++i) {
    g_mean += g_power[i];
    h_mean += h_power[i];
  }
  g_mean /= draws;
  h_mean /= draws;

  const double ag2 = pathloss_linear((cfg.ris_pos - cfg.bs_pos).norm(), cfg.pathloss_exp_bs_ris,
                                     cfg.ref_pathloss_db);
  const double au2 = pathloss_linear((p.user_positions[0] - cfg.ris_pos).norm(),
                                     cfg.pathloss_exp_ris_user, cfg.ref_pathloss_db);
  CHECK(g_mean == doctest::Approx(ag2 * cfg.n_ris * cfg.n_tx).epsilon(0.02));
  CHECK(h_mean == doctest::Approx(au2 * cfg.n_ris).epsilon(0.02));
}

TEST_CASE("serial and parallel channel batches agree exactly") {
  ScenarioConfig cfg = desk_scenario();
  const Placement p = place_users_and_target(cfg);
  const int draws = 64;
  auto run = [&](bool parallel) {
    set_parallel_enabled(parallel);
    std::vector<double> out(draws);
    parallel_for(draws, [&](long i) {
      ScenarioConfig local = cfg;
      local.rng_seed = 10 + i;
      out[i] = sample_channels(local, p.user_positions, p.target_position).g_bs_ris.squaredNorm();
    });
    set_parallel_enabled(true);
    return out;
  };
  CHECK(run(false) == run(true));
}

TEST_CASE("scenario config file round trip and unknown key rejection") {
  ScenarioConfig cfg = desk_scenario();
  cfg.sinr_threshold(1) = 2.5;
  cfg.rng_seed = 77;
  write_scenario_file(cfg, "scenario_roundtrip.txt");
  const ScenarioConfig back = load_scenario_file("scenario_roundtrip.txt");
  CHECK(back.n_tx == cfg.n_tx);
  CHECK(back.sinr_threshold(1) == doctest::Approx(2.5));
  CHECK(back.rng_seed == cfg.rng_seed);

  std::istringstream bad("n_tx = 8\nwarp_factor = 9\n");
  CHECK_THROWS_AS(parse_scenario_text(bad, ScenarioConfig{}), std::invalid_argument);
}

TEST_CASE("config invariants rejected") {
  ScenarioConfig cfg = desk_scenario();
  cfg.n_users = cfg.n_tx;  // violates K < N_T
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  ScenarioConfig cfg2 = desk_scenario();
  cfg2.eh_efficiency(0) = 1.5;
  CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
}
