#include "iscpt/bcd.hpp"

#include <chrono>
#include <cmath>

namespace iscpt {

double total_power(const BeamformingSet& bf) {
  double acc = 0.0;
  for (const CVec& w : bf.w) acc += w.squaredNorm();
  return acc;
}

namespace {

double min_feasibility_margin(const ConstraintReplay& rep) {
  double m = std::min(rep.crb_margin, rep.power_margin);
  for (Eigen::Index i = 0; i < rep.qos.size(); ++i) m = std::min(m, rep.qos(i));
  for (Eigen::Index i = 0; i < rep.eh.size(); ++i) m = std::min(m, rep.eh(i));
  for (Eigen::Index i = 0; i < rep.sic.size(); ++i) m = std::min(m, rep.sic(i));
  return m;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DecodingOrder channel_norm_order(const ChannelSet& ch, const ScenarioConfig& cfg) {
  std::vector<int> idx(cfg.n_users);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&ch](int a, int b) {
    return ch.h_ris_user[a].squaredNorm() < ch.h_ris_user[b].squaredNorm();
  });
  DecodingOrder order;
  order.d.resize(cfg.n_users);
  for (int pos = 0; pos < cfg.n_users; ++pos) order.d[idx[pos]] = pos;
  return order;
}

}  // namespace

Solution minimize_power(const ScenarioConfig& cfg, const ChannelSet& ch,
                        const std::optional<Solution>& init, const DriverOptions& opts) {
  cfg.validate();
  ch.validate_against(cfg);

  Solution sol;
  sol.theta = init ? init->theta : RisPhase::ones(cfg.n_ris);
  sol.order = init ? init->order : channel_norm_order(ch, cfg);
  sol.ps = init ? init->ps : PowerSplit::uniform(cfg.n_users, 0.5);
  bool have_beams = init && !init->bf.w.empty();
  if (have_beams) sol.bf = init->bf;

  double obj_prev = std::numeric_limits<double>::infinity();
  bool order_changed_last_sweep = false;

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    SweepRecord rec;
    rec.sweep = sweep;

    // Block 1: transmit beamforming. A fresh expansion point is used on the
    // first sweep and after a decoding-order change.
    auto t0 = std::chrono::steady_clock::now();
    try {
      BeamformingSet w_init;
      if (have_beams && !order_changed_last_sweep) {
        w_init = sol.bf;
      } else {
        w_init = initial_beamformers(ch, sol.theta, sol.order, sol.ps, cfg);
      }
      BeamformingSet candidate =
          solve_beamforming(ch, sol.theta, sol.order, sol.ps, cfg, w_init, opts.beamforming);
      const double cand_power = total_power(candidate);
      const ConstraintReplay rep =
          replay_constraints(ch, sol.theta, candidate, sol.ps, sol.order, cfg);
      // The first usable beams are always adopted; afterwards a candidate
      // must stay feasible and must not increase the objective.
      if (!have_beams || order_changed_last_sweep ||
          (rep.feasible(1e-4) && cand_power <= total_power(sol.bf) * (1.0 + 1e-9))) {
        sol.bf = std::move(candidate);
        have_beams = true;
      }
    } catch (const std::exception&) {
      // keep the previous beams
    }
    rec.beamforming_seconds = seconds_since(t0);
    order_changed_last_sweep = false;

    if (!have_beams) {
      if (sweep == 1) {
        sol.status = SolveOutcome::infeasible;
        sol.iterations = 1;
        return sol;
      }
      break;
    }

    // Block 2: RIS phase, accepted only when the replayed margin improves.
    t0 = std::chrono::steady_clock::now();
    if (opts.optimize_ris) {
      const double margin_now =
          min_feasibility_margin(replay_constraints(ch, sol.theta, sol.bf, sol.ps, sol.order, cfg));
      RisDiagnostics ris_diag;
      const RisPhase candidate =
          solve_ris(ch, sol.bf, sol.order, sol.ps, cfg, sol.theta, opts.ris, &ris_diag);
      const double margin_new =
          min_feasibility_margin(replay_constraints(ch, candidate, sol.bf, sol.ps, sol.order, cfg));
      if (margin_new >= margin_now - 1e-9) sol.theta = candidate;
    }
    rec.ris_seconds = seconds_since(t0);

    // Block 3: SIC decoding order from the MM-maximized integrated gains.
    t0 = std::chrono::steady_clock::now();
    if (opts.optimize_order) {
      const DecodingOrder candidate = optimize_sic_order(ch, cfg, sol.theta);
      if (candidate.d != sol.order.d) {
        // Adopt only if the power-split stage can restore feasibility under
        // the new order.
        try {
          const PowerSplit ps_new =
              solve_ps_ratio(ch, sol.theta, sol.bf, candidate, cfg, sol.ps, opts.ps);
          const ConstraintReplay rep =
              replay_constraints(ch, sol.theta, sol.bf, ps_new, candidate, cfg);
          if (rep.feasible(1e-4)) {
            sol.order = candidate;
            sol.ps = ps_new;
            order_changed_last_sweep = true;
          }
        } catch (const std::exception&) {
          // keep the previous order
        }
      }
    }
    rec.order_seconds = seconds_since(t0);

    // Block 4: power splitting.
    t0 = std::chrono::steady_clock::now();
    try {
      const PowerSplit candidate = solve_ps_ratio(ch, sol.theta, sol.bf, sol.order, cfg, sol.ps, opts.ps);
      const double margin_now =
          min_feasibility_margin(replay_constraints(ch, sol.theta, sol.bf, sol.ps, sol.order, cfg));
      const double margin_new =
          min_feasibility_margin(replay_constraints(ch, sol.theta, sol.bf, candidate, sol.order, cfg));
      if (margin_new >= std::min(margin_now, -1e-9)) sol.ps = candidate;
    } catch (const std::exception&) {
      // keep the previous split
    }
    rec.ps_seconds = seconds_since(t0);

    const double obj = total_power(sol.bf);
    sol.trace.push_back(obj);
    sol.iterations = sweep;

    const ConstraintReplay rep =
        replay_constraints(ch, sol.theta, sol.bf, sol.ps, sol.order, cfg);
    rec.objective = obj;
    rec.min_slack = rep.min_slack;
    rec.crb_margin = rep.crb_margin;
    rec.qos_margin = rep.qos.size() ? rep.qos.minCoeff() : 0.0;
    rec.eh_margin = rep.eh.size() ? rep.eh.minCoeff() : 0.0;
    rec.sic_margin = rep.sic.size() ? rep.sic.minCoeff() : 0.0;
    if (opts.on_sweep) opts.on_sweep(rec);

    if (std::abs(obj_prev - obj) <= opts.objective_tol && !order_changed_last_sweep) {
      sol.status = rep.feasible(1e-4) ? SolveOutcome::converged : SolveOutcome::infeasible;
      break;
    }
    obj_prev = obj;
    if (sweep == opts.max_sweeps) sol.status = SolveOutcome::max_iter;
  }

  sol.objective = total_power(sol.bf);
  return sol;
}

ComplexityEstimate complexity_estimate(const ScenarioConfig& cfg, int k_admm) {
  ComplexityEstimate est;
  est.beamforming = std::pow(cfg.n_tx + 1.0, 3.5);
  est.ris = static_cast<double>(k_admm) * std::pow(cfg.n_ris, 3.0);
  est.order = cfg.n_ris;
  est.ps = std::pow(cfg.n_users, 3.5);
  est.per_sweep = est.beamforming + est.ris + est.order + est.ps;
  return est;
}

}  // namespace iscpt
