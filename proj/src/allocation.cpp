#include "iscpt/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iscpt {

GainLedger GainLedger::build(const ChannelSet& ch, const ScenarioConfig& cfg) {
  GainLedger ledger;
  const CMat gram = ch.g_bs_ris * ch.g_bs_ris.adjoint();
  for (int k = 0; k < cfg.n_users; ++k) {
    const CVec& h = ch.h_ris_user[k];
    ledger.lambda.push_back(
        CMat((h.conjugate().asDiagonal() * gram * h.asDiagonal()).transpose()));
  }
  return ledger;
}

double GainLedger::gain(int k, const CVec& theta) const {
  return (theta.adjoint() * lambda[k] * theta)(0).real();
}

double GainLedger::total_gain(const CVec& theta) const {
  double acc = 0.0;
  for (size_t k = 0; k < lambda.size(); ++k) acc += gain(static_cast<int>(k), theta);
  return acc;
}

double GainLedger::surrogate(const CVec& theta, const CVec& theta_t) const {
  // Per-term bound around theta_t with the Frobenius-norm-squared shift the
  // closed-form step uses; exact at theta = theta_t.
  const double m = static_cast<double>(theta.size());
  double acc = 0.0;
  for (const CMat& lam : lambda) {
    const double c = lam.squaredNorm();
    acc += c * m;
    acc += 2.0 * (theta_t.adjoint() * (lam * theta - c * theta))(0).real();
    acc += (theta_t.adjoint() * (c * theta_t - lam * theta_t))(0).real();
  }
  return acc;
}

RisPhase mm_gain_step(const RisPhase& theta_t, const GainLedger& ledger) {
  theta_t.validate();
  const int m = static_cast<int>(theta_t.theta.size());
  auto align = [&](const CVec& coeff) {
    RisPhase out{CVec(m)};
    for (int i = 0; i < m; ++i)
      out.theta(i) = std::abs(coeff(i)) > 0.0 ? coeff(i) / std::abs(coeff(i)) : theta_t.theta(i);
    return out;
  };

  // Linear coefficient of the shifted surrogate. The squared-Frobenius shift
  // is negligible at physical channel scales; when it exceeds the top
  // eigenvalue it breaks the ascent guarantee, so the plain tangent step is
  // the fallback.
  CVec coeff = CVec::Zero(m);
  for (const CMat& lam : ledger.lambda)
    coeff += 2.0 * (lam * theta_t.theta - lam.squaredNorm() * theta_t.theta);
  RisPhase shifted = align(coeff);
  if (ledger.total_gain(shifted.theta) >= ledger.total_gain(theta_t.theta)) return shifted;

  CVec tangent = CVec::Zero(m);
  for (const CMat& lam : ledger.lambda) tangent += lam * theta_t.theta;
  return align(tangent);
}

DecodingOrder optimize_sic_order(const ChannelSet& ch, const ScenarioConfig& cfg,
                                 const RisPhase& theta_init, SicDiagnostics* diag) {
  theta_init.validate();
  const GainLedger ledger = GainLedger::build(ch, cfg);

  RisPhase theta = theta_init;
  RisPhase best = theta;
  double best_gain = ledger.total_gain(theta.theta);
  double prev_gain = best_gain;
  int it = 0;
  for (it = 1; it <= 100; ++it) {
    theta = mm_gain_step(theta, ledger);
    const double gain = ledger.total_gain(theta.theta);
    if (gain > best_gain) {
      best_gain = gain;
      best = theta;
    }
    if (std::abs(gain - prev_gain) <= 1e-6 * (1.0 + std::abs(gain))) break;
    prev_gain = gain;
  }

  RVec gains(cfg.n_users);
  for (int k = 0; k < cfg.n_users; ++k) gains(k) = ledger.gain(k, best.theta);

  // Ascending gain decoded first: the strongest integrated channel is
  // decoded last. Ties broken by user index.
  std::vector<int> idx(cfg.n_users);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&gains](int a, int b) { return gains(a) < gains(b); });
  DecodingOrder order;
  order.d.resize(cfg.n_users);
  for (int pos = 0; pos < cfg.n_users; ++pos) order.d[idx[pos]] = pos;
  order.validate();

  if (diag) {
    diag->iterations = it;
    diag->best_gain = best_gain;
    diag->gains = gains;
    diag->theta_best = best.theta;
  }
  return order;
}

PowerSplit solve_ps_ratio(const ChannelSet& ch, const RisPhase& theta, const BeamformingSet& bf,
                          const DecodingOrder& order, const ScenarioConfig& cfg,
                          const PowerSplit& rho_init, const PsOptions& opts) {
  order.validate();
  rho_init.validate();
  const int k_users = cfg.n_users;

  // Effective gains at fixed beams and phase.
  RMat gains(k_users, k_users);  // gains(k, j) = |h_k^H Theta G w_j|^2
  for (int k = 0; k < k_users; ++k)
    for (int j = 0; j < k_users; ++j)
      gains(k, j) = effective_gain(ch.h_ris_user[k], theta, ch.g_bs_ris, bf.w[j]);

  auto interference = [&](int user, int after) {
    double acc = 0.0;
    for (int j = 0; j < k_users; ++j)
      if (order.d[j] > order.d[after]) acc += gains(user, j);
    return acc;
  };

  struct SicRow {
    int weak, strong;
    double n_weak, n_strong;  // gains(k, w_k), gains(kbar, w_k)
    double rhs;               // order-fixed right-hand side
  };
  std::vector<SicRow> sic_rows;
  for (int k = 0; k < k_users; ++k) {
    if (cfg.sinr_threshold(k) <= 0.0) continue;
    for (int kb = 0; kb < k_users; ++kb) {
      if (order.d[k] >= order.d[kb]) continue;
      SicRow row;
      row.weak = k;
      row.strong = kb;
      row.n_weak = gains(k, k);
      row.n_strong = gains(kb, k);
      row.rhs = row.n_strong * (interference(k, k) + cfg.noise_rf(k)) -
                row.n_weak * (interference(kb, k) + cfg.noise_rf(kb));
      sic_rows.push_back(row);
    }
  }

  RVec rho = rho_init.rho.cwiseMax(1e-6).cwiseMin(1.0 - 1e-6);
  bool solved_once = false;

  for (int round = 0; round < opts.max_rounds; ++round) {
    ConicProblem p;
    const int rho_base = p.add_vars(k_users);
    const int inv_base = p.add_vars(k_users);  // t_k >= 1 / rho_k
    const int margin = p.add_vars(1);
    p.set_objective(margin, -1.0);

    // Box rows with margin: rho_k >= m, 1 - rho_k >= m.
    for (int k = 0; k < k_users; ++k) {
      LinearRow lo;
      lo.add(rho_base + k, -1.0);
      lo.add(margin, 1.0);
      p.add_ineq(lo);
      LinearRow hi;
      hi.add(rho_base + k, 1.0);
      hi.add(margin, 1.0);
      hi.constant = 1.0;
      p.add_ineq(hi);
      // t_k >= 1/rho_k via [[rho_k, 1], [1, t_k]] PSD.
      ConicProblem::PsdBlock blk;
      blk.dim = 2;
      LinearRow r0;
      r0.add(rho_base + k, 1.0);
      LinearRow r1;
      r1.constant = std::sqrt(2.0);
      LinearRow r2;
      r2.add(inv_base + k, 1.0);
      blk.rows.push_back(r0);
      blk.rows.push_back(r1);
      blk.rows.push_back(r2);
      p.add_psd_block(std::move(blk));
    }

    // Rows are pre-normalized to unit scale: the raw coefficients mix fourth
    // powers of channel amplitudes with noise products and would otherwise
    // sit many orders below the solver's working range.
    // QoS: rho_k N_k - Gamma rho_k (I_k + sigma_k^2) - Gamma sigma_bar_k^2
    // >= m * scale.
    for (int k = 0; k < k_users; ++k) {
      const double gamma = std::pow(2.0, cfg.sinr_threshold(k)) - 1.0;
      if (gamma <= 0.0) continue;
      const double slope = gains(k, k) - gamma * (interference(k, k) + cfg.noise_rf(k));
      const double scale =
          gamma * (rho(k) * (interference(k, k) + cfg.noise_rf(k)) + cfg.noise_baseband(k));
      LinearRow row;
      row.add(rho_base + k, -slope / scale);
      row.add(margin, 1.0);
      row.constant = -gamma * cfg.noise_baseband(k) / scale;
      p.add_ineq(row);
    }
    // EH: eta (1 - rho_k)(T_k + sigma_k^2) - Q_k >= m Q_k.
    for (int k = 0; k < k_users; ++k) {
      if (cfg.eh_threshold(k) <= 0.0) continue;
      const double received = gains.row(k).sum() + cfg.noise_rf(k);
      const double full = cfg.eh_efficiency(k) * received;
      const double scale = cfg.eh_threshold(k);
      LinearRow row;
      row.add(rho_base + k, full / scale);
      row.add(margin, 1.0);
      row.constant = (full - cfg.eh_threshold(k)) / scale;
      p.add_ineq(row);
    }
    // SIC: N_k sb_kb^2 t_kb - N_kb sb_k^2 (2/rho_t - rho_k/rho_t^2)
    //      <= rhs - m * scale.
    for (const SicRow& row : sic_rows) {
      const double sb_w = cfg.noise_baseband(row.weak);
      const double sb_s = cfg.noise_baseband(row.strong);
      const double rho_t = rho(row.weak);
      const double lhs_now =
          row.n_weak * sb_s / rho(row.strong) - row.n_strong * sb_w / rho_t;
      const double scale = std::abs(lhs_now) + std::abs(row.rhs) + 1e-300;
      LinearRow r;
      r.add(inv_base + row.strong, row.n_weak * sb_s / scale);
      r.add(rho_base + row.weak, row.n_strong * sb_w / (rho_t * rho_t) / scale);
      r.add(margin, 1.0);
      r.constant = (row.rhs + row.n_strong * sb_w * 2.0 / rho_t) / scale;
      p.add_ineq(r);
    }
    // The margin is a relative slack; keep it bounded.
    {
      LinearRow cap;
      cap.add(margin, 1.0);
      cap.constant = 0.5;
      p.add_ineq(cap);
    }

    const ConicSolution sol = ConicSolver(opts.conic).solve(p);
    if (sol.status == SolveStatus::infeasible ||
        (sol.status == SolveStatus::max_iter && sol.primal_residual > 1e-5) ||
        !sol.x.allFinite()) {
      if (solved_once) break;
      continue;
    }
    solved_once = true;
    RVec next = sol.x.segment(rho_base, k_users).cwiseMax(0.0).cwiseMin(1.0);
    const double delta = (next - rho).lpNorm<Eigen::Infinity>();
    rho = next;
    if (delta < opts.rho_tol) break;
  }
  if (!solved_once) throw std::runtime_error("PS infeasible");

  PowerSplit out{rho.cwiseMax(0.0).cwiseMin(1.0)};
  out.validate();
  return out;
}

}  // namespace iscpt
