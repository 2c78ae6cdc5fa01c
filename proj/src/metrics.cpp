#include "iscpt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iscpt {

void RisPhase::validate(double tol) const {
  for (Eigen::Index m = 0; m < theta.size(); ++m)
    require(std::abs(std::abs(theta(m)) - 1.0) <= tol, "ris phase: entries must be unit modulus");
}

BeamformingSet BeamformingSet::zeros(int k, int n_tx) {
  BeamformingSet bf;
  bf.w.assign(k, CVec::Zero(n_tx));
  return bf;
}

void BeamformingSet::validate(double rel_tol) const {
  if (!has_lifted()) return;
  require(lifted.size() == w.size(), "beamforming: lifted/vector count mismatch");
  for (size_t k = 0; k < w.size(); ++k) {
    const CMat outer = w[k] * w[k].adjoint();
    const double denom = std::max(lifted[k].norm(), 1e-300);
    require((lifted[k] - outer).norm() / denom <= rel_tol,
            "beamforming: lifted matrix inconsistent with vector");
    require((lifted[k] - lifted[k].adjoint()).norm() <= 1e-9 * denom,
            "beamforming: lifted matrix must be Hermitian");
  }
}

DecodingOrder DecodingOrder::identity(int k) {
  DecodingOrder o;
  o.d.resize(k);
  std::iota(o.d.begin(), o.d.end(), 0);
  return o;
}

void DecodingOrder::validate() const {
  std::vector<bool> seen(d.size(), false);
  for (int pos : d) {
    require(pos >= 0 && pos < static_cast<int>(d.size()) && !seen[pos],
            "decoding order: not a permutation");
    seen[pos] = true;
  }
}

void PowerSplit::validate() const {
  require((rho.array() >= 0.0).all() && (rho.array() <= 1.0).all(),
          "power split: rho must lie in [0,1]");
}

Eigen::Matrix3d FimRecord::full() const {
  Eigen::Matrix3d f;
  f(0, 0) = f_tt;
  f.block<1, 2>(0, 1) = f_ta;
  f.block<2, 1>(1, 0) = f_ta.transpose();
  f.block<2, 2>(1, 1) = f_aa;
  return f;
}

double effective_gain(const CVec& h, const RisPhase& theta, const CMat& g, const CVec& w) {
  require(h.size() == theta.theta.size() && h.size() == g.rows() && g.cols() == w.size(),
          "effective_gain: dimension mismatch");
  const Cplx amp = (h.conjugate().cwiseProduct(theta.theta)).transpose() * (g * w);
  return std::norm(amp);
}

CVec composite_channel(const CVec& h, const RisPhase& theta, const CMat& g) {
  // G^H Theta^H h; |h^H Theta G w|^2 == |composite^H w|^2.
  return g.adjoint() * (theta.theta.conjugate().cwiseProduct(h));
}

namespace {

double own_gain(int user, int beam, const ChannelSet& ch, const RisPhase& theta,
                const BeamformingSet& bf) {
  return effective_gain(ch.h_ris_user[user], theta, ch.g_bs_ris, bf.w[beam]);
}

}  // namespace

double sinr(int k, const DecodingOrder& order, const ChannelSet& ch, const RisPhase& theta,
            const BeamformingSet& bf, const PowerSplit& ps, const ScenarioConfig& cfg) {
  order.validate();
  ps.validate();
  const double rho = ps.rho(k);
  double interference = 0.0;
  for (int j = 0; j < cfg.n_users; ++j)
    if (order.d[j] > order.d[k]) interference += own_gain(k, j, ch, theta, bf);
  const double denom = rho * interference + rho * cfg.noise_rf(k) + cfg.noise_baseband(k);
  return rho * own_gain(k, k, ch, theta, bf) / denom;
}

double cross_sinr(int k_strong, int k_weak, const DecodingOrder& order, const ChannelSet& ch,
                  const RisPhase& theta, const BeamformingSet& bf, const PowerSplit& ps,
                  const ScenarioConfig& cfg, CrossSinrNumerator numerator) {
  order.validate();
  require(order.d[k_weak] <= order.d[k_strong],
          "cross_sinr: requires d(k_weak) <= d(k_strong)");
  const double rho = ps.rho(k_strong);
  const int beam = numerator == CrossSinrNumerator::decoded_stream ? k_weak : k_strong;
  double interference = 0.0;
  for (int j = 0; j < cfg.n_users; ++j)
    if (order.d[j] > order.d[k_weak]) interference += own_gain(k_strong, j, ch, theta, bf);
  const double denom =
      rho * interference + rho * cfg.noise_rf(k_strong) + cfg.noise_baseband(k_strong);
  return rho * own_gain(k_strong, beam, ch, theta, bf) / denom;
}

double harvested_power(int k, const ChannelSet& ch, const RisPhase& theta,
                       const BeamformingSet& bf, const PowerSplit& ps,
                       const ScenarioConfig& cfg) {
  ps.validate();
  double received = cfg.noise_rf(k);
  for (int j = 0; j < cfg.n_users; ++j) received += own_gain(k, j, ch, theta, bf);
  return cfg.eh_efficiency(k) * (1.0 - ps.rho(k)) * received;
}

CVec angle_derivative_mask(int m, double angle) {
  require(m >= 1, "angle_derivative_mask: m must be >= 1");
  CVec e(m);
  const double c = kPi * std::cos(angle);
  for (int i = 0; i < m; ++i) e(i) = Cplx(0.0, -i * c);
  return e;
}

SensingOperators SensingOperators::build(const ChannelSet& ch, const RisPhase& theta,
                                         const ScenarioConfig& cfg) {
  SensingOperators ops;
  const CVec u = composite_channel(ch.h_ris_target, theta, ch.g_bs_ris);
  const CVec hs_deriv =
      ch.h_ris_target.cwiseProduct(angle_derivative_mask(cfg.n_ris, ch.target_angle));
  const CVec v = composite_channel(hs_deriv, theta, ch.g_bs_ris);
  ops.h_t = u * u.adjoint();
  ops.h_tilde = v * u.adjoint() + u * v.adjoint();
  ops.fim_scale = 2.0 * cfg.n_samples / cfg.noise_radar;
  ops.rcs = ch.rcs;
  return ops;
}

FimRecord SensingOperators::fim_from_traces(double tr_tilde, double tr_plain,
                                            Cplx tr_cross) const {
  FimRecord rec;
  const double a2 = std::norm(rcs);
  rec.f_tt = fim_scale * a2 * tr_tilde;
  rec.f_aa = fim_scale * tr_plain * Eigen::Matrix2d::Identity();
  const Cplx z = std::conj(rcs) * tr_cross;
  rec.f_ta << fim_scale * z.real(), fim_scale * (Cplx(0.0, 1.0) * z).real();
  return rec;
}

FimRecord fim(const ChannelSet& ch, const RisPhase& theta, const BeamformingSet& bf,
              const ScenarioConfig& cfg) {
  theta.validate();
  const SensingOperators ops = SensingOperators::build(ch, theta, cfg);
  double tr_tilde = 0.0;
  double tr_plain = 0.0;
  Cplx tr_cross(0.0, 0.0);
  for (const CVec& w : bf.w) {
    const CVec tw = ops.h_tilde * w;
    const CVec pw = ops.h_t * w;
    tr_tilde += tw.squaredNorm();
    tr_plain += pw.squaredNorm();
    // tr(H_t W_k H_tilde^H) = w^H H_tilde H_t w.
    tr_cross += tw.dot(pw);
  }
  FimRecord rec = ops.fim_from_traces(tr_tilde, tr_plain, tr_cross);
  rec.crb = crb(rec);
  return rec;
}

double crb(const FimRecord& record) {
  const double det = record.f_aa.determinant();
  if (!(det > 0.0) || !(record.f_aa(0, 0) > 0.0))
    throw std::runtime_error("degenerate sensing geometry");
  const double schur =
      record.f_tt - (record.f_ta * record.f_aa.inverse() * record.f_ta.transpose())(0, 0);
  if (!(schur > 0.0)) throw std::runtime_error("crb: nonpositive Schur complement");
  return 1.0 / schur;
}

ConstraintReplay replay_constraints(const ChannelSet& ch, const RisPhase& theta,
                                    const BeamformingSet& bf, const PowerSplit& ps,
                                    const DecodingOrder& order, const ScenarioConfig& cfg) {
  ConstraintReplay rep;
  std::vector<double> qos, eh, sic;
  for (int k = 0; k < cfg.n_users; ++k) {
    const double gamma = cfg.sinr_threshold(k);
    if (gamma > 0.0) {
      const double target = std::pow(2.0, gamma) - 1.0;
      qos.push_back(sinr(k, order, ch, theta, bf, ps, cfg) / target - 1.0);
    }
    if (cfg.eh_threshold(k) > 0.0)
      eh.push_back(harvested_power(k, ch, theta, bf, ps, cfg) / cfg.eh_threshold(k) - 1.0);
  }
  for (int k = 0; k < cfg.n_users; ++k) {
    if (cfg.sinr_threshold(k) <= 0.0) continue;  // nothing to decode from user k
    for (int kb = 0; kb < cfg.n_users; ++kb) {
      if (order.d[k] >= order.d[kb]) continue;
      const double own = sinr(k, order, ch, theta, bf, ps, cfg);
      const double cross = cross_sinr(kb, k, order, ch, theta, bf, ps, cfg);
      sic.push_back(own > 0.0 ? cross / own - 1.0 : 0.0);
    }
  }
  auto to_vec = [](const std::vector<double>& v) {
    RVec out(static_cast<Eigen::Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) out(i) = v[i];
    return out;
  };
  rep.qos = to_vec(qos);
  rep.eh = to_vec(eh);
  rep.sic = to_vec(sic);

  double total_power = 0.0;
  for (const CVec& w : bf.w) total_power += w.squaredNorm();
  rep.power_margin = 1.0 - total_power / cfg.power_budget;

  if (std::isfinite(cfg.crb_limit)) {
    try {
      rep.crb_margin = cfg.crb_limit / fim(ch, theta, bf, cfg).crb - 1.0;
    } catch (const std::runtime_error&) {
      rep.crb_margin = -1.0;  // no probing power: CRB unbounded
    }
  } else {
    rep.crb_margin = 0.0;
  }

  double m = std::min(rep.crb_margin, rep.power_margin);
  for (Eigen::Index i = 0; i < rep.qos.size(); ++i) m = std::min(m, rep.qos(i));
  for (Eigen::Index i = 0; i < rep.eh.size(); ++i) m = std::min(m, rep.eh(i));
  for (Eigen::Index i = 0; i < rep.sic.size(); ++i) m = std::min(m, rep.sic(i));
  rep.min_slack = m;
  return rep;
}

}  // namespace iscpt
