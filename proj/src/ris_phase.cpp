#include "iscpt/ris_phase.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace iscpt {

namespace {

CMat mat_of(const CVec& v, int m) {
  return Eigen::Map<const CMat>(v.data(), m, m);
}

CVec kron_vec(const CVec& left, const CVec& right) {
  CVec out(left.size() * right.size());
  for (Eigen::Index i = 0; i < left.size(); ++i)
    out.segment(i * right.size(), right.size()) = left(i) * right;
  return out;
}

// theta^H M theta equal to y1^H Theta G G^H Theta^H y2.
CMat channel_quadratic(const CVec& y1, const CMat& g, const CVec& y2) {
  const CMat inner = y1.conjugate().asDiagonal() * (g * g.adjoint()) * y2.asDiagonal();
  return inner.transpose();
}

// Antilinear element vector: y^H Theta G w = u^H theta with u = y (.) conj(Gw).
CVec element_vector(const CVec& y, const CVec& gw) { return y.cwiseProduct(gw.conjugate()); }

double tangent_constant(const CMat& q, const CVec& theta_t) {
  return -(theta_t.adjoint() * q * theta_t)(0).real();
}

}  // namespace

CMat phase_quadratic(const CVec& h_user, const CMat& g, const CVec& w) {
  const CVec u = element_vector(h_user, g * w);
  return u * u.adjoint();
}

Cplx QuarticSum::eval(const CVec& theta) const {
  Cplx acc(0.0, 0.0);
  for (const auto& term : terms) {
    const Cplx qa = (theta.adjoint() * term.a * theta)(0);
    const Cplx qb = (theta.adjoint() * term.b * theta)(0);
    acc += qa * qb;
  }
  return acc;
}

CMat QuarticSum::materialize() const {
  const int m = static_cast<int>(terms.front().a.rows());
  CMat out = CMat::Zero(m * m, m * m);
  for (const auto& term : terms)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        out.block(i * m, j * m, m, m) += term.a(i, j) * term.b;
  return out;
}

Cplx QuarticSum::eval_lifted(const CVec& theta_kron) const {
  return (theta_kron.adjoint() * materialize() * theta_kron)(0);
}

CVec QuarticSum::coeff_theta(const CVec& vt1, const CMat& vt3_mat) const {
  const int m = static_cast<int>(terms.front().a.rows());
  CVec coeff = CVec::Zero(m);
  for (const auto& term : terms) {
    const CVec bv = term.b * vt1;
    CVec gamma(m);
    for (int col = 0; col < m; ++col) gamma(col) = vt3_mat.col(col).dot(bv);
    // g = gamma^T (A theta); antilinear coefficient is conj(A^T gamma).
    coeff += (term.a.transpose() * gamma).conjugate();
  }
  return coeff;
}

CVec QuarticSum::coeff_vt1(const CVec& theta, const CMat& vt3_mat) const {
  const int m = static_cast<int>(terms.front().a.rows());
  CVec coeff = CVec::Zero(m);
  for (const auto& term : terms) {
    const CVec p = term.a * theta;
    coeff += term.b.adjoint() * (vt3_mat * p.conjugate());
  }
  return coeff;
}

CVec QuarticSum::coeff_vt2(const CMat& vt3_mat) const {
  const int m = static_cast<int>(terms.front().a.rows());
  CVec coeff = CVec::Zero(m * m);
  for (const auto& term : terms) {
    const CMat block = term.b.adjoint() * vt3_mat * term.a.conjugate();
    coeff += Eigen::Map<const CVec>(block.data(), m * m);
  }
  return coeff;
}

CVec QuarticSum::coeff_vt3(const CVec& vt2) const {
  const int m = static_cast<int>(terms.front().a.rows());
  const CMat v2 = mat_of(vt2, m);
  CVec coeff = CVec::Zero(m * m);
  for (const auto& term : terms) {
    const CMat block = term.b * v2 * term.a.transpose();
    coeff += Eigen::Map<const CVec>(block.data(), m * m);
  }
  return coeff;
}

Cplx QuarticSum::eval_split(const CVec& theta, const CVec& vt1, const CMat& vt3_mat) const {
  return coeff_theta(vt1, vt3_mat).dot(theta);
}

std::array<Cplx, 6> GCoefficients::raw_values(const CVec& theta) const {
  std::array<Cplx, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = consensus_scale[i] * consensus[i].eval(theta);
  return out;
}

GCoefficients build_g_coefficients(const ChannelSet& ch, const BeamformingSet& bf,
                                   const PowerSplit& ps, const DecodingOrder& order,
                                   const ScenarioConfig& cfg) {
  order.validate();
  ps.validate();
  GCoefficients gc;
  gc.m = cfg.n_ris;
  const int k_users = cfg.n_users;
  const CMat& g = ch.g_bs_ris;

  std::vector<CVec> gw(k_users);
  for (int k = 0; k < k_users; ++k) gw[k] = g * bf.w[k];

  // Sensing element vectors and channel quadratics.
  const CVec mask = angle_derivative_mask(cfg.n_ris, ch.target_angle);
  const CVec hs = ch.h_ris_target;
  const CVec hse = hs.cwiseProduct(mask);
  const CMat x_ss = channel_quadratic(hs, g, hs);
  const CMat x_ee = channel_quadratic(hse, g, hse);
  const CMat x_se = channel_quadratic(hs, g, hse);
  const CMat x_es = channel_quadratic(hse, g, hs);

  std::array<QuarticSum, 6> raw;
  for (int k = 0; k < k_users; ++k) {
    const CVec us = element_vector(hs, gw[k]);
    const CVec ue = element_vector(hse, gw[k]);
    const CMat p_s = us * us.adjoint();
    const CMat p_e = ue * ue.adjoint();
    const CMat p_se = us * ue.adjoint();
    const CMat p_es = ue * us.adjoint();
    // gbar_1 = || d/dtheta (H_t) w ||^2, the four circled products.
    raw[0].terms.push_back({x_ee, p_s});
    raw[0].terms.push_back({x_ss, p_e});
    raw[0].terms.push_back({x_es, p_se});
    raw[0].terms.push_back({x_se, p_es});
    // gbar_2, gbar_3: the two halves of the cross trace.
    raw[1].terms.push_back({p_s, x_se});
    raw[2].terms.push_back({p_se, x_ss});
    // gbar_4: amplitude block.
    raw[3].terms.push_back({p_s, x_ss});
  }

  // Per-user constraint quadratics.
  gc.own_quadratic.resize(k_users);
  gc.beam_quadratic.assign(k_users, std::vector<CMat>(k_users));
  for (int k = 0; k < k_users; ++k) {
    for (int j = 0; j < k_users; ++j) {
      const CVec u = element_vector(ch.h_ris_user[k], gw[j]);
      gc.beam_quadratic[k][j] = u * u.adjoint();
    }
    gc.own_quadratic[k] = gc.beam_quadratic[k][k];
  }
  gc.noise_const = RVec(k_users);
  gc.qos_target = RVec(k_users);
  gc.eh_rhs = RVec(k_users);
  gc.rho = ps.rho;
  gc.interferers.assign(k_users, {});
  for (int k = 0; k < k_users; ++k) {
    gc.noise_const(k) = ps.rho(k) * cfg.noise_rf(k) + cfg.noise_baseband(k);
    gc.qos_target(k) = std::pow(2.0, cfg.sinr_threshold(k)) - 1.0;
    gc.eh_rhs(k) = cfg.eh_threshold(k) / (cfg.eh_efficiency(k) *
                                          std::max(1.0 - ps.rho(k), 1e-12)) -
                   cfg.noise_rf(k);
    for (int j = 0; j < k_users; ++j)
      if (order.d[j] > order.d[k]) gc.interferers[k].push_back(j);
  }

  // SIC pairs: quartic cross products and the quadratic-side matrices.
  for (int k = 0; k < k_users; ++k) {
    if (cfg.sinr_threshold(k) <= 0.0) continue;
    for (int kb = 0; kb < k_users; ++kb) {
      if (order.d[k] >= order.d[kb]) continue;
      GCoefficients::SicPair pair;
      pair.weak = k;
      pair.strong = kb;
      const double rr = ps.rho(k) * ps.rho(kb);
      for (int j = 0; j < k_users; ++j) {
        if (order.d[j] <= order.d[k]) continue;
        pair.g5.terms.push_back({rr * gc.beam_quadratic[k][k], gc.beam_quadratic[kb][j]});
        pair.g6.terms.push_back({rr * gc.beam_quadratic[kb][k], gc.beam_quadratic[k][j]});
      }
      if (pair.g5.terms.empty()) {
        // No interferers after k: the cross constraint reduces to the
        // quadratic sides only.
        pair.g5.terms.push_back({CMat::Zero(gc.m, gc.m), CMat::Zero(gc.m, gc.m)});
        pair.g6.terms.push_back({CMat::Zero(gc.m, gc.m), CMat::Zero(gc.m, gc.m)});
      }
      pair.d = gc.noise_const(kb) * ps.rho(k) * gc.beam_quadratic[k][k];
      pair.d_bar = gc.noise_const(k) * ps.rho(kb) * gc.beam_quadratic[kb][k];
      pair.d_tilde = pair.d_bar - pair.d;
      gc.sic.push_back(std::move(pair));
    }
  }

  // Normalization: consensus functions are stored near unit order, anchored
  // at the all-ones phase with a magnitude-aware floor so that identically
  // zero functions stay zero instead of producing inf scale factors.
  gc.fim_scale = 2.0 * cfg.n_samples / cfg.noise_radar;
  gc.rcs = ch.rcs;
  const CVec ones = CVec::Ones(gc.m);
  const double p_tt = gc.fim_scale * std::norm(gc.rcs);
  const double p_x = gc.fim_scale;
  auto torus_bound = [m = gc.m](const QuarticSum& q) {
    double acc = 0.0;
    for (const auto& t : q.terms) acc += t.a.norm() * t.b.norm() * m * m;
    return acc;
  };
  auto anchor = [&](const QuarticSum& q) {
    return std::max({std::abs(q.eval(ones)), 1e-9 * torus_bound(q), 1e-30});
  };
  gc.f_tt0 = p_tt * anchor(raw[0]);
  gc.f_aa0 = p_x * anchor(raw[3]);
  const double f_x0 = std::sqrt(gc.f_tt0) * std::sqrt(gc.f_aa0);
  gc.crb_threshold = std::isfinite(cfg.crb_limit) ? 1.0 / (cfg.crb_limit * gc.f_tt0) : 0.0;

  QuarticSum g5_sum, g6_sum;
  for (const auto& pair : gc.sic) {
    for (const auto& t : pair.g5.terms) g5_sum.terms.push_back(t);
    for (const auto& t : pair.g6.terms) g6_sum.terms.push_back(t);
  }
  if (gc.sic.empty()) {
    g5_sum.terms.push_back({CMat::Zero(gc.m, gc.m), CMat::Zero(gc.m, gc.m)});
    g6_sum.terms.push_back({CMat::Zero(gc.m, gc.m), CMat::Zero(gc.m, gc.m)});
  }
  const double s_sic = std::max(anchor(g5_sum), anchor(g6_sum));

  const std::array<double, 6> prefactor = {p_tt, p_x, p_x, p_x, 1.0, 1.0};
  const std::array<double, 6> unit = {gc.f_tt0, f_x0, f_x0, gc.f_aa0, s_sic, s_sic};
  std::array<QuarticSum, 6> scaled = {raw[0], raw[1], raw[2], raw[3], g5_sum, g6_sum};
  for (int i = 0; i < 6; ++i) {
    const double factor = prefactor[i] / unit[i];
    for (auto& term : scaled[i].terms) term.a *= factor;
    gc.consensus[i] = std::move(scaled[i]);
    gc.consensus_scale[i] = unit[i] / prefactor[i];
  }
  return gc;
}

AdmmState AdmmState::init(const RisPhase& theta0) {
  AdmmState st;
  st.theta = theta0;
  const int m = static_cast<int>(theta0.theta.size());
  st.vartheta1 = theta0.theta;
  st.vartheta2 = kron_vec(theta0.theta, theta0.theta);
  st.vartheta3 = st.vartheta2;
  st.mu1 = CVec::Zero(m);
  st.mu2 = CVec::Zero(m * m);
  st.mu3 = CVec::Zero(m * m);
  return st;
}

void AdmmState::validate() const {
  theta.validate();
  for (Eigen::Index i = 0; i < vartheta1.size(); ++i)
    require(std::abs(std::abs(vartheta1(i)) - 1.0) <= 1e-9, "admm: vartheta1 not unit modulus");
  for (Eigen::Index i = 0; i < vartheta2.size(); ++i) {
    require(std::abs(std::abs(vartheta2(i)) - 1.0) <= 1e-9, "admm: vartheta2 not unit modulus");
    require(std::abs(std::abs(vartheta3(i)) - 1.0) <= 1e-9, "admm: vartheta3 not unit modulus");
  }
}

namespace {

// The consensus LMI entries from the scaled auxiliaries: row/col order
// (theta; Re alpha; Im alpha), congruence-scaled like the beamforming stage.
void add_crb_lmi(ConicProblem& p, const GCoefficients& gc, const std::array<int, 6>& re_idx,
                 const std::array<int, 6>& im_idx) {
  const double rt2 = std::sqrt(2.0);
  const Cplx ac = std::conj(gc.rcs);
  ConicProblem::PsdBlock blk;
  blk.dim = 3;
  LinearRow tt;
  tt.add(re_idx[0], 1.0);
  tt.constant = -gc.crb_threshold;
  // Re(ac conj(xi2 + xi3)) = Re(ac) (Re xi2 + Re xi3) + Im(ac) (Im xi2 + Im xi3)
  LinearRow ta0;
  for (int i : {1, 2}) {
    ta0.add(re_idx[i], rt2 * ac.real());
    ta0.add(im_idx[i], rt2 * ac.imag());
  }
  // Re(j ac conj(xi2+ xi3)) = -Im(ac conj(.)) = -(Im(ac) Re(.) - Re(ac) Im(.))... expanded:
  LinearRow ta1;
  for (int i : {1, 2}) {
    ta1.add(re_idx[i], -rt2 * ac.imag());
    ta1.add(im_idx[i], rt2 * ac.real());
  }
  LinearRow aa;
  aa.add(re_idx[3], 1.0);
  aa.constant = -1e-2 * gc.crb_threshold;  // amplitude-block regularity margin
  blk.rows.push_back(tt);
  blk.rows.push_back(ta0);
  blk.rows.push_back(ta1);
  blk.rows.push_back(aa);
  blk.rows.push_back(LinearRow{});
  blk.rows.push_back(aa);
  p.add_psd_block(std::move(blk));
}

struct UnitModulusObjective {
  CMat big_psi;  // Hermitian PSD
  CVec psi;
  double constant = 0.0;

  void add_form(const CVec& a, Cplx t, double weight) {
    big_psi.noalias() += weight * (a * a.adjoint());
    psi += 2.0 * weight * t * a;
    constant += weight * std::norm(t);
  }

  double value(const CVec& x) const {
    return (x.adjoint() * big_psi * x)(0).real() + psi.dot(x).real() + constant;
  }

  // One majorize-minimize pass; returns the objective trace.
  std::vector<double> minimize(CVec& x, int rounds, double tol) const {
    std::vector<double> trace;
    trace.push_back(value(x));
    const double lam = big_psi.norm();
    for (int r = 0; r < rounds; ++r) {
      CVec coeff = 2.0 * (big_psi * x - lam * x) + psi;
      CVec next(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i)
        next(i) = std::abs(coeff(i)) > 0.0 ? -coeff(i) / std::abs(coeff(i)) : x(i);
      const double val = value(next);
      if (val > trace.back() + 1e-12 * (1.0 + std::abs(val))) break;  // safeguard
      x = next;
      trace.push_back(val);
      if (trace.size() >= 2 &&
          std::abs(trace[trace.size() - 2] - val) <= tol * (1.0 + std::abs(val)))
        break;
    }
    return trace;
  }
};

// Linearized constraint slacks at the expansion phase; affine in theta with
// dimensionless normalization. slack(theta) = Re(h^H theta) + c.
struct AffineSlack {
  CVec h;
  double c = 0.0;
  double at(const CVec& theta) const { return h.dot(theta).real() + c; }
};

// Tangent of the convex quadratic theta^H Q theta at theta_t (lower bound).
AffineSlack tangent_form(const CMat& q, const CVec& theta_t, double scale) {
  AffineSlack s;
  s.h = scale * 2.0 * (q * theta_t);
  s.c = scale * tangent_constant(q, theta_t);
  return s;
}

// Frobenius-shift upper bound of theta^H Q theta at theta_t, affine on the
// unit-modulus set.
AffineSlack shift_upper_bound(const CMat& q, const CVec& theta_t, double scale) {
  const double lam = q.norm();
  const double m = static_cast<double>(theta_t.size());
  AffineSlack s;
  s.h = scale * 2.0 * ((q - lam * CMat::Identity(q.rows(), q.cols())) * theta_t);
  s.c = scale * (lam * m + (theta_t.adjoint() * (lam * CMat::Identity(q.rows(), q.cols()) - q) *
                            theta_t)(0)
                               .real());
  return s;
}

}  // namespace

void xi_update(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
               const RisOptions& opts) {
  // Proximal projection of the targets g(theta, ...) + rho_bar xi_dual onto
  // the LMI and the SIC coupling row.
  const CMat vt3_mat = mat_of(state.vartheta3, gc.m);
  std::array<Cplx, 6> target;
  for (int i = 0; i < 6; ++i)
    target[i] = gc.consensus[i].eval_split(state.theta.theta, state.vartheta1, vt3_mat) +
                state.penalty_dual * state.xi_dual[i];

  ConicProblem p;
  std::array<int, 6> re_idx{}, im_idx{};
  for (int i = 0; i < 6; ++i) {
    re_idx[i] = p.add_vars(1);
    im_idx[i] = p.add_vars(1);
  }
  // Epigraph of the squared distance, component-wise.
  for (int i = 0; i < 6; ++i) {
    for (int part = 0; part < 2; ++part) {
      const int vi = part == 0 ? re_idx[i] : im_idx[i];
      const double tv = part == 0 ? target[i].real() : target[i].imag();
      const int u = p.add_vars(1);
      p.set_objective(u, 1.0);
      ConicProblem::PsdBlock blk;
      blk.dim = 2;
      LinearRow one;
      one.constant = 1.0;
      LinearRow diff;
      diff.add(vi, std::sqrt(2.0));
      diff.constant = -std::sqrt(2.0) * tv;
      LinearRow epi;
      epi.add(u, 1.0);
      blk.rows.push_back(one);
      blk.rows.push_back(diff);
      blk.rows.push_back(epi);
      p.add_psd_block(std::move(blk));
    }
  }
  if (std::isfinite(cfg.crb_limit)) add_crb_lmi(p, gc, re_idx, im_idx);
  if (!gc.sic.empty()) {
    // xi5 - xi6 <= sum of theta^H Dtilde theta in consensus units.
    double rhs = 0.0;
    for (const auto& pair : gc.sic)
      rhs += (state.theta.theta.adjoint() * pair.d_tilde * state.theta.theta)(0).real();
    LinearRow row;
    row.add(re_idx[4], 1.0);
    row.add(re_idx[5], -1.0);
    row.constant = rhs / gc.consensus_scale[4];
    p.add_ineq(row);
  }

  const ConicSolution sol = ConicSolver(opts.xi_conic).solve(p);
  if (sol.status == SolveStatus::infeasible)
    throw std::runtime_error("ris xi update: projection infeasible");
  for (int i = 0; i < 6; ++i) state.xi[i] = Cplx(sol.x(re_idx[i]), sol.x(im_idx[i]));
}

namespace {

// Shared assembly of the constraint hinge penalties for the theta update.
void add_theta_hinges(UnitModulusObjective& obj, const GCoefficients& gc,
                      const ScenarioConfig& cfg, const DecodingOrder* order_unused,
                      const CVec& theta_t, double margin_target, double weight) {
  (void)order_unused;
  const int k_users = cfg.n_users;
  auto quad_at = [&theta_t](const CMat& q) {
    return (theta_t.adjoint() * q * theta_t)(0).real();
  };
  std::vector<AffineSlack> slacks;

  // QoS: rho signal - Gamma (rho interference + A_k) >= 0; the interference
  // set is the decoded-later list carried by the coefficients.
  for (int k = 0; k < k_users; ++k) {
    const double gamma = gc.qos_target(k);
    if (gamma <= 0.0) continue;
    CMat interf = CMat::Zero(gc.m, gc.m);
    for (int j : gc.interferers[k]) interf += gc.beam_quadratic[k][j];
    const double rho_k = gc.rho(k);
    const AffineSlack sig = tangent_form(gc.own_quadratic[k], theta_t, rho_k);
    const AffineSlack bad = shift_upper_bound(interf, theta_t, gamma * rho_k);
    const double scale = gamma * (rho_k * quad_at(interf) + gc.noise_const(k)) + 1e-300;
    AffineSlack slack;
    slack.h = (sig.h - bad.h) / scale;
    slack.c = (sig.c - bad.c - gamma * gc.noise_const(k)) / scale;
    slacks.push_back(std::move(slack));
  }
  // EH: sum_j theta^H E_kj theta >= eh_rhs_k.
  for (int k = 0; k < k_users; ++k) {
    if (gc.eh_rhs(k) <= 0.0) continue;
    CMat total = CMat::Zero(gc.m, gc.m);
    for (int j = 0; j < k_users; ++j) total += gc.beam_quadratic[k][j];
    const double scale = std::max(gc.eh_rhs(k), quad_at(total)) + 1e-300;
    AffineSlack s = tangent_form(total, theta_t, 1.0 / scale);
    s.c -= gc.eh_rhs(k) / scale;
    slacks.push_back(std::move(s));
  }
  // SIC pairs: tangent of theta^H Dtilde theta must stay above the frozen
  // quartic gap g5 - g6.
  for (const auto& pair : gc.sic) {
    const double gap = (pair.g5.eval(theta_t) - pair.g6.eval(theta_t)).real();
    const double scale =
        std::abs(quad_at(pair.d)) + std::abs(quad_at(pair.d_bar)) + 1e-300;
    AffineSlack s = tangent_form(pair.d_tilde, theta_t, 1.0 / scale);
    s.c -= gap / scale;
    slacks.push_back(std::move(s));
  }

  for (const AffineSlack& s : slacks) {
    const double violation = margin_target - s.at(theta_t);
    if (violation <= 0.0) continue;  // inactive at the expansion point
    // weight * (margin - slack)^2 majorized with |h^H theta|^2 >= Re(.)^2.
    const double d = margin_target - s.c;
    obj.big_psi.noalias() += weight * (s.h * s.h.adjoint());
    obj.psi += weight * (-2.0 * d) * s.h;
    obj.constant += weight * d * d;
  }
}

}  // namespace

double theta_update(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
                    double margin_target, const RisOptions& opts,
                    std::vector<double>* mm_trace) {
  const int m = gc.m;
  const CMat vt3_mat = mat_of(state.vartheta3, m);
  UnitModulusObjective obj;
  obj.big_psi = CMat::Zero(m, m);
  obj.psi = CVec::Zero(m);

  const double w_g = 1.0 / (2.0 * state.lambdas[0]);
  for (int i = 0; i < 6; ++i) {
    const CVec a = gc.consensus[i].coeff_theta(state.vartheta1, vt3_mat);
    const Cplx t = state.penalty_dual * state.xi_dual[i] - state.xi[i];
    obj.add_form(a, t, w_g);
  }
  // Consensus with vartheta1 and vartheta2 (quadratic parts are constant on
  // the unit-modulus set).
  obj.psi += state.mu1 - state.vartheta1 / state.lambdas[1];
  {
    const CVec rhs = state.mu2 + state.vartheta2 / state.lambdas[2];
    CVec folded(m);
    for (int i = 0; i < m; ++i)
      folded(i) = state.vartheta1.dot(rhs.segment(i * m, m));
    obj.psi -= folded;
  }

  add_theta_hinges(obj, gc, cfg, nullptr, state.theta.theta, margin_target, opts.hinge_weight);

  CVec theta = state.theta.theta;
  const auto trace = obj.minimize(theta, opts.mm_rounds, opts.mm_tol);
  state.theta.theta = theta;
  if (mm_trace) *mm_trace = trace;
  return trace.back();
}

void vartheta_updates(AdmmState& state, const GCoefficients& gc, const ScenarioConfig& cfg,
                      const RisOptions& opts) {
  (void)cfg;
  const int m = gc.m;
  const double w_g = 1.0 / (2.0 * state.lambdas[0]);
  const CMat vt3_mat = mat_of(state.vartheta3, m);

  // vartheta1.
  {
    UnitModulusObjective obj;
    obj.big_psi = CMat::Zero(m, m);
    obj.psi = CVec::Zero(m);
    for (int i = 0; i < 6; ++i) {
      const CVec a = gc.consensus[i].coeff_vt1(state.theta.theta, vt3_mat);
      const Cplx t = state.penalty_dual * state.xi_dual[i] - state.xi[i];
      obj.add_form(a, t, w_g);
    }
    obj.psi += -state.theta.theta / state.lambdas[1] - state.mu1;
    const CVec rhs = state.vartheta2 + state.lambdas[2] * state.mu2;
    CVec folded = CVec::Zero(m);
    for (int i = 0; i < m; ++i)
      folded += std::conj(state.theta.theta(i)) * rhs.segment(i * m, m);
    obj.psi -= folded / state.lambdas[2];
    CVec v = state.vartheta1;
    obj.minimize(v, opts.mm_rounds, opts.mm_tol);
    state.vartheta1 = v;
  }

  // vartheta2.
  {
    UnitModulusObjective obj;
    obj.big_psi = CMat::Zero(m * m, m * m);
    obj.psi = CVec::Zero(m * m);
    for (int i = 0; i < 6; ++i) {
      const CVec a = gc.consensus[i].coeff_vt2(vt3_mat);
      const Cplx t = state.penalty_dual * state.xi_dual[i] - state.xi[i];
      obj.add_form(a, t, w_g);
    }
    const CVec kron = kron_vec(state.theta.theta, state.vartheta1);
    obj.psi += state.mu2 - kron / state.lambdas[2];
    obj.psi += -state.vartheta3 / state.lambdas[3] - state.mu3;
    CVec v = state.vartheta2;
    obj.minimize(v, opts.mm_rounds, opts.mm_tol);
    state.vartheta2 = v;
  }

  // vartheta3 (antilinear forms: conjugate constants).
  {
    UnitModulusObjective obj;
    obj.big_psi = CMat::Zero(m * m, m * m);
    obj.psi = CVec::Zero(m * m);
    for (int i = 0; i < 6; ++i) {
      const CVec a = gc.consensus[i].coeff_vt3(state.vartheta2);
      const Cplx t = state.penalty_dual * state.xi_dual[i] - state.xi[i];
      obj.add_form(a, std::conj(t), w_g);
    }
    obj.psi += state.mu3 - state.vartheta2 / state.lambdas[3];
    CVec v = state.vartheta3;
    obj.minimize(v, opts.mm_rounds, opts.mm_tol);
    state.vartheta3 = v;
  }
}

void dual_update(AdmmState& state, const GCoefficients& gc) {
  const int m = gc.m;
  const CMat vt3_mat = mat_of(state.vartheta3, m);
  for (int i = 0; i < 6; ++i) {
    const Cplx g =
        gc.consensus[i].eval_split(state.theta.theta, state.vartheta1, vt3_mat);
    state.xi_dual[i] += (g - state.xi[i]) / state.penalty_dual;
  }
  state.mu1 += (state.theta.theta - state.vartheta1) / state.lambdas[1];
  state.mu2 +=
      (state.vartheta2 - kron_vec(state.theta.theta, state.vartheta1)) / state.lambdas[2];
  state.mu3 += (state.vartheta3 - state.vartheta2) / state.lambdas[3];
}

RisPhase solve_ris(const ChannelSet& ch, const BeamformingSet& bf, const DecodingOrder& order,
                   const PowerSplit& ps, const ScenarioConfig& cfg, const RisPhase& theta_init,
                   const RisOptions& opts, RisDiagnostics* diag) {
  theta_init.validate();
  GCoefficients gc = build_g_coefficients(ch, bf, ps, order, cfg);

  AdmmState state = AdmmState::init(theta_init);

  auto replay_margin = [&](const RisPhase& th) {
    const ConstraintReplay rep = replay_constraints(ch, th, bf, ps, order, cfg);
    double m = rep.crb_margin;
    for (Eigen::Index i = 0; i < rep.qos.size(); ++i) m = std::min(m, rep.qos(i));
    for (Eigen::Index i = 0; i < rep.eh.size(); ++i) m = std::min(m, rep.eh(i));
    for (Eigen::Index i = 0; i < rep.sic.size(); ++i) m = std::min(m, rep.sic(i));
    return m;
  };

  RisPhase best = theta_init;
  double best_margin = replay_margin(theta_init);
  double margin_target = 0.0;

  double residual = std::numeric_limits<double>::infinity();
  double plateau_best = residual;
  int plateau_age = 0;
  int sweep = 0;
  bool converged = false;

  for (sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    xi_update(state, gc, cfg, opts);
    theta_update(state, gc, cfg, margin_target, opts);
    vartheta_updates(state, gc, cfg, opts);
    dual_update(state, gc);

    const CMat vt3_mat = mat_of(state.vartheta3, gc.m);
    double res = 0.0;
    for (int i = 0; i < 6; ++i) {
      const Cplx g =
          gc.consensus[i].eval_split(state.theta.theta, state.vartheta1, vt3_mat);
      res = std::max(res, std::abs(g - state.xi[i]));
    }
    res = std::max(res, (state.theta.theta - state.vartheta1).cwiseAbs().maxCoeff());
    res = std::max(
        res, (state.vartheta2 - kron_vec(state.theta.theta, state.vartheta1)).cwiseAbs().maxCoeff());
    res = std::max(res, (state.vartheta3 - state.vartheta2).cwiseAbs().maxCoeff());
    residual = res;

    const double margin = replay_margin(state.theta);
    if (margin > best_margin) {
      best_margin = margin;
      best = state.theta;
    }
    if (diag) {
      diag->residual_trace.push_back(residual);
      diag->margin_trace.push_back(margin);
    }

    if (opts.margin_maximization && margin >= margin_target)
      margin_target = std::min(margin + 0.02 + 0.1 * std::abs(margin), 0.5);

    if (residual < plateau_best * 0.99) {
      plateau_best = residual;
      plateau_age = 0;
    } else if (++plateau_age >= 50) {
      state.penalty *= 0.5;
      for (double& l : state.lambdas) l *= 0.5;
      plateau_age = 0;
    }

    if (residual < opts.residual_tol && (best_margin >= 0.0 || sweep > opts.max_sweeps / 2)) {
      converged = true;
      break;
    }
  }

  if (diag) {
    diag->sweeps = sweep;
    diag->converged = converged;
    diag->best_margin = best_margin;
  }
  return best;
}

}  // namespace iscpt
