#include "iscpt/conic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace iscpt {

int svec_dim(int n) { return n * (n + 1) / 2; }

RVec svec(const RMat& s) {
  const int n = static_cast<int>(s.rows());
  RVec v(svec_dim(n));
  int idx = 0;
  const double rt2 = std::sqrt(2.0);
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r) v(idx++) = (r == c) ? s(r, c) : rt2 * s(r, c);
  return v;
}

RMat unsvec(const RVec& v, int n) {
  RMat s(n, n);
  int idx = 0;
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  for (int c = 0; c < n; ++c)
    for (int r = c; r < n; ++r) {
      const double val = (r == c) ? v(idx) : v(idx) * inv_rt2;
      s(r, c) = val;
      s(c, r) = val;
      ++idx;
    }
  return s;
}

RMat hermitian_to_real_embedding(const CMat& h, double herm_tol) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  require((h - h.adjoint()).cwiseAbs().maxCoeff() <= herm_tol * scale,
          "hermitian_to_real_embedding: input is not Hermitian");
  const int n = static_cast<int>(h.rows());
  RMat e(2 * n, 2 * n);
  e.topLeftCorner(n, n) = h.real();
  e.topRightCorner(n, n) = -h.imag();
  e.bottomLeftCorner(n, n) = h.imag();
  e.bottomRightCorner(n, n) = h.real();
  return e;
}

CMat complex_from_embedding(const RMat& e) {
  const int n = static_cast<int>(e.rows()) / 2;
  const RMat re = 0.5 * (e.topLeftCorner(n, n) + e.bottomRightCorner(n, n));
  const RMat im = 0.5 * (e.bottomLeftCorner(n, n) - e.topRightCorner(n, n));
  return re.cast<Cplx>() + Cplx(0.0, 1.0) * im.cast<Cplx>();
}

int ConicProblem::add_vars(int count) {
  const int first = var_dim;
  var_dim += count;
  objective.resize(var_dim, 0.0);
  return first;
}

void ConicProblem::set_objective(int idx, double coeff) {
  require(idx >= 0 && idx < var_dim, "conic: objective index out of range");
  objective[idx] = coeff;
}

void ConicProblem::add_psd_block(PsdBlock block) {
  require(static_cast<int>(block.rows.size()) == svec_dim(block.dim),
          "conic: PSD block needs svec_dim(dim) rows");
  psd_blocks.push_back(std::move(block));
}

int ConicProblem::cone_row_count() const {
  int m = static_cast<int>(eq.size() + ineq.size());
  for (const auto& blk : psd_blocks) m += svec_dim(blk.dim);
  return m;
}

void ConicProblem::validate() const {
  auto check_row = [this](const LinearRow& row) {
    for (const auto& [idx, coeff] : row.terms) {
      require(idx >= 0 && idx < var_dim, "conic: row index out of range");
      require(std::isfinite(coeff), "conic: row coefficient not finite");
    }
    require(std::isfinite(row.constant), "conic: row constant not finite");
  };
  require(static_cast<int>(objective.size()) == var_dim, "conic: objective size mismatch");
  for (double c : objective) require(std::isfinite(c), "conic: objective not finite");
  for (const auto& r : eq) check_row(r);
  for (const auto& r : ineq) check_row(r);
  for (const auto& blk : psd_blocks) {
    require(blk.dim >= 1, "conic: PSD block dimension must be >= 1");
    require(static_cast<int>(blk.rows.size()) == svec_dim(blk.dim),
            "conic: PSD block row count mismatch");
    for (const auto& r : blk.rows) check_row(r);
  }
}

void ConicProblem::dump(std::ostream& out) const {
  out << "conic_problem\n";
  out << "var_dim " << var_dim << "\n";
  out << "objective";
  for (double c : objective) out << " " << c;
  out << "\n";
  auto put_row = [&out](const LinearRow& row) {
    out << row.constant;
    for (const auto& [idx, coeff] : row.terms) out << " " << idx << ":" << coeff;
    out << "\n";
  };
  out << "eq " << eq.size() << "\n";
  for (const auto& r : eq) put_row(r);
  out << "ineq " << ineq.size() << "\n";
  for (const auto& r : ineq) put_row(r);
  out << "psd_blocks " << psd_blocks.size() << "\n";
  for (const auto& blk : psd_blocks) {
    out << "block dim " << blk.dim << "\n";
    for (const auto& r : blk.rows) put_row(r);
  }
}

HermitianVarBlock HermitianVarBlock::create(ConicProblem& p, int n) {
  HermitianVarBlock blk;
  blk.n = n;
  blk.base = p.add_vars(n * n);
  return blk;
}

int HermitianVarBlock::diag_index(int i) const { return base + i; }

std::pair<int, int> HermitianVarBlock::offdiag_indices(int r, int c) const {
  // Strict lower triangle, column-major: offset of (r, c) among pairs.
  int count = 0;
  for (int cc = 0; cc < c; ++cc) count += n - 1 - cc;
  count += r - c - 1;
  const int idx = base + n + 2 * count;
  return {idx, idx + 1};
}

void HermitianVarBlock::add_trace(LinearRow& row, const CMat& b, double scale) const {
  for (int i = 0; i < n; ++i) row.add(diag_index(i), scale * b(i, i).real());
  for (int c = 0; c < n; ++c)
    for (int r = c + 1; r < n; ++r) {
      const auto [re, im] = offdiag_indices(r, c);
      row.add(re, 2.0 * scale * b(r, c).real());
      row.add(im, 2.0 * scale * b(r, c).imag());
    }
}

ConicProblem::PsdBlock HermitianVarBlock::embedding_block() const {
  ConicProblem::PsdBlock blk;
  blk.dim = 2 * n;
  const double rt2 = std::sqrt(2.0);
  for (int col = 0; col < 2 * n; ++col)
    for (int row = col; row < 2 * n; ++row) {
      LinearRow entry;
      const double w = (row == col) ? 1.0 : rt2;
      if (row < n && col < n) {
        if (row == col)
          entry.add(diag_index(row), w);
        else
          entry.add(offdiag_indices(row, col).first, w);
      } else if (row >= n && col < n) {
        const int r = row - n;
        if (r > col)
          entry.add(offdiag_indices(r, col).second, w);
        else if (r < col)
          entry.add(offdiag_indices(col, r).second, -w);
        // r == col: Im of a diagonal entry is zero.
      } else {
        const int r = row - n;
        const int c = col - n;
        if (r == c)
          entry.add(diag_index(r), w);
        else
          entry.add(offdiag_indices(r, c).first, w);
      }
      blk.rows.push_back(std::move(entry));
    }
  return blk;
}

CMat HermitianVarBlock::extract(const RVec& x) const {
  CMat w(n, n);
  for (int i = 0; i < n; ++i) w(i, i) = Cplx(x(diag_index(i)), 0.0);
  for (int c = 0; c < n; ++c)
    for (int r = c + 1; r < n; ++r) {
      const auto [re, im] = offdiag_indices(r, c);
      w(r, c) = Cplx(x(re), x(im));
      w(c, r) = std::conj(w(r, c));
    }
  return w;
}

namespace {

struct ConeLayout {
  int n = 0;           // variables
  int m = 0;           // rows
  int n_eq = 0;        // rows in the zero cone
  int n_ineq = 0;      // rows in the nonnegative cone
  std::vector<int> psd_dims;
  std::vector<int> psd_offsets;  // first row of each PSD block
};

// Assembled data: A x + s = b with s in {0} x R+ x PSD...; minimize c.x.
struct Assembled {
  RMat a;
  RVec b;
  RVec c;
  ConeLayout layout;
};

Assembled assemble(const ConicProblem& p) {
  Assembled out;
  out.layout.n = p.var_dim;
  out.layout.n_eq = static_cast<int>(p.eq.size());
  out.layout.n_ineq = static_cast<int>(p.ineq.size());
  out.layout.m = p.cone_row_count();
  out.a = RMat::Zero(out.layout.m, out.layout.n);
  out.b = RVec::Zero(out.layout.m);
  out.c = Eigen::Map<const RVec>(p.objective.data(), p.var_dim);

  int row = 0;
  auto put = [&](const LinearRow& r, double sign) {
    for (const auto& [idx, coeff] : r.terms) out.a(row, idx) += sign * coeff;
    ++row;
  };
  for (const auto& r : p.eq) {
    out.b(row) = r.constant;
    put(r, 1.0);
  }
  for (const auto& r : p.ineq) {
    out.b(row) = r.constant;
    put(r, 1.0);
  }
  for (const auto& blk : p.psd_blocks) {
    out.layout.psd_dims.push_back(blk.dim);
    out.layout.psd_offsets.push_back(row);
    for (const auto& r : blk.rows) {
      // s = offset + F x >= 0 (PSD)  ->  (-F) x + s = offset.
      out.b(row) = r.constant;
      put(r, -1.0);
    }
  }
  return out;
}

// Project v onto C = { z : b - z in K }.
void project_onto_c(const ConeLayout& lay, const RVec& b, RVec& v) {
  for (int i = 0; i < lay.n_eq; ++i) v(i) = b(i);
  for (int i = lay.n_eq; i < lay.n_eq + lay.n_ineq; ++i) v(i) = std::min(v(i), b(i));
  for (size_t blk = 0; blk < lay.psd_dims.size(); ++blk) {
    const int dim = lay.psd_dims[blk];
    const int off = lay.psd_offsets[blk];
    const int len = svec_dim(dim);
    RVec s = b.segment(off, len) - v.segment(off, len);
    if (dim == 1) {
      s(0) = std::max(s(0), 0.0);
    } else {
      Eigen::SelfAdjointEigenSolver<RMat> eig(unsvec(s, dim));
      const RVec lam = eig.eigenvalues().cwiseMax(0.0);
      const RMat proj = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
      s = svec(proj);
    }
    v.segment(off, len) = b.segment(off, len) - s;
  }
}

// Distance of y from the dual cone K* (free x R+ x PSD), infinity norm.
double dual_cone_violation(const ConeLayout& lay, const RVec& y) {
  double viol = 0.0;
  for (int i = lay.n_eq; i < lay.n_eq + lay.n_ineq; ++i) viol = std::max(viol, -y(i));
  for (size_t blk = 0; blk < lay.psd_dims.size(); ++blk) {
    const int dim = lay.psd_dims[blk];
    if (dim == 1) {
      viol = std::max(viol, -y(lay.psd_offsets[blk]));
      continue;
    }
    Eigen::SelfAdjointEigenSolver<RMat> eig(unsvec(y.segment(lay.psd_offsets[blk], svec_dim(dim)), dim));
    viol = std::max(viol, -eig.eigenvalues().minCoeff());
  }
  return viol;
}

struct Scaling {
  RVec row;   // E
  RVec col;   // D
  double cost = 1.0;
};

Scaling equilibrate(RMat& a, RVec& b, RVec& c, const ConeLayout& lay, int iters) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  Scaling s;
  s.row = RVec::Ones(m);
  s.col = RVec::Ones(n);

  auto group_rows = [&](RVec& norms) {
    // PSD block rows must share one scale to keep the cone invariant.
    for (size_t blk = 0; blk < lay.psd_dims.size(); ++blk) {
      const int off = lay.psd_offsets[blk];
      const int len = svec_dim(lay.psd_dims[blk]);
      const double g = norms.segment(off, len).maxCoeff();
      norms.segment(off, len).setConstant(g);
    }
  };

  for (int it = 0; it < iters; ++it) {
    // |b| participates so that rows whose constants dwarf their coefficients
    // do not dominate the iterate norms.
    RVec rn = a.cwiseAbs().rowwise().maxCoeff().cwiseMax(b.cwiseAbs());
    group_rows(rn);
    for (int i = 0; i < m; ++i) {
      const double d = rn(i) > 1e-24 ? 1.0 / std::sqrt(rn(i)) : 1.0;
      a.row(i) *= d;
      b(i) *= d;
      s.row(i) *= d;
    }
    RVec cn = a.cwiseAbs().colwise().maxCoeff();
    for (int j = 0; j < n; ++j) {
      const double d = cn(j) > 1e-24 ? 1.0 / std::sqrt(cn(j)) : 1.0;
      a.col(j) *= d;
      c(j) *= d;
      s.col(j) *= d;
    }
  }
  const double cmax = c.cwiseAbs().maxCoeff();
  s.cost = cmax > 1.0 ? 1.0 / cmax : 1.0;
  c *= s.cost;
  return s;
}

}  // namespace

ConicSolution ConicSolver::solve(const ConicProblem& problem, const ConicSolution* warm) const {
  problem.validate();
  Assembled data = assemble(problem);
  const ConeLayout& lay = data.layout;
  const int n = lay.n;
  const int m = lay.m;

  ConicSolution sol;
  if (n == 0) {
    sol.status = SolveStatus::optimal;
    sol.x = RVec::Zero(0);
    return sol;
  }

  Scaling scale = equilibrate(data.a, data.b, data.c, lay, settings_.equilibrate_iters);
  const RMat& a = data.a;
  const RVec& b = data.b;
  const RVec& c = data.c;

  RVec rho_vec(m);
  double rho = settings_.rho;
  if (warm && warm->final_rho > 0.0) rho = warm->final_rho;
  auto fill_rho = [&](double base) {
    for (int i = 0; i < m; ++i)
      rho_vec(i) = (i < lay.n_eq) ? base * settings_.eq_rho_factor : base;
  };
  fill_rho(rho);

  Eigen::LLT<RMat> kkt;
  auto refactor = [&]() {
    RMat mmat = settings_.sigma * RMat::Identity(n, n);
    mmat.noalias() += a.transpose() * rho_vec.asDiagonal() * a;
    kkt.compute(mmat);
  };
  refactor();

  RVec x = RVec::Zero(n);
  RVec z = RVec::Zero(m);
  RVec y = RVec::Zero(m);
  if (warm && warm->x.size() == n && warm->y.size() == m && warm->z.size() == m) {
    x = scale.col.cwiseInverse().asDiagonal() * warm->x;
    z = scale.row.asDiagonal() * warm->z;
    y = (scale.cost * warm->y.array() / scale.row.array()).matrix();
  }

  const double tol = settings_.tol;
  const double gap_tol = settings_.gap_tol > 0.0 ? settings_.gap_tol : settings_.tol;
  RVec y_prev_window = y;
  RVec x_prev_window = x;
  int next_adapt = 100;  // doubles after each adaptation so the penalty
                         // settles instead of oscillating near the optimum

  auto unscaled_obj = [&](const RVec& xs) {
    return (c.dot(xs)) / scale.cost;
  };

  // One relaxed ADMM sweep on the packed iterate [x; z; y].
  auto one_step = [&](RVec& x_io, RVec& z_io, RVec& y_io) {
    RVec rhs = settings_.sigma * x_io - c;
    rhs.noalias() += a.transpose() * (rho_vec.asDiagonal() * z_io - y_io);
    const RVec x_tilde = kkt.solve(rhs);
    const RVec z_tilde = a * x_tilde;
    const double alpha = settings_.alpha;
    const RVec x_next = alpha * x_tilde + (1.0 - alpha) * x_io;
    const RVec z_bar = alpha * z_tilde + (1.0 - alpha) * z_io;
    RVec v = z_bar + (y_io.array() / rho_vec.array()).matrix();
    project_onto_c(lay, b, v);
    y_io += (rho_vec.array() * (z_bar - v).array()).matrix();
    x_io = x_next;
    z_io = v;
  };

  sol.status = SolveStatus::max_iter;
  RVec best_x = x, best_z = z, best_y = y;
  double best_quality = std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= settings_.max_iter; ++it) {
    one_step(x, z, y);

    if (it % settings_.check_interval != 0 && it != settings_.max_iter) continue;

    // Relative residuals, per row and per column in unscaled units; the same
    // quantities drive termination and the penalty adaptation.
    const RVec ax = a * x;
    const RVec prim_scaled = ax - z;
    const RVec aty = a.transpose() * y;
    RVec dual_scaled = c + aty;

    double r_prim = 0.0;
    for (int i = 0; i < m; ++i) {
      const double ru = std::abs(prim_scaled(i)) / scale.row(i);
      const double den = 1.0 + std::max(std::abs(ax(i)), std::abs(z(i))) / scale.row(i);
      r_prim = std::max(r_prim, ru / den);
    }
    double r_dual = 0.0;
    for (int j = 0; j < n; ++j) {
      const double du = std::abs(dual_scaled(j)) / (scale.col(j) * scale.cost);
      const double den = 1.0 + (std::abs(aty(j)) + std::abs(c(j))) / (scale.col(j) * scale.cost);
      r_dual = std::max(r_dual, du / den);
    }

    const double p_obj = unscaled_obj(x);
    const double d_obj = -b.dot(y) / scale.cost;
    const double gap = std::abs(p_obj - d_obj);
    const double rel_gap = gap / (1.0 + std::abs(p_obj) + std::abs(d_obj));

    sol.primal_residual = r_prim;
    sol.dual_residual = r_dual;
    sol.gap = gap;
    sol.iterations = it;

    if (settings_.verbose && it % 2000 == 0)
      std::printf("  it=%6d relp=%9.2e reld=%9.2e gap=%9.2e obj=%12.5e rho=%8.2e\n", it,
                  r_prim, r_dual, gap, p_obj, rho);

    const double quality = std::max({r_prim, r_dual, rel_gap * tol / gap_tol});
    if (quality < best_quality) {
      best_quality = quality;
      best_x = x;
      best_z = z;
      best_y = y;
    }

    if (r_prim <= tol && r_dual <= tol && rel_gap <= gap_tol) {
      sol.status = SolveStatus::optimal;
      break;
    }

    // Primal infeasibility certificate from the dual direction.
    const RVec dy = y - y_prev_window;
    const double dy_n = dy.lpNorm<Eigen::Infinity>();
    if (dy_n > 1e-12) {
      const double aty_dir = (a.transpose() * dy).lpNorm<Eigen::Infinity>();
      const double b_dy = b.dot(dy);
      if (aty_dir <= 1e-5 * dy_n && b_dy < -1e-7 * std::max(1.0, dy_n) &&
          dual_cone_violation(lay, dy) <= 1e-7 * dy_n) {
        sol.status = SolveStatus::infeasible;
        sol.iterations = it;
        break;
      }
    }
    y_prev_window = y;
    x_prev_window = x;

    if (settings_.adaptive_rho && it >= next_adapt && best_quality > 100.0 * tol) {
      next_adapt = 2 * it;
      const double ratio = std::sqrt(r_prim / std::max(r_dual, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        rho = std::clamp(rho * ratio, 1e-6, 1e6);
        fill_rho(rho);
        refactor();
      }
    }
  }

  if (sol.status == SolveStatus::max_iter && best_quality < std::numeric_limits<double>::infinity()) {
    x = best_x;
    z = best_z;
    y = best_y;
    // Residuals of the reported iterate.
    const RVec ax = a * x;
    double rp = 0.0;
    for (int i = 0; i < m; ++i) {
      const double ru = std::abs(ax(i) - z(i)) / scale.row(i);
      const double den = 1.0 + std::max(std::abs(ax(i)), std::abs(z(i))) / scale.row(i);
      rp = std::max(rp, ru / den);
    }
    RVec dual_vec = c + a.transpose() * y;
    double rd = 0.0;
    for (int j = 0; j < n; ++j) {
      const double du = std::abs(dual_vec(j)) / (scale.col(j) * scale.cost);
      const double den = 1.0 + (std::abs((a.transpose() * y)(j)) + std::abs(c(j))) /
                                   (scale.col(j) * scale.cost);
      rd = std::max(rd, du / den);
    }
    sol.primal_residual = rp;
    sol.dual_residual = rd;
    sol.gap = std::abs(unscaled_obj(x) - (-b.dot(y) / scale.cost));
  }

  sol.iterations = std::min(it, settings_.max_iter);
  sol.final_rho = rho;
  if (!x.allFinite() || !y.allFinite()) {
    sol.status = SolveStatus::max_iter;
    sol.primal_residual = std::numeric_limits<double>::infinity();
    sol.dual_residual = std::numeric_limits<double>::infinity();
  }
  sol.x = scale.col.asDiagonal() * x;
  sol.z = (z.array() / scale.row.array()).matrix();
  sol.y = (scale.row.array() * y.array()).matrix() / scale.cost;
  sol.primal_obj = unscaled_obj(x);
  sol.dual_obj = -b.dot(y) / scale.cost;
  return sol;
}

}  // namespace iscpt
