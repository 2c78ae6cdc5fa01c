#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "iscpt/conic.hpp"
#include "iscpt/rng.hpp"

#include <sstream>

using namespace iscpt;

namespace {

CMat random_hermitian(int n, RandomStream& rng) {
  CMat a = rng.complex_normal_matrix(n, n);
  return 0.5 * (a + a.adjoint());
}

// Adds the constraint mat(x) >= lower where mat(x) is a dense symmetric
// matrix of individual scalar variables starting at var offset `base`
// (lower-triangle packing, no sqrt(2) weights on the variables themselves).
void add_symmetric_var_psd(ConicProblem& p, int base, int dim, const RMat& lower) {
  ConicProblem::PsdBlock blk;
  blk.dim = dim;
  const double rt2 = std::sqrt(2.0);
  int var = base;
  // svec rows in column-major lower-triangle order.
  std::vector<std::vector<int>> idx(dim, std::vector<int>(dim, 0));
  for (int c = 0, v = base; c < dim; ++c)
    for (int r = c; r < dim; ++r, ++v) idx[r][c] = idx[c][r] = v;
  (void)var;
  for (int c = 0; c < dim; ++c)
    for (int r = c; r < dim; ++r) {
      LinearRow row;
      row.add(idx[r][c], r == c ? 1.0 : rt2);
      row.constant = (r == c ? -lower(r, c) : -rt2 * lower(r, c));
      blk.rows.push_back(row);
    }
  p.add_psd_block(blk);
}

}  // namespace

TEST_CASE("svec round trip preserves inner products") {
  RandomStream rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 6);
    RMat a(n, n), b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        a(i, j) = a(j, i) = rng.normal();
        b(i, j) = b(j, i) = rng.normal();
      }
    CHECK(svec(a).dot(svec(b)) == doctest::Approx((a * b).trace()).epsilon(1e-12));
    CHECK((unsvec(svec(a), n) - a).norm() < 1e-14);
  }
}

TEST_CASE("hermitian embedding basics") {
  const CMat id = CMat::Identity(2, 2);
  CHECK((hermitian_to_real_embedding(id) - RMat::Identity(4, 4)).norm() < 1e-15);

  CMat pauli_y(2, 2);
  pauli_y << Cplx(0, 0), Cplx(0, -1), Cplx(0, 1), Cplx(0, 0);
  Eigen::SelfAdjointEigenSolver<RMat> eig(hermitian_to_real_embedding(pauli_y));
  RVec lam = eig.eigenvalues();
  CHECK(lam(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(lam(1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(lam(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lam(3) == doctest::Approx(1.0).epsilon(1e-12));

  CMat not_herm(2, 2);
  not_herm << Cplx(1, 0), Cplx(2, 1), Cplx(0, 0), Cplx(1, 0);
  CHECK_THROWS_AS(hermitian_to_real_embedding(not_herm), std::invalid_argument);
}

TEST_CASE("embedding spectrum doubles multiplicities and round trips") {
  RandomStream rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 4);
    const CMat h = random_hermitian(n, rng);
    const RMat e = hermitian_to_real_embedding(h);

    Eigen::SelfAdjointEigenSolver<CMat> ec(h);
    Eigen::SelfAdjointEigenSolver<RMat> er(e);
    for (int i = 0; i < n; ++i) {
      CHECK(er.eigenvalues()(2 * i) == doctest::Approx(ec.eigenvalues()(i)).epsilon(1e-9));
      CHECK(er.eigenvalues()(2 * i + 1) == doctest::Approx(ec.eigenvalues()(i)).epsilon(1e-9));
    }
    CHECK((complex_from_embedding(e) - h).norm() == 0.0);
  }
}

TEST_CASE("scalar lp: min x subject to x >= 3") {
  ConicProblem p;
  const int x = p.add_vars(1);
  p.set_objective(x, 1.0);
  LinearRow row;  // -x <= -3
  row.add(x, -1.0);
  row.constant = -3.0;
  p.add_ineq(row);

  const ConicSolution sol = ConicSolver().solve(p);
  CHECK(sol.status == SolveStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(sol.gap < 1e-5);
}

TEST_CASE("psd ordering: min tr X subject to X >= I") {
  ConicProblem p;
  const int base = p.add_vars(3);  // x00, x10, x11
  p.set_objective(base + 0, 1.0);
  p.set_objective(base + 2, 1.0);
  add_symmetric_var_psd(p, base, 2, RMat::Identity(2, 2));

  const ConicSolution sol = ConicSolver().solve(p);
  CHECK(sol.status == SolveStatus::optimal);
  CHECK(sol.primal_obj == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(sol.x(base + 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(sol.x(base + 1) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(sol.x(base + 2) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("random diagonal sdp suite with analytic optima") {
  // min tr(C X) s.t. X >= D with C, D diagonal positive: optimum X = D.
  RandomStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    RVec c(n), d(n);
    for (int i = 0; i < n; ++i) {
      c(i) = 0.5 + rng.uniform();
      d(i) = 0.5 + rng.uniform();
    }
    ConicProblem p;
    const int base = p.add_vars(svec_dim(n));
    RMat lower = d.asDiagonal();
    {
      int v = base;
      for (int col = 0; col < n; ++col)
        for (int row = col; row < n; ++row, ++v)
          if (row == col) p.set_objective(v, c(col));
    }
    add_symmetric_var_psd(p, base, n, lower);

    ConicSettings settings;
    settings.tol = 1e-8;
    const ConicSolution sol = ConicSolver(settings).solve(p);
    CHECK(sol.status == SolveStatus::optimal);
    CHECK(std::abs(sol.primal_obj - c.dot(d)) <= 1e-6 * std::max(1.0, std::abs(c.dot(d))));
    CHECK(std::abs(sol.primal_obj - sol.dual_obj) < 1e-6 * std::max(1.0, std::abs(sol.primal_obj)));
  }
}

TEST_CASE("weak duality and constraint replay on a mixed problem") {
  // min x0 + 2 x1 s.t. x0 + x1 = 1, x0 <= 0.8, diag(x0, x1) PSD.
  ConicProblem p;
  const int base = p.add_vars(2);
  p.set_objective(base, 1.0);
  p.set_objective(base + 1, 2.0);
  LinearRow eq;
  eq.add(base, 1.0);
  eq.add(base + 1, 1.0);
  eq.constant = 1.0;
  p.add_eq(eq);
  LinearRow ub;
  ub.add(base, 1.0);
  ub.constant = 0.8;
  p.add_ineq(ub);
  ConicProblem::PsdBlock blk;
  blk.dim = 2;
  blk.rows.resize(3);
  blk.rows[0].add(base, 1.0);
  blk.rows[1] = LinearRow{};
  blk.rows[2].add(base + 1, 1.0);
  p.add_psd_block(blk);

  const ConicSolution sol = ConicSolver().solve(p);
  CHECK(sol.status == SolveStatus::optimal);
  // Optimum at x0 as large as allowed: (0.8, 0.2).
  CHECK(sol.x(base) == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(sol.x(base + 1) == doctest::Approx(0.2).epsilon(1e-5));
  CHECK(sol.primal_obj >= sol.dual_obj - 1e-6);
  // Replay: all constraints within 10x tolerance.
  CHECK(std::abs(sol.x(base) + sol.x(base + 1) - 1.0) < 1e-6);
  CHECK(sol.x(base) < 0.8 + 1e-6);
  CHECK(sol.x(base + 1) > -1e-6);
}

TEST_CASE("objective scaling leaves the argmin unchanged") {
  RandomStream rng(5);
  ConicProblem p;
  const int base = p.add_vars(2);
  p.set_objective(base, 1.0);
  p.set_objective(base + 1, 3.0);
  LinearRow r1;
  r1.add(base, -1.0);
  r1.add(base + 1, -1.0);
  r1.constant = -2.0;  // x0 + x1 >= 2
  p.add_ineq(r1);
  LinearRow r2;
  r2.add(base, -1.0);
  r2.constant = 0.0;  // x0 >= 0
  p.add_ineq(r2);
  LinearRow r3;
  r3.add(base + 1, -1.0);
  r3.constant = 0.0;
  p.add_ineq(r3);

  const ConicSolution a = ConicSolver().solve(p);
  ConicProblem scaled = p;
  for (auto& c : scaled.objective) c *= 37.0;
  const ConicSolution b = ConicSolver().solve(scaled);
  CHECK(a.status == SolveStatus::optimal);
  CHECK(b.status == SolveStatus::optimal);
  CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("infeasible problem is certified") {
  ConicProblem p;
  const int x = p.add_vars(1);
  p.set_objective(x, 1.0);
  LinearRow lo;  // x >= 3
  lo.add(x, -1.0);
  lo.constant = -3.0;
  p.add_ineq(lo);
  LinearRow hi;  // x <= 1
  hi.add(x, 1.0);
  hi.constant = 1.0;
  p.add_ineq(hi);

  ConicSettings settings;
  settings.max_iter = 20000;
  const ConicSolution sol = ConicSolver(settings).solve(p);
  CHECK(sol.status == SolveStatus::infeasible);
}

TEST_CASE("small sdp against dense grid search") {
  // min c.x over x in R^2 with X(x) = [[1 + x0, x1], [x1, 1 + x0]] PSD and
  // box rows; grid oracle at step 0.01.
  RandomStream rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    RVec c(2);
    c << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    ConicProblem p;
    const int base = p.add_vars(2);
    p.set_objective(base, c(0));
    p.set_objective(base + 1, c(1));
    // |x_i| <= 1 box.
    for (int i = 0; i < 2; ++i) {
      LinearRow up;
      up.add(base + i, 1.0);
      up.constant = 1.0;
      p.add_ineq(up);
      LinearRow dn;
      dn.add(base + i, -1.0);
      dn.constant = 1.0;
      p.add_ineq(dn);
    }
    ConicProblem::PsdBlock blk;
    blk.dim = 2;
    blk.rows.resize(3);
    blk.rows[0].add(base, 1.0);
    blk.rows[0].constant = 1.0;
    blk.rows[1].add(base + 1, std::sqrt(2.0));
    blk.rows[2].add(base, 1.0);
    blk.rows[2].constant = 1.0;
    p.add_psd_block(blk);

    const ConicSolution sol = ConicSolver().solve(p);
    CHECK(sol.status == SolveStatus::optimal);

    double best = std::numeric_limits<double>::infinity();
    for (double x0 = -1.0; x0 <= 1.0 + 1e-12; x0 += 0.01)
      for (double x1 = -1.0; x1 <= 1.0 + 1e-12; x1 += 0.01) {
        // PSD iff 1 + x0 >= |x1|.
        if (1.0 + x0 >= std::abs(x1) - 1e-12) best = std::min(best, c(0) * x0 + c(1) * x1);
      }
    CHECK(sol.primal_obj <= best + 1e-3);
    CHECK(sol.primal_obj >= best - 1e-3);
  }
}

TEST_CASE("problem dump is self describing") {
  ConicProblem p;
  const int x = p.add_vars(2);
  p.set_objective(x, 1.0);
  LinearRow row;
  row.add(x + 1, 2.0);
  row.constant = 5.0;
  p.add_ineq(row);
  std::ostringstream out;
  p.dump(out);
  const std::string text = out.str();
  CHECK(text.find("conic_problem") != std::string::npos);
  CHECK(text.find("var_dim 2") != std::string::npos);
  CHECK(text.find("ineq 1") != std::string::npos);
}

TEST_CASE("warm start reuses iterates") {
  ConicProblem p;
  const int x = p.add_vars(1);
  p.set_objective(x, 1.0);
  LinearRow lo;
  lo.add(x, -1.0);
  lo.constant = -3.0;
  p.add_ineq(lo);
  const ConicSolution cold = ConicSolver().solve(p);
  const ConicSolution warm = ConicSolver().solve(p, &cold);
  CHECK(warm.status == SolveStatus::optimal);
  CHECK(warm.iterations <= cold.iterations);
}
