#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "iscpt/common.hpp"

namespace iscpt {

// Scaled vectorization of a symmetric matrix: diagonal entries as is,
// off-diagonal entries times sqrt(2), lower triangle in column-major order.
// Preserves Frobenius inner products, so PSD projection can be done on the
// reshaped matrix.
int svec_dim(int n);
RVec svec(const RMat& s);
RMat unsvec(const RVec& v, int n);

// [[Re H, -Im H], [Im H, Re H]]; PSD iff H is, spectrum doubled.
RMat hermitian_to_real_embedding(const CMat& h, double herm_tol = 1e-9);
CMat complex_from_embedding(const RMat& e);

// Sparse affine row: sum_j coeff_j x_idx_j (+ rhs/offset depending on use).
struct LinearRow {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  void add(int idx, double coeff) {
    if (coeff != 0.0) terms.emplace_back(idx, coeff);
  }
};

// Standard-form convex problem over PSD and nonnegative cones plus affine
// equalities:
//   minimize    objective . x
//   subject to  eq:   row . x == constant
//               ineq: row . x <= constant
//               psd:  unsvec(offset + F x) is PSD, per block
struct ConicProblem {
  int var_dim = 0;
  std::vector<double> objective;

  std::vector<LinearRow> eq;
  std::vector<LinearRow> ineq;

  struct PsdBlock {
    int dim = 0;
    std::vector<LinearRow> rows;  // svec_dim(dim) rows; constant = offset
  };
  std::vector<PsdBlock> psd_blocks;

  int add_vars(int count);
  void set_objective(int idx, double coeff);
  void add_eq(LinearRow row) { eq.push_back(std::move(row)); }
  void add_ineq(LinearRow row) { ineq.push_back(std::move(row)); }
  void add_psd_block(PsdBlock block);

  int cone_row_count() const;
  void validate() const;

  // Self-describing text dump for offline cross-checks.
  void dump(std::ostream& out) const;
};

// Complex Hermitian decision matrix, parameterized by n^2 real variables
// (diagonal first, then (Re, Im) pairs of the strict lower triangle in
// column-major order). The PSD constraint is imposed on the real embedding,
// which keeps the structural coupling implicit.
struct HermitianVarBlock {
  int n = 0;
  int base = 0;

  static HermitianVarBlock create(ConicProblem& p, int n);

  int dof() const { return n * n; }
  int diag_index(int i) const;
  // r > c; returns (index of Re, index of Im) of W(r, c).
  std::pair<int, int> offdiag_indices(int r, int c) const;

  // Appends scale * tr(B W) to the row; B must be Hermitian.
  void add_trace(LinearRow& row, const CMat& b, double scale) const;

  ConicProblem::PsdBlock embedding_block() const;
  CMat extract(const RVec& x) const;
};

enum class SolveStatus { optimal, infeasible, max_iter };

struct ConicSolution {
  RVec x;
  SolveStatus status = SolveStatus::max_iter;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;

  // Internal iterates kept for warm starting subsequent related solves.
  RVec y;
  RVec z;
  double final_rho = 0.0;
};

struct ConicSettings {
  double tol = 1e-7;
  double gap_tol = 0.0;  // relative duality-gap tolerance; 0 uses tol
  int max_iter = 50000;
  double rho = 0.1;
  double eq_rho_factor = 1e3;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int check_interval = 25;
  int equilibrate_iters = 10;
  bool verbose = false;
};

// First-order operator-splitting solver (ADMM) over the cone product.
// Deterministic given inputs; per-iteration cost is one linear solve plus one
// projection per cone block.
class ConicSolver {
 public:
  ConicSolver() = default;
  explicit ConicSolver(ConicSettings settings) : settings_(settings) {}

  ConicSolution solve(const ConicProblem& problem, const ConicSolution* warm_start = nullptr) const;

  const ConicSettings& settings() const { return settings_; }
  ConicSettings& settings() { return settings_; }

 private:
  ConicSettings settings_;
};

}  // namespace iscpt
