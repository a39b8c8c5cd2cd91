#include "flowtrack/diff_layer.hpp"

#include <Eigen/QR>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowtrack {

QpLayer::QpLayer(double gamma, const ConstraintSet& cs, double tol, int max_iter)
    : gamma_(gamma), cs_(cs), tol_(tol), max_iter_(max_iter) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

const QpSolution& QpLayer::forward(const Eigen::VectorXd& c) {
  sol_ = solve_qp(gamma_, c, cs_, tol_, max_iter_);
  if (sol_.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("QP solve failed with status ") + to_string(sol_.status));
  has_solution_ = true;
  return sol_;
}

Eigen::VectorXd QpLayer::backward(const Eigen::VectorXd& grad_x) const {
  if (!has_solution_) throw std::logic_error("QpLayer::backward called before forward");
  const int n = cs_.num_variables();
  const int q = cs_.num_inequalities();
  const int p = cs_.num_equalities();
  if (grad_x.size() != n) throw std::invalid_argument("grad_x length does not match problem");

  const Eigen::VectorXd slack = cs_.G * sol_.x - cs_.h;

  // Transpose of the KKT Jacobian
  //   K = [ Q             G'         A' ]
  //       [ diag(lambda)G diag(Gx-h) 0  ]
  //       [ A             0          0  ],
  // assembled directly. Weakly active rows (slack and multiplier both
  // ~zero) get a small shift on the slack diagonal so the factorization
  // stays regular; that treats them as inactive.
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(n) + 4 * cs_.G.nonZeros() + 2 * cs_.A.nonZeros() + q);
  std::vector<int> weak_rows;
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, 2.0 * gamma_);
  for (int k = 0; k < cs_.G.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cs_.G, k); it; ++it) {
      // K(r+n, col) = lambda_r * G(r, col)  ->  Kt(col, r+n)
      t.emplace_back(it.col(), static_cast<int>(it.row()) + n, sol_.lambda[it.row()] * it.value());
      // K(col, r+n) = G'(col, r)  ->  Kt(r+n, col)
      t.emplace_back(static_cast<int>(it.row()) + n, it.col(), it.value());
    }
  }
  for (int r = 0; r < q; ++r) {
    double d = slack[r];
    if (std::abs(slack[r]) < kActiveTol && sol_.lambda[r] < kActiveTol) {
      d -= kDiagShift;
      weak_rows.push_back(r);
    }
    t.emplace_back(n + r, n + r, d);
  }
  for (int k = 0; k < cs_.A.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cs_.A, k); it; ++it) {
      // K(r+n+q, col) = A(r, col) -> Kt(col, r+n+q); K(col, r+n+q) = A'(col, r)
      t.emplace_back(it.col(), static_cast<int>(it.row()) + n + q, it.value());
      t.emplace_back(static_cast<int>(it.row()) + n + q, it.col(), it.value());
    }
  }

  Eigen::SparseMatrix<double> kt(n + q + p, n + q + p);
  kt.setFromTriplets(t.begin(), t.end());
  kt.makeCompressed();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + q + p);
  rhs.head(n) = grad_x;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(kt);
  Eigen::VectorXd d;
  if (lu.info() == Eigen::Success) {
    d = lu.solve(rhs);
  } else {
    // A degenerate active set (e.g. an integral vertex where every bound is
    // tight alongside the conservation rows) makes the transposed system
    // singular: the multipliers are not unique. Its null space has no primal
    // component, though, so the least-squares solution of the consistent
    // system still carries the unique d_x block. Fall back to a dense
    // rank-revealing solve; these instances are rare and small in practice.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod{Eigen::MatrixXd(kt)};
    d = cod.solve(rhs);
  }
  if (!d.head(n).allFinite()) {
    std::string rows;
    for (int r : weak_rows) rows += " " + std::to_string(r);
    throw std::runtime_error(
        "KKT backward solve produced non-finite gradients; weakly active rows:" +
        (rows.empty() ? std::string(" none") : rows));
  }
  return -d.head(n);
}

}  // namespace flowtrack
