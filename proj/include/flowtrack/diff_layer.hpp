#pragma once

#include <Eigen/Core>

#include "flowtrack/graph.hpp"
#include "flowtrack/qp_solver.hpp"

namespace flowtrack {

/// Forward+backward pass through the relaxed flow program.
///
/// Forward: solve the damped QP for x*(c).  Backward: implicit
/// differentiation of the KKT conditions at the solution.  With
///
///   K = [ Q            G'            A' ]
///       [ diag(lambda)G diag(Gx-h)    0 ]
///       [ A             0             0 ]
///
/// the adjoint solve K' [d_x; d_lambda; d_nu] = [dL/dx; 0; 0] yields
/// dL/dc = -d_x.  Weakly active rows (both slack and multiplier below
/// kActiveTol) make K nearly singular; a small diagonal shift on the
/// primal block restores a usable factorization.
class QpLayer {
 public:
  QpLayer(double gamma, const ConstraintSet& cs, double tol = 1e-8, int max_iter = 100);

  /// Solves the QP. Throws std::runtime_error when the solver fails to
  /// converge to `tol`.
  const QpSolution& forward(const Eigen::VectorXd& c);

  /// Gradient of a scalar loss w.r.t. the cost vector, given dL/dx at the
  /// last forward() solution. Must be called after forward().
  Eigen::VectorXd backward(const Eigen::VectorXd& grad_x) const;

  const QpSolution& solution() const { return sol_; }

  static constexpr double kActiveTol = 1e-7;   ///< weak-activity detection
  static constexpr double kDiagShift = 1e-10;  ///< regularization magnitude

 private:
  double gamma_;
  const ConstraintSet& cs_;
  double tol_;
  int max_iter_;
  QpSolution sol_;
  bool has_solution_ = false;
};

}  // namespace flowtrack
