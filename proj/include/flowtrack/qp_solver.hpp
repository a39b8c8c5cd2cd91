#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

#include "flowtrack/graph.hpp"

namespace flowtrack {

enum class SolveStatus { Optimal, MaxIter, Infeasible };

const char* to_string(SolveStatus s);

/// Primal/dual solution of the damped QP
///   min gamma*||x||^2 + c'x  s.t.  Ax = b, Gx <= h.
struct QpSolution {
  Eigen::VectorXd x;       ///< primal, length n
  Eigen::VectorXd lambda;  ///< inequality duals (>= 0), one per G row
  Eigen::VectorXd nu;      ///< equality duals, one per A row
  double objective = 0.0;  ///< gamma*||x||^2 + c'x
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
};

/// Primal-dual interior point (Mehrotra predictor-corrector) for the
/// box-constrained QP with Q = 2*gamma*I. Requires the ConstraintSet box
/// structure G = [I; -I]; h may be any valid bounds. Iterates stay
/// strictly inside the box; equality feasibility is attained in the limit.
QpSolution solve_qp(double gamma, const Eigen::VectorXd& c, const ConstraintSet& cs,
                    double tol = 1e-8, int max_iter = 100);

/// Exact integral min-cost flow solution.
struct FlowSolution {
  Eigen::VectorXd x;  ///< binary, graph layout
  double objective = 0.0;
};

/// Successive shortest augmenting paths with free flow amount: augments
/// along the cheapest source->sink path while that path has negative
/// cost. Globally optimal for the totally unimodular flow polytope.
FlowSolution solve_flow_exact(const Eigen::VectorXd& c, const FlowGraph& graph);

/// Componentwise nearest-binary rounding plus an integrality report.
struct RoundedSolution {
  Eigen::VectorXd x;            ///< entries in {0, 1}
  double max_deviation = 0.0;   ///< max distance of the input to {0, 1}
  bool integral = false;        ///< max_deviation <= tol
};

struct InfeasibleRoundingError : std::runtime_error {
  explicit InfeasibleRoundingError(std::string msg, std::vector<int> rows)
      : std::runtime_error(std::move(msg)), violating_rows(std::move(rows)) {}
  std::vector<int> violating_rows;  ///< offending constraint rows (eq then ineq)
};

/// Rounds and re-checks feasibility; throws InfeasibleRoundingError if the
/// rounded vector violates the constraints (gamma too large or solver
/// failure upstream).
RoundedSolution round_solution(const Eigen::VectorXd& x, const ConstraintSet& cs,
                               double tol = 1e-4);

}  // namespace flowtrack
