#pragma once

#include <Eigen/Core>

#include <limits>
#include <vector>

namespace flowtrack {

constexpr double kUnassignable = std::numeric_limits<double>::infinity();

/// Result of a rectangular linear assignment.
struct Assignment {
  std::vector<int> row_to_col;  ///< col index per row, -1 if unassigned
  double total_cost = 0.0;      ///< sum over assigned pairs
};

/// Minimum-cost bipartite matching (Hungarian algorithm with potentials,
/// O(n^2 m)). Entries equal to kUnassignable forbid a pairing; rows that
/// can only be matched at forbidden entries stay unassigned. Rectangular
/// matrices are handled by leaving the surplus side unmatched.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

/// Maximum-weight variant: negates and delegates. Zero- or negative-weight
/// pairs are never forced; such rows remain unassigned.
Assignment solve_max_weight(const Eigen::MatrixXd& weight);

}  // namespace flowtrack
