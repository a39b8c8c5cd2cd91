#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <utility>
#include <vector>

#include "flowtrack/types.hpp"

namespace flowtrack {

enum class VarType { Detection, Entry, Exit, Transition };

/// Resolved meaning of one flow variable. For transitions `i` and `j` are
/// the endpoint detection indices; otherwise `i` is the detection and `j`
/// is unused (-1).
struct VarRef {
  VarType type;
  int i = -1;
  int j = -1;
};

/// Predicate deciding whether a candidate transition (earlier, later) is
/// kept. Returning false prunes the edge.
using SpatialGate = std::function<bool(const Detection&, const Detection&)>;

/// Gate that rejects pairs whose center distance exceeds
/// k * (h_i + h_j) / 2 per frame of gap.
SpatialGate center_distance_gate(double k);

/// Flow network over a detection set. Variables are laid out in contiguous
/// blocks [det | entry | exit | transition] so that the cost vector
/// c = [c_det, c_en, c_ex, c_tran] aligns with it.
struct FlowGraph {
  std::vector<Detection> detections;             ///< sorted by frame
  std::vector<std::pair<int, int>> transitions;  ///< (i, j), frame(j) > frame(i)
  std::vector<std::vector<int>> out_edges;       ///< transition ids leaving i
  std::vector<std::vector<int>> in_edges;        ///< transition ids entering j

  int num_detections() const { return static_cast<int>(detections.size()); }
  int num_transitions() const { return static_cast<int>(transitions.size()); }
  int num_variables() const { return 3 * num_detections() + num_transitions(); }

  int det_var(int i) const { return i; }
  int entry_var(int i) const { return num_detections() + i; }
  int exit_var(int i) const { return 2 * num_detections() + i; }
  int transition_var(int e) const { return 3 * num_detections() + e; }

  /// Inverse of the layout: variable index -> (type, endpoints).
  VarRef var_info(int v) const;
};

/// Builds the flow graph over `detections` (sorted internally by frame).
/// Transition edges exist exactly for pairs with frame difference in
/// [1, max_gap] that pass `gate` (no gate = keep all).
FlowGraph build_graph(std::vector<Detection> detections, int max_gap,
                      const SpatialGate& gate = {});

/// Linear constraints of the flow LP: equality rows Ax = b (flow
/// conservation, b identically zero) and box rows Gx <= h with
/// G = [I; -I], h = [1; 0].
struct ConstraintSet {
  Eigen::SparseMatrix<double> A;  ///< 2m x n
  Eigen::VectorXd b;              ///< 2m zeros
  Eigen::SparseMatrix<double> G;  ///< 2n x n
  Eigen::VectorXd h;              ///< [ones(n); zeros(n)]

  int num_variables() const { return static_cast<int>(A.cols()); }
  int num_equalities() const { return static_cast<int>(A.rows()); }
  int num_inequalities() const { return static_cast<int>(G.rows()); }
};

/// For each detection i emits the two conservation rows
///   en_i + sum_j tran_ji - det_i = 0
///   det_i - ex_i - sum_j tran_ij = 0
/// plus the 2n box rows.
ConstraintSet build_constraints(const FlowGraph& graph);

/// Binary flow vector encoding a ground-truth association.
struct GroundTruthFlow {
  Eigen::VectorXd x;
  /// Number of gt links that had no graph edge (track split at that point).
  int split_count = 0;
};

/// Encodes ground-truth tracks as a feasible binary flow. Ground-truth
/// detections are matched to graph detections by (identity, frame). A
/// consecutive gt pair with no graph edge splits the track into two flow
/// paths and bumps split_count.
GroundTruthFlow encode_ground_truth(const FlowGraph& graph,
                                    const std::vector<Trajectory>& gt_tracks);

/// True iff ||Ax - b||_inf <= tol and max(Gx - h) <= tol.
bool check_feasible(const ConstraintSet& cs, const Eigen::VectorXd& x, double tol);

}  // namespace flowtrack
