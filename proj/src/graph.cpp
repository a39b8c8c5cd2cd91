#include "flowtrack/graph.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace flowtrack {

SpatialGate center_distance_gate(double k) {
  return [k](const Detection& a, const Detection& b) {
    const double gap = std::max(1, b.frame - a.frame);
    const double scale = 0.5 * (a.h + b.h);
    return std::hypot(b.cx() - a.cx(), b.cy() - a.cy()) <= k * scale * gap;
  };
}

VarRef FlowGraph::var_info(int v) const {
  const int m = num_detections();
  if (v < 0 || v >= num_variables()) throw std::out_of_range("variable index out of range");
  if (v < m) return {VarType::Detection, v, -1};
  if (v < 2 * m) return {VarType::Entry, v - m, -1};
  if (v < 3 * m) return {VarType::Exit, v - 2 * m, -1};
  const auto& [i, j] = transitions[v - 3 * m];
  return {VarType::Transition, i, j};
}

FlowGraph build_graph(std::vector<Detection> detections, int max_gap, const SpatialGate& gate) {
  if (max_gap < 1) throw std::invalid_argument("max_gap must be >= 1");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.frame < b.frame; });

  FlowGraph g;
  g.detections = std::move(detections);
  const int m = g.num_detections();
  g.out_edges.resize(m);
  g.in_edges.resize(m);

  std::map<int, std::vector<int>> by_frame;
  for (int i = 0; i < m; ++i) by_frame[g.detections[i].frame].push_back(i);

  for (int i = 0; i < m; ++i) {
    const Detection& a = g.detections[i];
    for (int d = 1; d <= max_gap; ++d) {
      auto it = by_frame.find(a.frame + d);
      if (it == by_frame.end()) continue;
      for (int j : it->second) {
        if (gate && !gate(a, g.detections[j])) continue;
        const int e = g.num_transitions();
        g.transitions.emplace_back(i, j);
        g.out_edges[i].push_back(e);
        g.in_edges[j].push_back(e);
      }
    }
  }
  return g;
}

ConstraintSet build_constraints(const FlowGraph& graph) {
  const int m = graph.num_detections();
  const int n = graph.num_variables();

  std::vector<Eigen::Triplet<double>> ta;
  ta.reserve(4 * m + 2 * graph.num_transitions());
  for (int i = 0; i < m; ++i) {
    // en_i + sum_j tran_ji - det_i = 0
    ta.emplace_back(2 * i, graph.entry_var(i), 1.0);
    ta.emplace_back(2 * i, graph.det_var(i), -1.0);
    for (int e : graph.in_edges[i]) ta.emplace_back(2 * i, graph.transition_var(e), 1.0);
    // det_i - ex_i - sum_j tran_ij = 0
    ta.emplace_back(2 * i + 1, graph.det_var(i), 1.0);
    ta.emplace_back(2 * i + 1, graph.exit_var(i), -1.0);
    for (int e : graph.out_edges[i]) ta.emplace_back(2 * i + 1, graph.transition_var(e), -1.0);
  }

  ConstraintSet cs;
  cs.A.resize(2 * m, n);
  cs.A.setFromTriplets(ta.begin(), ta.end());
  cs.b = Eigen::VectorXd::Zero(2 * m);

  std::vector<Eigen::Triplet<double>> tg;
  tg.reserve(2 * n);
  for (int v = 0; v < n; ++v) {
    tg.emplace_back(v, v, 1.0);
    tg.emplace_back(n + v, v, -1.0);
  }
  cs.G.resize(2 * n, n);
  cs.G.setFromTriplets(tg.begin(), tg.end());
  cs.h.resize(2 * n);
  cs.h.head(n).setOnes();
  cs.h.tail(n).setZero();
  return cs;
}

GroundTruthFlow encode_ground_truth(const FlowGraph& graph,
                                    const std::vector<Trajectory>& gt_tracks) {
  const int m = graph.num_detections();

  std::map<std::pair<int, int>, int> det_of;  // (id, frame) -> graph index
  for (int i = 0; i < m; ++i) {
    const Detection& d = graph.detections[i];
    if (d.id < 0) continue;
    auto [it, inserted] = det_of.emplace(std::make_pair(d.id, d.frame), i);
    if (!inserted)
      throw std::invalid_argument("duplicate identity/frame pair in graph detections (id " +
                                  std::to_string(d.id) + ", frame " + std::to_string(d.frame) + ")");
  }

  std::unordered_map<long long, int> edge_of;  // i*m + j -> transition id
  edge_of.reserve(graph.transitions.size());
  for (int e = 0; e < graph.num_transitions(); ++e) {
    const auto& [i, j] = graph.transitions[e];
    edge_of[static_cast<long long>(i) * m + j] = e;
  }

  GroundTruthFlow gt;
  gt.x = Eigen::VectorXd::Zero(graph.num_variables());
  for (const Trajectory& track : gt_tracks) {
    int prev = -1;
    for (const Detection& d : track.detections) {
      auto it = det_of.find({track.id, d.frame});
      if (it == det_of.end()) continue;  // box not part of this graph
      const int cur = it->second;
      gt.x[graph.det_var(cur)] = 1.0;
      if (prev < 0) {
        gt.x[graph.entry_var(cur)] = 1.0;
      } else {
        auto eit = edge_of.find(static_cast<long long>(prev) * m + cur);
        if (eit != edge_of.end()) {
          gt.x[graph.transition_var(eit->second)] = 1.0;
        } else {
          // no edge spans this pair: close the path and open a new one
          gt.x[graph.exit_var(prev)] = 1.0;
          gt.x[graph.entry_var(cur)] = 1.0;
          ++gt.split_count;
        }
      }
      prev = cur;
    }
    if (prev >= 0) gt.x[graph.exit_var(prev)] = 1.0;
  }
  return gt;
}

bool check_feasible(const ConstraintSet& cs, const Eigen::VectorXd& x, double tol) {
  if (x.size() != cs.num_variables()) return false;
  const double eq = cs.num_equalities() > 0 ? (cs.A * x - cs.b).cwiseAbs().maxCoeff() : 0.0;
  const double ineq = cs.num_inequalities() > 0 ? (cs.G * x - cs.h).maxCoeff() : 0.0;
  return eq <= tol && ineq <= tol;
}

}  // namespace flowtrack
