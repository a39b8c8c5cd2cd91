#include "flowtrack/tracking.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "flowtrack/log.hpp"
#include "flowtrack/qp_solver.hpp"

namespace flowtrack {

namespace {

bool selected(const Eigen::VectorXd& x, int v) { return x[v] > 0.5; }

/// Bit-exact identity of a box within one frame (stitching key).
using BoxKey = std::tuple<int, std::uint64_t, std::uint64_t, std::uint64_t, std::uint64_t>;

BoxKey box_key(const Detection& d) {
  return {d.frame, std::bit_cast<std::uint64_t>(d.x), std::bit_cast<std::uint64_t>(d.y),
          std::bit_cast<std::uint64_t>(d.w), std::bit_cast<std::uint64_t>(d.h)};
}

/// Joint stable sort of detections and embeddings by frame; returns the
/// permutation applied (sorted position -> original index).
std::vector<int> sort_by_frame(std::vector<Detection>& dets, std::vector<Embedding>& embeds) {
  std::vector<int> perm(dets.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return dets[a].frame < dets[b].frame; });
  std::vector<Detection> d2(dets.size());
  std::vector<Embedding> e2(embeds.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    d2[k] = dets[perm[k]];
    if (!embeds.empty()) e2[k] = embeds[perm[k]];
  }
  dets = std::move(d2);
  embeds = std::move(e2);
  return perm;
}

}  // namespace

std::vector<Trajectory> decode_tracks(const FlowGraph& graph, const Eigen::VectorXd& x) {
  const int m = graph.num_detections();
  if (x.size() != graph.num_variables())
    throw std::invalid_argument("decode_tracks: flow vector has wrong length");

  for (int i = 0; i < m; ++i) {
    int det = selected(x, graph.det_var(i)) ? 1 : 0;
    int inflow = selected(x, graph.entry_var(i)) ? 1 : 0;
    for (int e : graph.in_edges[i]) inflow += selected(x, graph.transition_var(e)) ? 1 : 0;
    int outflow = selected(x, graph.exit_var(i)) ? 1 : 0;
    for (int e : graph.out_edges[i]) outflow += selected(x, graph.transition_var(e)) ? 1 : 0;
    if (inflow != det || outflow != det)
      throw std::runtime_error("flow conservation violated at detection " + std::to_string(i) +
                               " (frame " + std::to_string(graph.detections[i].frame + 1) +
                               "): in=" + std::to_string(inflow) + " out=" +
                               std::to_string(outflow) + " det=" + std::to_string(det));
  }

  std::vector<bool> visited(m, false);
  std::vector<Trajectory> tracks;
  for (int i = 0; i < m; ++i) {
    if (!selected(x, graph.entry_var(i))) continue;
    Trajectory t;
    t.id = static_cast<int>(tracks.size());
    int cur = i;
    while (true) {
      if (visited[cur])
        throw std::runtime_error("detection " + std::to_string(cur) + " used by two tracks");
      visited[cur] = true;
      Detection d = graph.detections[cur];
      d.id = t.id;
      t.detections.push_back(d);
      t.det_indices.push_back(cur);
      int next = -1;
      for (int e : graph.out_edges[cur]) {
        if (selected(x, graph.transition_var(e))) {
          next = graph.transitions[e].second;
          break;  // conservation guarantees at most one
        }
      }
      if (next < 0) break;
      cur = next;
    }
    tracks.push_back(std::move(t));
  }

  for (int i = 0; i < m; ++i)
    if (selected(x, graph.det_var(i)) && !visited[i])
      throw std::runtime_error("selected detection " + std::to_string(i) +
                               " not reached from any entry");
  return tracks;
}

std::vector<Trajectory> track_batch(const std::vector<Detection>& detections,
                                    const std::vector<Embedding>& embeddings,
                                    const MlpParams& w, const TrackConfig& cfg) {
  if (detections.empty()) return {};
  if (embeddings.size() != detections.size())
    throw std::invalid_argument("tracking requires one embedding per detection (" +
                                std::to_string(detections.size()) + " detections, " +
                                std::to_string(embeddings.size()) + " embeddings)");

  std::vector<Detection> dets = detections;
  std::vector<Embedding> embeds = embeddings;
  std::vector<int> perm = sort_by_frame(dets, embeds);

  SpatialGate gate;
  if (cfg.gate_distance > 0) gate = center_distance_gate(cfg.gate_distance);
  FlowGraph graph = build_graph(dets, cfg.delta, gate);
  std::vector<EdgeFeature> features = compute_edge_features(graph, embeds);
  CostVector costs = assemble_cost(graph, features, w, cfg.entry_exit_cost);

  Eigen::VectorXd x;
  if (cfg.solver == "qp") {
    ConstraintSet cs = build_constraints(graph);
    QpSolution sol = solve_qp(cfg.gamma, costs.c, cs, cfg.qp_tol);
    if (sol.status != SolveStatus::Optimal)
      throw std::runtime_error(std::string("batch solve failed: ") + to_string(sol.status));
    RoundedSolution rounded = round_solution(sol.x, cs);
    if (!rounded.integral)
      log_warn("relaxed solution off the vertex by ", rounded.max_deviation,
               "; rounding may be suboptimal (consider a smaller gamma)");
    x = std::move(rounded.x);
  } else {
    x = solve_flow_exact(costs.c, graph).x;
  }

  std::vector<Trajectory> tracks = decode_tracks(graph, x);
  for (Trajectory& t : tracks)
    for (int& k : t.det_indices) k = perm[k];
  return tracks;
}

std::vector<Trajectory> stitch_batches(const std::vector<std::vector<Trajectory>>& batches) {
  std::vector<Trajectory> merged;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (b == 0 || merged.empty()) {
      for (const Trajectory& t : batches[b]) merged.push_back(t);
      continue;
    }

    std::map<BoxKey, int> owner;
    for (std::size_t k = 0; k < merged.size(); ++k)
      for (const Detection& d : merged[k].detections) owner[box_key(d)] = static_cast<int>(k);

    // Shared-detection counts between every (existing, new) pair.
    const std::vector<Trajectory>& batch = batches[b];
    std::vector<std::tuple<int, int, int>> cands;  // (-count, existing, new)
    for (std::size_t nt = 0; nt < batch.size(); ++nt) {
      std::map<int, int> counts;
      for (const Detection& d : batch[nt].detections) {
        auto it = owner.find(box_key(d));
        if (it != owner.end()) ++counts[it->second];
      }
      for (const auto& [mi, cnt] : counts) cands.emplace_back(-cnt, mi, static_cast<int>(nt));
    }
    std::sort(cands.begin(), cands.end());

    std::vector<bool> existing_taken(merged.size(), false), new_assigned(batch.size(), false);
    std::vector<int> target(batch.size(), -1);
    for (const auto& [neg_cnt, mi, nt] : cands) {
      if (new_assigned[nt]) continue;
      if (existing_taken[mi]) {
        log_debug("stitch: track ", merged[mi].id, " claimed by a second batch track (",
                  -neg_cnt, " shared); keeping the stronger link");
        continue;
      }
      existing_taken[mi] = true;
      new_assigned[nt] = true;
      target[nt] = mi;
    }

    for (std::size_t nt = 0; nt < batch.size(); ++nt) {
      if (target[nt] < 0) {
        merged.push_back(batch[nt]);
        continue;
      }
      // Merge by frame; on a shared frame the existing box wins.
      Trajectory& dst = merged[target[nt]];
      const Trajectory& src = batch[nt];
      std::vector<Detection> dets;
      std::vector<int> idxs;
      std::size_t a = 0, c = 0;
      while (a < dst.detections.size() || c < src.detections.size()) {
        if (c >= src.detections.size() ||
            (a < dst.detections.size() &&
             dst.detections[a].frame <= src.detections[c].frame)) {
          if (c < src.detections.size() &&
              dst.detections[a].frame == src.detections[c].frame)
            ++c;  // duplicate frame: drop the new copy
          dets.push_back(dst.detections[a]);
          idxs.push_back(dst.det_indices[a]);
          ++a;
        } else {
          dets.push_back(src.detections[c]);
          idxs.push_back(src.det_indices[c]);
          ++c;
        }
      }
      dst.detections = std::move(dets);
      dst.det_indices = std::move(idxs);
    }
  }

  for (std::size_t k = 0; k < merged.size(); ++k) {
    merged[k].id = static_cast<int>(k);
    for (Detection& d : merged[k].detections) d.id = merged[k].id;
  }
  return merged;
}

std::vector<Trajectory> associate_tracklets(std::vector<Trajectory> tracklets,
                                            const std::vector<Embedding>& embeddings,
                                            const TrackConfig& cfg) {
  const int n = static_cast<int>(tracklets.size());
  if (n < 2) return tracklets;
  if (embeddings.empty()) {
    log_warn("second stage skipped: no appearance vectors available");
    return tracklets;
  }

  // Mean (un-renormalized) appearance per tracklet.
  std::vector<Eigen::VectorXd> mean(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.front().dim());
    int count = 0;
    for (int k : tracklets[i].det_indices) {
      if (k < 0) continue;
      if (k >= static_cast<int>(embeddings.size()))
        throw std::out_of_range("tracklet references detection " + std::to_string(k) +
                                " outside the embedding table");
      sum += embeddings[k].vec;
      ++count;
    }
    mean[i] = count > 0 ? Eigen::VectorXd(sum / count) : sum;
  }

  // Tracklet-level flow graph: a node per tracklet, an edge where the
  // temporal gap and the per-frame displacement admit a continuation.
  FlowGraph g;
  g.detections.reserve(n);
  for (const Trajectory& t : tracklets) g.detections.push_back(t.detections.front());
  g.out_edges.resize(n);
  g.in_edges.resize(n);
  std::vector<double> edge_cost;
  for (int i = 0; i < n; ++i) {
    const Detection& tail = tracklets[i].detections.back();
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      int gap = tracklets[j].start_frame() - tracklets[i].end_frame();
      if (gap < 1 || gap > cfg.max_tracklet_gap) continue;
      const Detection& head = tracklets[j].detections.front();
      double dist = std::hypot(head.cx() - tail.cx(), head.cy() - tail.cy());
      double scale = 0.5 * (head.h + tail.h);
      if (dist / (scale * gap) > cfg.tau_dist) continue;
      int e = static_cast<int>(g.transitions.size());
      g.transitions.emplace_back(i, j);
      g.out_edges[i].push_back(e);
      g.in_edges[j].push_back(e);
      edge_cost.push_back(1.0 - mean[i].dot(mean[j]));
    }
  }
  if (g.transitions.empty()) return tracklets;

  // merge_threshold sets how negative an edge must be to pay for the
  // selection overhead: entries/exits cost threshold/2 each and every
  // node pays -threshold, so a lone pair merges iff 1 - <f_i,f_j> is
  // below the threshold.
  Eigen::VectorXd c(g.num_variables());
  const int E = g.num_transitions();
  c.head(n).setConstant(-cfg.merge_threshold);
  c.segment(n, 2 * n).setConstant(0.5 * cfg.merge_threshold);
  for (int e = 0; e < E; ++e) c[g.transition_var(e)] = edge_cost[e];

  Eigen::VectorXd x = solve_flow_exact(c, g).x;
  std::vector<Trajectory> chains = decode_tracks(g, x);

  std::vector<int> chain_of(n, -1);  // tracklet -> chain containing it
  for (std::size_t ci = 0; ci < chains.size(); ++ci)
    for (int member : chains[ci].det_indices) chain_of[member] = static_cast<int>(ci);

  int joins = 0;
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) {
    int ci = chain_of[i];
    if (ci < 0) {
      out.push_back(std::move(tracklets[i]));
      continue;
    }
    const std::vector<int>& members = chains[ci].det_indices;
    if (members.front() != i) continue;  // absorbed into an earlier tracklet
    Trajectory joined;
    joined.id = tracklets[i].id;  // the earlier (time-first) identity wins
    for (int mk : members) {
      for (std::size_t d = 0; d < tracklets[mk].detections.size(); ++d) {
        Detection det = tracklets[mk].detections[d];
        det.id = joined.id;
        joined.detections.push_back(det);
        joined.det_indices.push_back(tracklets[mk].det_indices[d]);
      }
    }
    joins += static_cast<int>(members.size()) - 1;
    out.push_back(std::move(joined));
  }
  log_info("second stage joined ", joins, " tracklet link(s), ", out.size(),
           " track(s) remain");
  return out;
}

void interpolate_gaps(std::vector<Trajectory>& tracks) {
  for (Trajectory& t : tracks) {
    if (t.detections.size() < 2) continue;
    std::vector<Detection> dets;
    std::vector<int> idxs;
    for (std::size_t k = 0; k < t.detections.size(); ++k) {
      const Detection& a = t.detections[k];
      dets.push_back(a);
      idxs.push_back(t.det_indices[k]);
      if (k + 1 >= t.detections.size()) break;
      const Detection& b = t.detections[k + 1];
      for (int f = a.frame + 1; f < b.frame; ++f) {
        double s = static_cast<double>(f - a.frame) / (b.frame - a.frame);
        Detection d;
        d.frame = f;
        d.id = t.id;
        d.x = a.x + s * (b.x - a.x);
        d.y = a.y + s * (b.y - a.y);
        d.w = a.w + s * (b.w - a.w);
        d.h = a.h + s * (b.h - a.h);
        d.score = 0.0;
        d.interpolated = true;
        dets.push_back(d);
        idxs.push_back(-1);
      }
    }
    t.detections = std::move(dets);
    t.det_indices = std::move(idxs);
  }
}

std::vector<Trajectory> track_sequence(const Sequence& seq, const MlpParams& w,
                                       const TrackConfig& cfg) {
  if (seq.detections.empty()) return {};
  std::vector<Detection> dets = seq.detections;
  std::vector<Embedding> embeds = seq.embeddings;
  if (embeds.size() != dets.size())
    throw std::invalid_argument("sequence " + seq.name +
                                " needs one embedding per detection (embed.txt)");
  std::vector<int> perm = sort_by_frame(dets, embeds);

  const int first_frame = dets.front().frame;
  const int n_frames = dets.back().frame + 1;
  const int stride = cfg.batch_len - cfg.batch_overlap;

  std::vector<int> frames(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) frames[i] = dets[i].frame;

  std::vector<std::vector<Trajectory>> batch_tracks;
  for (int start = first_frame; start < n_frames; start += stride) {
    auto lo = std::lower_bound(frames.begin(), frames.end(), start) - frames.begin();
    auto hi = std::lower_bound(frames.begin(), frames.end(), start + cfg.batch_len) -
              frames.begin();
    if (lo >= hi) continue;
    std::vector<Detection> slice(dets.begin() + lo, dets.begin() + hi);
    std::vector<Embedding> eslice(embeds.begin() + lo, embeds.begin() + hi);
    std::vector<Trajectory> tracks = track_batch(slice, eslice, w, cfg);
    for (Trajectory& t : tracks)
      for (int& k : t.det_indices) k += static_cast<int>(lo);
    log_debug("batch frames [", start + 1, ", ", start + cfg.batch_len, "]: ", hi - lo,
              " detections, ", tracks.size(), " tracks");
    batch_tracks.push_back(std::move(tracks));
    if (hi == static_cast<long>(dets.size()) && start + cfg.batch_len >= n_frames) break;
  }

  std::vector<Trajectory> tracks = stitch_batches(batch_tracks);
  if (cfg.second_stage) tracks = associate_tracklets(std::move(tracks), embeds, cfg);
  if (cfg.interpolate) interpolate_gaps(tracks);

  // Map detection references back to the caller's order and hand out
  // final 1-based identities.
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    Trajectory& t = tracks[k];
    t.id = static_cast<int>(k) + 1;
    for (int& di : t.det_indices)
      if (di >= 0) di = perm[di];
    for (Detection& d : t.detections) d.id = t.id;
  }
  log_info("sequence ", seq.name, ": ", tracks.size(), " tracks over ",
           dets.size(), " detections");
  return tracks;
}

}  // namespace flowtrack
