#pragma once

#include <vector>

#include "flowtrack/config.hpp"
#include "flowtrack/cost_model.hpp"
#include "flowtrack/data_io.hpp"
#include "flowtrack/graph.hpp"
#include "flowtrack/types.hpp"

namespace flowtrack {

/// Decodes a binary flow vector into trajectories by following transition
/// edges from each entry. Ids are assigned in order of track start
/// (frame, then detection index).
std::vector<Trajectory> decode_tracks(const FlowGraph& graph, const Eigen::VectorXd& x);

/// Tracks one batch of frames: build graph, score edges with the MLP,
/// solve the relaxed program, round, decode.
std::vector<Trajectory> track_batch(const std::vector<Detection>& detections,
                                    const std::vector<Embedding>& embeddings,
                                    const MlpParams& w, const TrackConfig& cfg);

/// Merges per-batch track sets sequentially. Tracks sharing a detection
/// (same frame and bit-identical box) keep one identity; ties go to the
/// pair sharing the most detections, then to the earlier existing id.
std::vector<Trajectory> stitch_batches(const std::vector<std::vector<Trajectory>>& batches);

/// Second-stage association: joins tracklets end-to-start over temporal
/// gaps (1..max_tracklet_gap) using mean-embedding affinity, gated by the
/// normalized center displacement per frame of gap. Solved as a min-cost
/// flow over tracklet nodes; joined tracklets keep the earlier id.
std::vector<Trajectory> associate_tracklets(std::vector<Trajectory> tracklets,
                                            const std::vector<Embedding>& embeddings,
                                            const TrackConfig& cfg);

/// Fills frame gaps inside each trajectory by componentwise linear
/// interpolation (score 0, interpolated flag set).
void interpolate_gaps(std::vector<Trajectory>& tracks);

/// Full pipeline over a sequence: batching, per-batch association,
/// stitching, optional second stage, optional interpolation.
std::vector<Trajectory> track_sequence(const Sequence& seq, const MlpParams& w,
                                       const TrackConfig& cfg);

}  // namespace flowtrack
