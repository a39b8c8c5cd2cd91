#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

#include "flowtrack/features.hpp"
#include "flowtrack/types.hpp"

namespace flowtrack {

/// Shortest round-trip decimal representation of a double (std::to_chars).
/// Parsing the result reproduces the exact bit pattern.
std::string format_double(double v);

/// CSV rows `frame,id,x,y,w,h,score[,...]` with 1-indexed frames on disk.
/// Frames are shifted to 0-indexed in memory. Ground-truth files carry the
/// MOT flag/class columns: rows with flag 0 or class != 1 are skipped.
std::vector<Detection> read_mot_csv(const std::string& path, bool is_ground_truth = false);

/// Writes 1-indexed frames, shortest round-trip decimals, one row per box:
/// `frame,id,x,y,w,h,score,-1,-1,-1`.
void write_mot_csv(const std::string& path, const std::vector<Detection>& detections);

/// Groups flat detections into per-id trajectories (ids >= 0), detections
/// within each sorted by frame.
std::vector<Trajectory> group_by_id(const std::vector<Detection>& detections);

/// Flattens trajectories back to detections with the trajectory id applied.
std::vector<Detection> flatten_tracks(const std::vector<Trajectory>& tracks);

/// Embedding CSV: `frame,detection_index,v1,...,vd` where detection_index
/// counts detections of that frame in file order of the detection CSV.
/// Vectors are L2-normalized on load. Returns one embedding per detection,
/// aligned with `detections`; throws if any detection has no row.
std::vector<Embedding> read_embeddings_csv(const std::string& path,
                                           const std::vector<Detection>& detections);

void write_embeddings_csv(const std::string& path, const std::vector<Detection>& detections,
                          const std::vector<Embedding>& embeddings);

/// A sequence on disk: detections + optional embeddings + optional gt.
/// Training consumes the annotated boxes directly, so those carry their
/// own appearance vectors (gt_embeddings aligned with gt_boxes).
struct Sequence {
  std::string name;
  std::vector<Detection> detections;
  std::vector<Embedding> embeddings;       ///< aligned with detections
  std::vector<Detection> gt_boxes;         ///< flat, frame-sorted, with ids
  std::vector<Embedding> gt_embeddings;    ///< aligned with gt_boxes
  std::vector<Trajectory> ground_truth;    ///< gt_boxes grouped by id
};

/// Loads `dir/det.txt` plus, when present, `dir/embed.txt`, `dir/gt.txt`
/// and `dir/gt_embed.txt`.
Sequence load_sequence(const std::string& dir);

/// Writes the same layout produced by the synthetic generator.
void save_sequence(const std::string& dir, const Sequence& seq);

/// Lists immediate subdirectories containing a det.txt, sorted by name.
std::vector<std::string> list_sequence_dirs(const std::string& root);

}  // namespace flowtrack
