#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <vector>

namespace flowtrack {

/// One bounding-box hypothesis: frame index, top-left box geometry in
/// pixels, detector confidence and (for annotated data) an identity.
struct Detection {
  int frame = 0;
  double x = 0.0;  ///< left edge (pixels)
  double y = 0.0;  ///< top edge (pixels)
  double w = 0.0;
  double h = 0.0;
  double score = 1.0;  ///< detector confidence in [0, 1]
  int id = -1;         ///< ground-truth identity, -1 when unknown
  bool interpolated = false;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
};

/// Throws std::invalid_argument if the detection violates its invariants
/// (positive box size, non-negative frame, score in [0, 1]).
void validate(const Detection& d);

/// An ordered sequence of detections sharing one identity.
struct Trajectory {
  int id = -1;
  std::vector<Detection> detections;  ///< strictly increasing frames
  /// Index of each detection in the source sequence, -1 for boxes that
  /// were synthesized (e.g. by gap interpolation).
  std::vector<int> det_indices;
  std::optional<Eigen::VectorXd> embedding_mean;

  bool empty() const { return detections.empty(); }
  int start_frame() const { return detections.front().frame; }
  int end_frame() const { return detections.back().frame; }
};

}  // namespace flowtrack
