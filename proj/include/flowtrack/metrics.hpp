#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowtrack/types.hpp"

namespace flowtrack {

/// CLEAR-MOT + identity metrics for one sequence.
struct MotMetrics {
  int gt_count = 0;        ///< total ground-truth boxes
  int pred_count = 0;      ///< total predicted boxes
  int matches = 0;         ///< TP at the IoU threshold
  int false_positives = 0;
  int false_negatives = 0;
  int id_switches = 0;
  int fragmentations = 0;
  double mota = 0.0;       ///< 1 - (FP+FN+IDS)/GT; NaN when GT == 0
  double motp = 0.0;       ///< mean IoU over matches; NaN when no matches
  double idf1 = 0.0;       ///< 2*IDTP / (gt_count + pred_count)
  int idtp = 0;
  int mostly_tracked = 0;  ///< gt tracks covered >= 80%
  int mostly_lost = 0;     ///< gt tracks covered <= 20%
  int gt_track_count = 0;
};

/// Frame-by-frame CLEAR matching at `iou_threshold` (default 0.5).
/// Matches persist: a ground truth keeps its previous prediction while the
/// pair still overlaps; remaining boxes are matched by maximising total
/// IoU. An identity switch is counted when a matched ground truth changes
/// predicted identity relative to the last frame it was matched in.
/// IDF1 uses a global max-overlap assignment between gt and predicted ids.
MotMetrics evaluate_tracks(const std::vector<Trajectory>& ground_truth,
                           const std::vector<Trajectory>& predictions,
                           double iou_threshold = 0.5);

/// Human-readable one-line-per-metric report.
std::string format_metrics(const MotMetrics& m);

/// Flat key->value view (for JSON output).
std::map<std::string, double> metrics_to_map(const MotMetrics& m);

}  // namespace flowtrack
