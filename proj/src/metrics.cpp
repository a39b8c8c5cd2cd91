#include "flowtrack/metrics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "flowtrack/assignment.hpp"
#include "flowtrack/features.hpp"

namespace flowtrack {

namespace {

struct FrameBox {
  int track = -1;  // index into the trajectory vector
  const Detection* det = nullptr;
};

// frame -> boxes present, in trajectory order
std::map<int, std::vector<FrameBox>> by_frame(const std::vector<Trajectory>& tracks) {
  std::map<int, std::vector<FrameBox>> out;
  for (int t = 0; t < static_cast<int>(tracks.size()); ++t)
    for (const Detection& d : tracks[t].detections) out[d.frame].push_back({t, &d});
  return out;
}

}  // namespace

MotMetrics evaluate_tracks(const std::vector<Trajectory>& ground_truth,
                           const std::vector<Trajectory>& predictions, double iou_threshold) {
  MotMetrics m;
  const auto gt_frames = by_frame(ground_truth);
  const auto pred_frames = by_frame(predictions);
  m.gt_track_count = static_cast<int>(ground_truth.size());
  for (const auto& t : ground_truth) m.gt_count += static_cast<int>(t.detections.size());
  for (const auto& t : predictions) m.pred_count += static_cast<int>(t.detections.size());

  std::set<int> frames;
  for (const auto& [f, _] : gt_frames) frames.insert(f);
  for (const auto& [f, _] : pred_frames) frames.insert(f);

  std::map<int, int> last_match;                    // gt track -> last matched pred track
  std::map<int, std::vector<char>> gt_covered;      // gt track -> per-appearance matched flag
  std::map<std::pair<int, int>, int> pair_overlap;  // (gt, pred) -> frames at IoU >= thr
  double iou_sum = 0.0;

  for (int t = 0; t < static_cast<int>(ground_truth.size()); ++t)
    gt_covered[t].reserve(ground_truth[t].detections.size());

  static const std::vector<FrameBox> kNoBoxes;
  for (int frame : frames) {
    const auto git = gt_frames.find(frame);
    const auto pit = pred_frames.find(frame);
    const auto& gts = git != gt_frames.end() ? git->second : kNoBoxes;
    const auto& preds = pit != pred_frames.end() ? pit->second : kNoBoxes;

    // identity-level overlap counts for IDF1, independent of matching
    for (const FrameBox& g : gts)
      for (const FrameBox& p : preds)
        if (iou(*g.det, *p.det) >= iou_threshold) ++pair_overlap[{g.track, p.track}];

    std::vector<int> gt_match(gts.size(), -1);  // index into preds
    std::vector<char> pred_used(preds.size(), 0);

    // carry over the previous correspondence while it still holds
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      const auto it = last_match.find(gts[gi].track);
      if (it == last_match.end()) continue;
      for (size_t pi = 0; pi < preds.size(); ++pi) {
        if (pred_used[pi] || preds[pi].track != it->second) continue;
        if (iou(*gts[gi].det, *preds[pi].det) >= iou_threshold) {
          gt_match[gi] = static_cast<int>(pi);
          pred_used[pi] = 1;
        }
        break;
      }
    }

    // remaining boxes: maximize total IoU at the threshold
    std::vector<int> free_gt, free_pred;
    for (size_t gi = 0; gi < gts.size(); ++gi)
      if (gt_match[gi] < 0) free_gt.push_back(static_cast<int>(gi));
    for (size_t pi = 0; pi < preds.size(); ++pi)
      if (!pred_used[pi]) free_pred.push_back(static_cast<int>(pi));
    if (!free_gt.empty() && !free_pred.empty()) {
      Eigen::MatrixXd w(free_gt.size(), free_pred.size());
      for (size_t r = 0; r < free_gt.size(); ++r)
        for (size_t c = 0; c < free_pred.size(); ++c) {
          const double v = iou(*gts[free_gt[r]].det, *preds[free_pred[c]].det);
          w(r, c) = v >= iou_threshold ? v : 0.0;
        }
      const Assignment as = solve_max_weight(w);
      for (size_t r = 0; r < free_gt.size(); ++r)
        if (as.row_to_col[r] >= 0) {
          gt_match[free_gt[r]] = free_pred[as.row_to_col[r]];
          pred_used[free_pred[as.row_to_col[r]]] = 1;
        }
    }

    for (size_t gi = 0; gi < gts.size(); ++gi) {
      const int g = gts[gi].track;
      if (gt_match[gi] < 0) {
        ++m.false_negatives;
        gt_covered[g].push_back(0);
        continue;
      }
      const int p = preds[gt_match[gi]].track;
      ++m.matches;
      iou_sum += iou(*gts[gi].det, *preds[gt_match[gi]].det);
      gt_covered[g].push_back(1);
      const auto it = last_match.find(g);
      if (it != last_match.end() && it->second != p) ++m.id_switches;
      last_match[g] = p;
    }
    for (size_t pi = 0; pi < preds.size(); ++pi)
      if (!pred_used[pi]) ++m.false_positives;
  }

  m.mota = m.gt_count > 0
               ? 1.0 - static_cast<double>(m.false_positives + m.false_negatives + m.id_switches) /
                           m.gt_count
               : std::numeric_limits<double>::quiet_NaN();
  m.motp = m.matches > 0 ? iou_sum / m.matches : std::numeric_limits<double>::quiet_NaN();

  // IDF1: one global identity assignment maximizing matched frames
  if (!pair_overlap.empty()) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ground_truth.size(), predictions.size());
    for (const auto& [gp, count] : pair_overlap) w(gp.first, gp.second) = count;
    const Assignment as = solve_max_weight(w);
    m.idtp = static_cast<int>(std::lround(as.total_cost));
  }
  m.idf1 = (m.gt_count + m.pred_count) > 0
               ? 2.0 * m.idtp / (m.gt_count + m.pred_count)
               : std::numeric_limits<double>::quiet_NaN();

  for (const auto& [g, covered] : gt_covered) {
    const int total = static_cast<int>(covered.size());
    if (total == 0) continue;
    const int hit = static_cast<int>(std::count(covered.begin(), covered.end(), 1));
    const double ratio = static_cast<double>(hit) / total;
    if (ratio >= 0.8) ++m.mostly_tracked;
    if (ratio <= 0.2) ++m.mostly_lost;
    // fragmentation: tracked runs interrupted and later resumed
    int last_seen_hit = -1;
    for (int k = 0; k < total; ++k) {
      if (!covered[k]) continue;
      if (last_seen_hit >= 0 && last_seen_hit < k - 1) ++m.fragmentations;
      last_seen_hit = k;
    }
  }
  return m;
}

std::string format_metrics(const MotMetrics& m) {
  std::ostringstream os;
  os << "MOTA  " << m.mota << "\n"
     << "IDF1  " << m.idf1 << "\n"
     << "MOTP  " << m.motp << "\n"
     << "FP    " << m.false_positives << "\n"
     << "FN    " << m.false_negatives << "\n"
     << "IDS   " << m.id_switches << "\n"
     << "Frag  " << m.fragmentations << "\n"
     << "MT    " << m.mostly_tracked << "/" << m.gt_track_count << "\n"
     << "ML    " << m.mostly_lost << "/" << m.gt_track_count << "\n"
     << "GT    " << m.gt_count << "\n"
     << "Pred  " << m.pred_count << "\n"
     << "IDTP  " << m.idtp << "\n";
  return os.str();
}

std::map<std::string, double> metrics_to_map(const MotMetrics& m) {
  return {
      {"mota", m.mota},
      {"idf1", m.idf1},
      {"motp", m.motp},
      {"fp", static_cast<double>(m.false_positives)},
      {"fn", static_cast<double>(m.false_negatives)},
      {"ids", static_cast<double>(m.id_switches)},
      {"frag", static_cast<double>(m.fragmentations)},
      {"mt", static_cast<double>(m.mostly_tracked)},
      {"ml", static_cast<double>(m.mostly_lost)},
      {"gt", static_cast<double>(m.gt_count)},
      {"pred", static_cast<double>(m.pred_count)},
      {"idtp", static_cast<double>(m.idtp)},
      {"matches", static_cast<double>(m.matches)},
      {"gt_tracks", static_cast<double>(m.gt_track_count)},
  };
}

}  // namespace flowtrack
