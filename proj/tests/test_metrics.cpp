#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "flowtrack/data_io.hpp"
#include "flowtrack/features.hpp"
#include "flowtrack/metrics.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

const std::string kFixtures = std::string(FLOWTRACK_TEST_DIR) + "/fixtures";

Detection box(int frame, int id, double x, double y, double w = 10, double h = 10) {
  Detection d;
  d.frame = frame;
  d.id = id;
  d.x = x;
  d.y = y;
  d.w = w;
  d.h = h;
  return d;
}

Trajectory lane(int id, int from, int to, double y, double dx = 15.0, double x_shift = 0.0) {
  Trajectory t;
  t.id = id;
  for (int f = from; f <= to; ++f) t.detections.push_back(box(f, id, f * dx + x_shift, y));
  return t;
}

}  // namespace

TEST_CASE("evaluate_tracks reproduces the frozen fixture by hand count") {
  auto gt = group_by_id(read_mot_csv(kFixtures + "/metrics_gt.txt", true));
  auto pred = group_by_id(read_mot_csv(kFixtures + "/metrics_pred.txt"));
  REQUIRE(gt.size() == 4);
  REQUIRE(pred.size() == 5);

  MotMetrics m = evaluate_tracks(gt, pred);
  CHECK(m.gt_count == 20);
  CHECK(m.pred_count == 14);
  CHECK(m.matches == 13);
  CHECK(m.false_positives == 1);
  CHECK(m.false_negatives == 7);
  CHECK(m.id_switches == 2);       // both on frame 3, where the two tracks swap
  CHECK(m.fragmentations == 1);    // gt 3 resumes after its frame-3 hole
  CHECK(m.mota == 0.5);            // 1 - (1 + 7 + 2) / 20
  CHECK(m.motp == 1.0);            // every match is a pixel-exact box
  CHECK(m.idtp == 9);
  CHECK(m.idf1 == 2.0 * 9 / (20 + 14));
  CHECK(m.mostly_tracked == 3);    // 5/5, 4/5 and 4/5 coverage
  CHECK(m.mostly_lost == 1);       // gt 4 is never matched
  CHECK(m.gt_track_count == 4);

  // the metric set is invariant under reordering the track lists
  std::mt19937_64 rng(3);
  std::shuffle(gt.begin(), gt.end(), rng);
  std::shuffle(pred.begin(), pred.end(), rng);
  MotMetrics p = evaluate_tracks(gt, pred);
  CHECK(p.mota == m.mota);
  CHECK(p.idf1 == m.idf1);
  CHECK(p.id_switches == m.id_switches);
  CHECK(p.fragmentations == m.fragmentations);
  CHECK(p.mostly_tracked == m.mostly_tracked);
}

TEST_CASE("coverage thresholds and fragmentation counting") {
  SUBCASE("fully covered track is mostly tracked") {
    auto gt = std::vector<Trajectory>{lane(1, 0, 9, 0)};
    auto pred = std::vector<Trajectory>{lane(7, 0, 9, 0)};
    MotMetrics m = evaluate_tracks(gt, pred);
    CHECK(m.mostly_tracked == 1);
    CHECK(m.mostly_lost == 0);
    CHECK(m.fragmentations == 0);
    CHECK(m.mota == 1.0);
    CHECK(m.idf1 == 1.0);
  }
  SUBCASE("two covered stretches of 10 in 30 frames: neither MT nor ML, one resume") {
    auto gt = std::vector<Trajectory>{lane(1, 0, 29, 0)};
    Trajectory a = lane(7, 0, 9, 0);
    Trajectory b = lane(7, 20, 29, 0);
    Trajectory joined = a;
    joined.detections.insert(joined.detections.end(), b.detections.begin(), b.detections.end());
    MotMetrics m = evaluate_tracks(gt, {joined});
    CHECK(m.matches == 20);  // coverage 2/3
    CHECK(m.mostly_tracked == 0);
    CHECK(m.mostly_lost == 0);
    CHECK(m.fragmentations == 1);
    CHECK(m.id_switches == 0);  // same identity resumes
  }
  SUBCASE("never covered track is mostly lost") {
    auto gt = std::vector<Trajectory>{lane(1, 0, 9, 0)};
    auto pred = std::vector<Trajectory>{lane(7, 0, 9, 500)};
    MotMetrics m = evaluate_tracks(gt, pred);
    CHECK(m.mostly_lost == 1);
    CHECK(m.matches == 0);
    CHECK(std::isnan(m.motp));
  }
}

TEST_CASE("an identity handover counts one switch") {
  auto gt = std::vector<Trajectory>{lane(1, 0, 9, 0)};
  Trajectory first = lane(5, 0, 4, 0);
  Trajectory second;
  second.id = 6;
  for (int f = 5; f <= 9; ++f) second.detections.push_back(box(f, 6, f * 15.0, 0));
  MotMetrics m = evaluate_tracks(gt, {first, second});
  CHECK(m.id_switches == 1);
  CHECK(m.matches == 10);
  CHECK(m.fragmentations == 0);  // no coverage hole
  CHECK(m.mota == doctest::Approx(1.0 - 1.0 / 10));
  CHECK(m.idtp == 5);  // the better half is kept by the global assignment
}

TEST_CASE("match carryover holds through a slightly better newcomer") {
  // gt is matched to pred 5 in frame 0; from frame 1 a second prediction
  // overlaps gt slightly better, but the standing match persists as long
  // as pred 5 still clears the threshold
  auto gt = std::vector<Trajectory>{lane(1, 0, 5, 0)};
  Trajectory holder = lane(5, 0, 5, 0, 15.0, 2.0);  // IoU 0.667 vs gt
  Trajectory rival;
  rival.id = 9;
  for (int f = 1; f <= 5; ++f) rival.detections.push_back(box(f, 9, f * 15.0, 0));  // IoU 1.0
  MotMetrics m = evaluate_tracks(gt, {holder, rival});
  CHECK(m.id_switches == 0);
  CHECK(m.matches == 6);
  // the rival is an unmatched prediction in frames 1..5
  CHECK(m.false_positives == 5);
}

TEST_CASE("mota goes negative when errors outnumber ground truth") {
  auto gt = std::vector<Trajectory>{lane(1, 0, 1, 0)};
  std::vector<Trajectory> preds;
  for (int id = 2; id < 6; ++id) preds.push_back(lane(id, 0, 1, 500.0 + 30 * id));
  MotMetrics m = evaluate_tracks(gt, preds);
  CHECK(m.false_positives == 8);
  CHECK(m.false_negatives == 2);
  CHECK(m.mota == doctest::Approx(1.0 - 10.0 / 2.0));
}

TEST_CASE("empty inputs produce NaN rates, not crashes") {
  MotMetrics none = evaluate_tracks({}, {});
  CHECK(none.gt_count == 0);
  CHECK(std::isnan(none.mota));
  CHECK(std::isnan(none.motp));

  MotMetrics fp_only = evaluate_tracks({}, {lane(1, 0, 3, 0)});
  CHECK(fp_only.false_positives == 4);
  CHECK(std::isnan(fp_only.mota));
}

TEST_CASE("idf1 assignment equals brute force on small instances") {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 15; ++trial) {
    const int n_gt = 2 + static_cast<int>(rng() % 4);    // 2..5 identities
    const int n_pred = 2 + static_cast<int>(rng() % 5);  // 2..6 identities
    const int n_frames = 8;

    std::vector<Trajectory> gt;
    for (int g = 0; g < n_gt; ++g) gt.push_back(lane(g + 1, 0, n_frames - 1, 100.0 * g));

    std::vector<Trajectory> pred;
    for (int p = 0; p < n_pred; ++p) {
      const int lane_idx = static_cast<int>(rng() % n_gt);
      const int from = static_cast<int>(rng() % n_frames);
      const int to = from + static_cast<int>(rng() % (n_frames - from));
      // shift by 0 / 3 / 12 px: IoU 1.0 / ~0.54 / ~0.0 against the lane
      const double shifts[3] = {0.0, 3.0, 12.0};
      const double shift = shifts[rng() % 3];
      Trajectory t = lane(100 + p, from, to, 100.0 * lane_idx, 15.0, shift);
      pred.push_back(std::move(t));
    }

    // independent overlap counting: frames x id pairs at IoU >= 0.5
    std::vector<std::vector<int>> counts(gt.size(), std::vector<int>(pred.size(), 0));
    for (size_t g = 0; g < gt.size(); ++g)
      for (size_t p = 0; p < pred.size(); ++p)
        for (const auto& gd : gt[g].detections)
          for (const auto& pd : pred[p].detections)
            if (gd.frame == pd.frame && iou(gd, pd) >= 0.5) ++counts[g][p];

    MotMetrics m = evaluate_tracks(gt, pred);
    CHECK(m.idtp == oracle::brute_idtp(counts));
  }
}
