#include "flowtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

#include "flowtrack/log.hpp"

namespace flowtrack {

namespace {

/// Advances one coordinate by v and reflects it into [0, limit].
void bounce(double& p, double& v, double limit) {
  if (limit <= 0.0) {
    p = 0.0;
    v = 0.0;
    return;
  }
  p += v;
  while (p < 0.0 || p > limit) {
    if (p < 0.0) {
      p = -p;
      v = -v;
    } else {
      p = 2.0 * limit - p;
      v = -v;
    }
  }
}

Embedding random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int k = 0; k < dim; ++k) v[k] = normal(rng);
  } while (v.norm() < 1e-8);
  return normalized_embedding(std::move(v));
}

}  // namespace

Sequence generate_sequence(const SynthConfig& cfg, uint64_t seed, const std::string& name) {
  if (cfg.n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
  if (cfg.n_objects < 0) throw std::invalid_argument("n_objects must be >= 0");
  if (cfg.embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Identity anchors: +/- basis vectors are mutually orthogonal (or
  // opposite) and keep within/between-identity similarities well separated;
  // random unit vectors take over when there are too many objects.
  std::vector<Embedding> anchors;
  anchors.reserve(cfg.n_objects);
  for (int k = 0; k < cfg.n_objects; ++k) {
    if (cfg.n_objects <= 2 * cfg.embed_dim) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(cfg.embed_dim);
      v[k / 2] = (k % 2 == 0) ? 1.0 : -1.0;
      anchors.push_back(Embedding{std::move(v)});
    } else {
      anchors.push_back(random_unit(rng, cfg.embed_dim));
    }
  }

  // Constant-velocity states.
  double range_x = std::max(0.0, cfg.width - cfg.box_w);
  double range_y = std::max(0.0, cfg.height - cfg.box_h);
  std::vector<double> px(cfg.n_objects), py(cfg.n_objects), vx(cfg.n_objects), vy(cfg.n_objects);
  {
    std::uniform_real_distribution<double> ux(0.0, range_x), uy(0.0, range_y);
    std::uniform_real_distribution<double> uv(-cfg.speed, cfg.speed);
    for (int k = 0; k < cfg.n_objects; ++k) {
      px[k] = ux(rng);
      py[k] = uy(rng);
      vx[k] = uv(rng);
      vy[k] = uv(rng);
    }
  }

  // Occlusion windows: detections of (object, frame) pairs inside a window
  // are dropped; the annotation is unaffected.
  std::vector<std::vector<bool>> occluded(cfg.n_objects,
                                          std::vector<bool>(cfg.n_frames, false));
  std::vector<std::array<int, 3>> windows = cfg.occlusions;
  if (windows.empty() && cfg.occlusion_events > 0 && cfg.n_objects > 0) {
    std::uniform_int_distribution<int> pick_obj(0, cfg.n_objects - 1);
    std::uniform_int_distribution<int> pick_len(cfg.occlusion_min, cfg.occlusion_max);
    for (int e = 0; e < cfg.occlusion_events; ++e) {
      int len = std::min(pick_len(rng), cfg.n_frames);
      std::uniform_int_distribution<int> pick_start(0, std::max(0, cfg.n_frames - len));
      windows.push_back({pick_obj(rng), pick_start(rng), len});
    }
  }
  for (const auto& [obj, start, len] : windows) {
    if (obj < 0 || obj >= cfg.n_objects)
      throw std::invalid_argument("occlusion references object " + std::to_string(obj));
    for (int f = std::max(0, start); f < std::min(cfg.n_frames, start + len); ++f)
      occluded[obj][f] = true;
  }

  Sequence seq;
  seq.name = name;

  // Annotation pass: every object in every frame, with its per-frame
  // appearance vector (shared with the detection of the same box).
  std::vector<std::vector<Embedding>> appearance(cfg.n_frames);
  for (int f = 0; f < cfg.n_frames; ++f) {
    appearance[f].reserve(cfg.n_objects);
    for (int k = 0; k < cfg.n_objects; ++k) {
      Detection d;
      d.frame = f;
      d.id = k + 1;  // MOT ids are 1-indexed
      d.x = px[k];
      d.y = py[k];
      d.w = cfg.box_w;
      d.h = cfg.box_h;
      d.score = 1.0;
      seq.gt_boxes.push_back(d);

      Embedding e = anchors[k];
      if (cfg.embed_noise > 0.0) {
        Eigen::VectorXd v = e.vec;
        for (Eigen::Index i = 0; i < v.size(); ++i)
          v[i] += cfg.embed_noise * normal(rng);
        e = normalized_embedding(std::move(v));
      }
      appearance[f].push_back(e);
      seq.gt_embeddings.push_back(e);

      bounce(px[k], vx[k], range_x);
      bounce(py[k], vy[k], range_y);
    }
  }

  // Detection pass: misses, positional jitter, score noise, false positives.
  std::bernoulli_distribution miss(std::clamp(cfg.miss_rate, 0.0, 1.0));
  auto draw_score = [&]() {
    if (cfg.score_noise <= 0.0) return 1.0;
    return std::clamp(1.0 - std::abs(normal(rng) * cfg.score_noise), 0.0, 1.0);
  };
  for (int f = 0; f < cfg.n_frames; ++f) {
    for (int k = 0; k < cfg.n_objects; ++k) {
      if (occluded[k][f]) continue;
      if (cfg.miss_rate > 0.0 && miss(rng)) continue;
      Detection d = seq.gt_boxes[static_cast<std::size_t>(f) * cfg.n_objects + k];
      d.id = -1;
      if (cfg.pos_noise > 0.0) {
        d.x += cfg.pos_noise * normal(rng);
        d.y += cfg.pos_noise * normal(rng);
      }
      d.score = draw_score();
      seq.detections.push_back(d);
      seq.embeddings.push_back(appearance[f][k]);
    }
    if (cfg.fp_rate > 0.0) {
      std::poisson_distribution<int> burst(cfg.fp_rate);
      std::uniform_real_distribution<double> ux(0.0, range_x), uy(0.0, range_y);
      int n_fp = burst(rng);
      for (int j = 0; j < n_fp; ++j) {
        Detection d;
        d.frame = f;
        d.id = -1;
        d.x = ux(rng);
        d.y = uy(rng);
        d.w = cfg.box_w;
        d.h = cfg.box_h;
        d.score = draw_score();
        seq.detections.push_back(d);
        seq.embeddings.push_back(random_unit(rng, cfg.embed_dim));
      }
    }
  }

  seq.ground_truth = group_by_id(seq.gt_boxes);
  log_debug("generated ", name, ": ", seq.detections.size(), " detections, ",
            seq.gt_boxes.size(), " gt boxes, ", windows.size(), " occlusion windows");
  return seq;
}

std::vector<std::string> generate_dataset(const SynthConfig& cfg, uint64_t seed,
                                          const std::string& root) {
  if (cfg.n_sequences < 1) throw std::invalid_argument("n_sequences must be >= 1");
  std::vector<std::string> dirs;
  for (int s = 0; s < cfg.n_sequences; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "seq_%03d", s);
    Sequence seq = generate_sequence(cfg, seed + static_cast<uint64_t>(s), name);
    std::string dir = (std::filesystem::path(root) / name).string();
    save_sequence(dir, seq);
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace flowtrack
