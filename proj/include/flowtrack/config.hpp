#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace flowtrack {

/// Synthetic sequence generation parameters.
struct SynthConfig {
  int n_sequences = 1;
  int n_frames = 100;
  int n_objects = 10;
  double width = 1000.0;      ///< scene extent, pixels
  double height = 1000.0;
  double box_w = 40.0;
  double box_h = 80.0;
  double speed = 8.0;         ///< max |velocity| per axis, px/frame
  int embed_dim = 16;
  double embed_noise = 0.1;   ///< per-frame gaussian noise before renorm
  double miss_rate = 0.0;     ///< per-box dropout probability
  double fp_rate = 0.0;       ///< expected false positives per frame (Poisson)
  double pos_noise = 0.0;     ///< gaussian jitter on x,y, pixels
  double score_noise = 0.0;   ///< score = clamp(1 - |N(0,s)|)
  int occlusion_events = 0;   ///< randomly placed full-object dropouts
  int occlusion_min = 10;     ///< random occlusion duration bounds, frames
  int occlusion_max = 20;
  /// Explicit occlusion windows (object, start_frame, length); used instead
  /// of random placement when non-empty.
  std::vector<std::array<int, 3>> occlusions;
};

/// Training hyperparameters (Adam + decoupled weight decay on the MLP).
struct TrainConfig {
  double gamma = 0.1;          ///< QP damping during training
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 10;
  int batch_size = 8;          ///< graphs per optimizer step
  int window = 15;             ///< frames per training graph (T)
  int overlap = 5;             ///< window overlap, frames
  int max_gap = 1;             ///< transition frame gap in training graphs
  int hidden = 64;             ///< MLP hidden width
  std::string loss = "l2";     ///< l2 | l1 | bce
  double qp_tol = 1e-8;
  double val_fraction = 0.2;   ///< sequences held out when no val set given
  /// Transition candidates are pruned when the center distance exceeds
  /// gate_distance * (h_i + h_j)/2 per frame of gap; 0 disables. Keep equal
  /// to the tracker's gate so the model sees the edges it will score.
  double gate_distance = 2.0;
};

/// Inference / association parameters.
struct TrackConfig {
  double gamma = 1e-4;         ///< near-LP damping when solver = "qp"
  int batch_len = 100;         ///< frames per inference batch
  int batch_overlap = 10;
  int delta = 5;               ///< max transition frame gap
  double gate_distance = 2.0;  ///< center-distance gate, box-heights per frame of gap; 0 = off
  double entry_exit_cost = 1.0;
  double qp_tol = 1e-9;
  bool second_stage = true;
  int max_tracklet_gap = 60;   ///< second-stage temporal horizon, frames
  double tau_dist = 0.3;       ///< velocity gate, box-heights per frame
  /// Tracklets are joined when 1 - <f_i, f_j> falls below this margin
  /// (subject to the temporal and velocity gates). 1.0 = require positive
  /// cosine similarity of the mean embeddings.
  double merge_threshold = 1.0;
  bool interpolate = true;     ///< fill gaps of merged tracks linearly
  std::string solver = "flow"; ///< flow (exact oracle) | qp (relax + round)
};

struct Config {
  SynthConfig synth;
  TrainConfig train;
  TrackConfig track;
};

/// Parses JSON with strict key checking: unknown keys raise
/// std::invalid_argument naming the offending path.
Config load_config(const std::string& path);
Config parse_config(const std::string& json_text);
std::string config_to_json(const Config& cfg);

/// Applies one dotted override, e.g. ("train.gamma", "0.05"). Unknown paths
/// or unparsable values raise std::invalid_argument.
void apply_override(Config& cfg, const std::string& key, const std::string& value);

/// Checks cross-field invariants (gamma > 0, lr > 0, window >= 2,
/// 0 <= overlap < window, rates in [0,1], batch_len > batch_overlap >=
/// delta, tau_dist > 0, loss/solver enums). Throws std::invalid_argument
/// naming the violated rule.
void validate_config(const Config& cfg);

}  // namespace flowtrack
