#include "flowtrack/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flowtrack {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void bad_value(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config value " + path + ": " + what);
}

int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad_value(path, "expected an integer");
  return v.get<int>();
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) bad_value(path, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) bad_value(path, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) bad_value(path, "expected a string");
  return v.get<std::string>();
}

void parse_synth(const json& j, SynthConfig& s) {
  for (const auto& [key, v] : j.items()) {
    std::string path = "synth." + key;
    if (key == "n_sequences") s.n_sequences = get_int(v, path);
    else if (key == "n_frames") s.n_frames = get_int(v, path);
    else if (key == "n_objects") s.n_objects = get_int(v, path);
    else if (key == "width") s.width = get_number(v, path);
    else if (key == "height") s.height = get_number(v, path);
    else if (key == "box_w") s.box_w = get_number(v, path);
    else if (key == "box_h") s.box_h = get_number(v, path);
    else if (key == "speed") s.speed = get_number(v, path);
    else if (key == "embed_dim") s.embed_dim = get_int(v, path);
    else if (key == "embed_noise") s.embed_noise = get_number(v, path);
    else if (key == "miss_rate") s.miss_rate = get_number(v, path);
    else if (key == "fp_rate") s.fp_rate = get_number(v, path);
    else if (key == "pos_noise") s.pos_noise = get_number(v, path);
    else if (key == "score_noise") s.score_noise = get_number(v, path);
    else if (key == "occlusion_events") s.occlusion_events = get_int(v, path);
    else if (key == "occlusion_min") s.occlusion_min = get_int(v, path);
    else if (key == "occlusion_max") s.occlusion_max = get_int(v, path);
    else if (key == "occlusions") {
      if (!v.is_array()) bad_value(path, "expected an array of [object, start, length]");
      s.occlusions.clear();
      for (const auto& row : v) {
        if (!row.is_array() || row.size() != 3)
          bad_value(path, "each entry must be [object, start, length]");
        s.occlusions.push_back({get_int(row[0], path), get_int(row[1], path),
                                get_int(row[2], path)});
      }
    } else {
      throw std::invalid_argument("unknown config key: " + path);
    }
  }
}

void parse_train(const json& j, TrainConfig& t) {
  for (const auto& [key, v] : j.items()) {
    std::string path = "train." + key;
    if (key == "gamma") t.gamma = get_number(v, path);
    else if (key == "lr") t.lr = get_number(v, path);
    else if (key == "weight_decay") t.weight_decay = get_number(v, path);
    else if (key == "epochs") t.epochs = get_int(v, path);
    else if (key == "batch_size") t.batch_size = get_int(v, path);
    else if (key == "window") t.window = get_int(v, path);
    else if (key == "overlap") t.overlap = get_int(v, path);
    else if (key == "max_gap") t.max_gap = get_int(v, path);
    else if (key == "hidden") t.hidden = get_int(v, path);
    else if (key == "loss") t.loss = get_string(v, path);
    else if (key == "qp_tol") t.qp_tol = get_number(v, path);
    else if (key == "val_fraction") t.val_fraction = get_number(v, path);
    else if (key == "gate_distance") t.gate_distance = get_number(v, path);
    else throw std::invalid_argument("unknown config key: " + path);
  }
}

void parse_track(const json& j, TrackConfig& t) {
  for (const auto& [key, v] : j.items()) {
    std::string path = "track." + key;
    if (key == "gamma") t.gamma = get_number(v, path);
    else if (key == "batch_len") t.batch_len = get_int(v, path);
    else if (key == "batch_overlap") t.batch_overlap = get_int(v, path);
    else if (key == "delta") t.delta = get_int(v, path);
    else if (key == "gate_distance") t.gate_distance = get_number(v, path);
    else if (key == "entry_exit_cost") t.entry_exit_cost = get_number(v, path);
    else if (key == "qp_tol") t.qp_tol = get_number(v, path);
    else if (key == "second_stage") t.second_stage = get_bool(v, path);
    else if (key == "max_tracklet_gap") t.max_tracklet_gap = get_int(v, path);
    else if (key == "tau_dist") t.tau_dist = get_number(v, path);
    else if (key == "merge_threshold") t.merge_threshold = get_number(v, path);
    else if (key == "interpolate") t.interpolate = get_bool(v, path);
    else if (key == "solver") t.solver = get_string(v, path);
    else throw std::invalid_argument("unknown config key: " + path);
  }
}

void require(bool ok, const std::string& rule) {
  if (!ok) throw std::invalid_argument("invalid config: " + rule);
}

}  // namespace

Config parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");

  Config cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "synth") parse_synth(v, cfg.synth);
    else if (key == "train") parse_train(v, cfg.train);
    else if (key == "track") parse_track(v, cfg.track);
    else throw std::invalid_argument("unknown config key: " + key);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const Config& cfg) {
  ordered_json j;
  ordered_json& s = j["synth"];
  s["n_sequences"] = cfg.synth.n_sequences;
  s["n_frames"] = cfg.synth.n_frames;
  s["n_objects"] = cfg.synth.n_objects;
  s["width"] = cfg.synth.width;
  s["height"] = cfg.synth.height;
  s["box_w"] = cfg.synth.box_w;
  s["box_h"] = cfg.synth.box_h;
  s["speed"] = cfg.synth.speed;
  s["embed_dim"] = cfg.synth.embed_dim;
  s["embed_noise"] = cfg.synth.embed_noise;
  s["miss_rate"] = cfg.synth.miss_rate;
  s["fp_rate"] = cfg.synth.fp_rate;
  s["pos_noise"] = cfg.synth.pos_noise;
  s["score_noise"] = cfg.synth.score_noise;
  s["occlusion_events"] = cfg.synth.occlusion_events;
  s["occlusion_min"] = cfg.synth.occlusion_min;
  s["occlusion_max"] = cfg.synth.occlusion_max;
  s["occlusions"] = cfg.synth.occlusions;

  ordered_json& t = j["train"];
  t["gamma"] = cfg.train.gamma;
  t["lr"] = cfg.train.lr;
  t["weight_decay"] = cfg.train.weight_decay;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["window"] = cfg.train.window;
  t["overlap"] = cfg.train.overlap;
  t["max_gap"] = cfg.train.max_gap;
  t["hidden"] = cfg.train.hidden;
  t["loss"] = cfg.train.loss;
  t["qp_tol"] = cfg.train.qp_tol;
  t["val_fraction"] = cfg.train.val_fraction;
  t["gate_distance"] = cfg.train.gate_distance;

  ordered_json& k = j["track"];
  k["gamma"] = cfg.track.gamma;
  k["batch_len"] = cfg.track.batch_len;
  k["batch_overlap"] = cfg.track.batch_overlap;
  k["delta"] = cfg.track.delta;
  k["gate_distance"] = cfg.track.gate_distance;
  k["entry_exit_cost"] = cfg.track.entry_exit_cost;
  k["qp_tol"] = cfg.track.qp_tol;
  k["second_stage"] = cfg.track.second_stage;
  k["max_tracklet_gap"] = cfg.track.max_tracklet_gap;
  k["tau_dist"] = cfg.track.tau_dist;
  k["merge_threshold"] = cfg.track.merge_threshold;
  k["interpolate"] = cfg.track.interpolate;
  k["solver"] = cfg.track.solver;

  return j.dump(2);
}

void apply_override(Config& cfg, const std::string& key, const std::string& value) {
  std::size_t dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
    throw std::invalid_argument("override key must look like section.field: " + key);
  std::string section = key.substr(0, dot);
  std::string field = key.substr(dot + 1);

  json j = json::parse(config_to_json(cfg));
  if (!j.contains(section) || !j[section].contains(field))
    throw std::invalid_argument("unknown config key: " + key);

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // bare strings like "l2" are not valid JSON
  }
  j[section][field] = parsed;
  cfg = parse_config(j.dump());
}

void validate_config(const Config& cfg) {
  const SynthConfig& s = cfg.synth;
  require(s.n_sequences >= 1, "synth.n_sequences must be >= 1");
  require(s.n_frames >= 1, "synth.n_frames must be >= 1");
  require(s.n_objects >= 0, "synth.n_objects must be >= 0");
  require(s.width > 0 && s.height > 0, "synth scene extent must be positive");
  require(s.box_w > 0 && s.box_h > 0, "synth box size must be positive");
  require(s.box_w <= s.width && s.box_h <= s.height, "synth box must fit in the scene");
  require(s.speed >= 0, "synth.speed must be >= 0");
  require(s.embed_dim >= 1, "synth.embed_dim must be >= 1");
  require(s.embed_noise >= 0, "synth.embed_noise must be >= 0");
  require(s.miss_rate >= 0 && s.miss_rate <= 1, "synth.miss_rate must be in [0, 1]");
  require(s.fp_rate >= 0, "synth.fp_rate must be >= 0");
  require(s.pos_noise >= 0, "synth.pos_noise must be >= 0");
  require(s.score_noise >= 0, "synth.score_noise must be >= 0");
  require(s.occlusion_events >= 0, "synth.occlusion_events must be >= 0");
  require(s.occlusion_events == 0 || (s.occlusion_min >= 1 && s.occlusion_min <= s.occlusion_max),
          "synth occlusion bounds must satisfy 1 <= occlusion_min <= occlusion_max");

  const TrainConfig& t = cfg.train;
  require(t.gamma > 0, "train.gamma must be > 0 (the relaxation needs strict convexity)");
  require(t.lr > 0, "train.lr must be > 0");
  require(t.weight_decay >= 0, "train.weight_decay must be >= 0");
  require(t.epochs >= 0, "train.epochs must be >= 0");
  require(t.batch_size >= 1, "train.batch_size must be >= 1");
  require(t.window >= 2, "train.window must be >= 2");
  require(t.overlap >= 0 && t.overlap < t.window, "train must satisfy 0 <= overlap < window");
  require(t.max_gap >= 1, "train.max_gap must be >= 1");
  require(t.hidden >= 1, "train.hidden must be >= 1");
  require(t.loss == "l2" || t.loss == "l1" || t.loss == "bce",
          "train.loss must be one of l2, l1, bce");
  require(t.qp_tol > 0, "train.qp_tol must be > 0");
  require(t.val_fraction >= 0 && t.val_fraction < 1, "train.val_fraction must be in [0, 1)");
  require(t.gate_distance >= 0, "train.gate_distance must be >= 0");

  const TrackConfig& k = cfg.track;
  require(k.gamma > 0, "track.gamma must be > 0 (the relaxation needs strict convexity)");
  require(k.delta >= 1, "track.delta must be >= 1");
  require(k.batch_overlap >= k.delta,
          "track must satisfy batch_overlap >= delta (stitching needs shared detections)");
  require(k.batch_len > k.batch_overlap, "track must satisfy batch_len > batch_overlap");
  require(k.gate_distance >= 0, "track.gate_distance must be >= 0");
  require(k.qp_tol > 0, "track.qp_tol must be > 0");
  require(k.max_tracklet_gap >= 1, "track.max_tracklet_gap must be >= 1");
  require(k.tau_dist > 0, "track.tau_dist must be > 0");
  require(k.merge_threshold > 0 && k.merge_threshold <= 2,
          "track.merge_threshold must be in (0, 2]");
  require(k.solver == "flow" || k.solver == "qp", "track.solver must be flow or qp");
}

}  // namespace flowtrack
