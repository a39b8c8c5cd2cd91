#include "flowtrack/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "flowtrack/log.hpp"

namespace fs = std::filesystem;

namespace flowtrack {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool parse_double_field(std::string_view raw, double& out) {
  std::string_view s = trimmed(raw);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_int_field(std::string_view raw, int& out) {
  double v = 0.0;
  // Some writers emit integral columns as "3.0"; accept any integral value.
  if (!parse_double_field(raw, v)) return false;
  if (std::floor(v) != v || std::abs(v) > 1e9) return false;
  out = static_cast<int>(v);
  return true;
}

[[noreturn]] void malformed(const std::string& path, int line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::ofstream open_for_write(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::vector<Detection> read_mot_csv(const std::string& path, bool is_ground_truth) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);

  std::vector<Detection> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    std::vector<std::string> fields = split_csv(line);
    if (fields.size() < 6) malformed(path, line_no, "expected at least 6 comma-separated fields");

    Detection d;
    int frame = 0;
    if (!parse_int_field(fields[0], frame)) malformed(path, line_no, "bad frame");
    if (!parse_int_field(fields[1], d.id)) malformed(path, line_no, "bad id");
    if (!parse_double_field(fields[2], d.x)) malformed(path, line_no, "bad x");
    if (!parse_double_field(fields[3], d.y)) malformed(path, line_no, "bad y");
    if (!parse_double_field(fields[4], d.w)) malformed(path, line_no, "bad w");
    if (!parse_double_field(fields[5], d.h)) malformed(path, line_no, "bad h");
    if (frame < 1) malformed(path, line_no, "frames are 1-indexed; got " + fields[0]);
    d.frame = frame - 1;

    if (is_ground_truth) {
      d.score = 1.0;
      if (fields.size() >= 7) {
        int flag = 1;
        if (!parse_int_field(fields[6], flag)) malformed(path, line_no, "bad consider flag");
        if (flag == 0) continue;
      }
      if (fields.size() >= 8) {
        int cls = 1;
        if (!parse_int_field(fields[7], cls)) malformed(path, line_no, "bad class");
        if (cls != 1) continue;
      }
    } else if (fields.size() >= 7) {
      double conf = 1.0;
      if (!parse_double_field(fields[6], conf)) malformed(path, line_no, "bad score");
      d.score = std::clamp(conf, 0.0, 1.0);
    }

    try {
      validate(d);
    } catch (const std::exception& e) {
      malformed(path, line_no, e.what());
    }
    out.push_back(d);
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
  return out;
}

void write_mot_csv(const std::string& path, const std::vector<Detection>& detections) {
  std::vector<Detection> rows = detections;
  std::stable_sort(rows.begin(), rows.end(), [](const Detection& a, const Detection& b) {
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.id < b.id;
  });

  std::ofstream out = open_for_write(path);
  for (const Detection& d : rows) {
    out << (d.frame + 1) << ',' << d.id << ',' << format_double(d.x) << ',' << format_double(d.y)
        << ',' << format_double(d.w) << ',' << format_double(d.h) << ','
        << format_double(d.score) << ",-1,-1,-1\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Trajectory> group_by_id(const std::vector<Detection>& detections) {
  std::map<int, Trajectory> by_id;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& d = detections[i];
    if (d.id < 0) continue;
    Trajectory& t = by_id[d.id];
    t.id = d.id;
    t.detections.push_back(d);
    t.det_indices.push_back(static_cast<int>(i));
  }

  std::vector<Trajectory> tracks;
  tracks.reserve(by_id.size());
  for (auto& [id, t] : by_id) {
    std::vector<int> order(t.detections.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return t.detections[a].frame < t.detections[b].frame;
    });
    Trajectory sorted;
    sorted.id = id;
    for (int k : order) {
      if (!sorted.detections.empty() && sorted.detections.back().frame == t.detections[k].frame)
        throw std::invalid_argument("duplicate frame " +
                                    std::to_string(t.detections[k].frame + 1) + " for id " +
                                    std::to_string(id));
      sorted.detections.push_back(t.detections[k]);
      sorted.det_indices.push_back(t.det_indices[k]);
    }
    tracks.push_back(std::move(sorted));
  }
  return tracks;
}

std::vector<Detection> flatten_tracks(const std::vector<Trajectory>& tracks) {
  std::vector<Detection> out;
  for (const Trajectory& t : tracks) {
    for (Detection d : t.detections) {
      d.id = t.id;
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Embedding> read_embeddings_csv(const std::string& path,
                                           const std::vector<Detection>& detections) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);

  // detection index within a frame -> position in `detections`
  std::map<std::pair<int, int>, int> slot;
  std::map<int, int> seen_per_frame;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    int frame = detections[i].frame;
    slot[{frame, seen_per_frame[frame]++}] = static_cast<int>(i);
  }

  std::vector<Embedding> out(detections.size());
  std::vector<bool> filled(detections.size(), false);
  std::string line;
  int line_no = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    std::vector<std::string> fields = split_csv(line);
    if (fields.size() < 3) malformed(path, line_no, "expected frame,detection_index,v1,...");

    int frame = 0, index = 0;
    if (!parse_int_field(fields[0], frame)) malformed(path, line_no, "bad frame");
    if (!parse_int_field(fields[1], index)) malformed(path, line_no, "bad detection_index");
    if (frame < 1) malformed(path, line_no, "frames are 1-indexed; got " + fields[0]);

    int d = static_cast<int>(fields.size()) - 2;
    if (dim < 0) dim = d;
    if (d != dim)
      malformed(path, line_no,
                "embedding dimension " + std::to_string(d) + " != " + std::to_string(dim));

    Eigen::VectorXd v(d);
    for (int k = 0; k < d; ++k)
      if (!parse_double_field(fields[2 + k], v[k]))
        malformed(path, line_no, "bad component " + std::to_string(k + 1));

    auto it = slot.find({frame - 1, index});
    if (it == slot.end())
      malformed(path, line_no, "no detection with frame " + fields[0] + " index " +
                                   std::to_string(index));
    if (filled[it->second])
      malformed(path, line_no, "duplicate embedding for frame " + fields[0] + " index " +
                                   std::to_string(index));
    try {
      out[it->second] = normalized_embedding(std::move(v));
    } catch (const std::exception& e) {
      malformed(path, line_no, e.what());
    }
    filled[it->second] = true;
  }

  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (!filled[i])
      throw std::runtime_error(path + ": no embedding for detection at frame " +
                               std::to_string(detections[i].frame + 1));
  }
  return out;
}

void write_embeddings_csv(const std::string& path, const std::vector<Detection>& detections,
                          const std::vector<Embedding>& embeddings) {
  if (detections.size() != embeddings.size())
    throw std::invalid_argument("write_embeddings_csv: size mismatch (" +
                                std::to_string(detections.size()) + " detections, " +
                                std::to_string(embeddings.size()) + " embeddings)");

  std::ofstream out = open_for_write(path);
  std::map<int, int> counter;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    int frame = detections[i].frame;
    out << (frame + 1) << ',' << counter[frame]++;
    const Eigen::VectorXd& v = embeddings[i].vec;
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ',' << format_double(v[k]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Sequence load_sequence(const std::string& dir) {
  fs::path root(dir);
  if (!fs::exists(root / "det.txt"))
    throw std::runtime_error("not a sequence directory (no det.txt): " + dir);

  Sequence seq;
  seq.name = root.filename().string();
  if (seq.name.empty()) seq.name = root.parent_path().filename().string();
  seq.detections = read_mot_csv((root / "det.txt").string());

  if (fs::exists(root / "embed.txt"))
    seq.embeddings = read_embeddings_csv((root / "embed.txt").string(), seq.detections);

  if (fs::exists(root / "gt.txt")) {
    seq.gt_boxes = read_mot_csv((root / "gt.txt").string(), /*is_ground_truth=*/true);
    seq.ground_truth = group_by_id(seq.gt_boxes);
    if (fs::exists(root / "gt_embed.txt"))
      seq.gt_embeddings = read_embeddings_csv((root / "gt_embed.txt").string(), seq.gt_boxes);
  }

  log_debug("loaded sequence ", seq.name, ": ", seq.detections.size(), " detections, ",
            seq.gt_boxes.size(), " gt boxes");
  return seq;
}

void save_sequence(const std::string& dir, const Sequence& seq) {
  fs::path root(dir);
  fs::create_directories(root);

  write_mot_csv((root / "det.txt").string(), seq.detections);
  if (!seq.embeddings.empty())
    write_embeddings_csv((root / "embed.txt").string(), seq.detections, seq.embeddings);

  if (!seq.gt_boxes.empty()) {
    // gt.txt and gt_embed.txt must agree on the within-frame order, so both
    // are emitted from one (frame, id)-sorted permutation.
    std::vector<int> order(seq.gt_boxes.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (seq.gt_boxes[a].frame != seq.gt_boxes[b].frame)
        return seq.gt_boxes[a].frame < seq.gt_boxes[b].frame;
      return seq.gt_boxes[a].id < seq.gt_boxes[b].id;
    });

    // Ground truth carries the MOT consider-flag and class columns.
    std::ofstream out = open_for_write((root / "gt.txt").string());
    for (int k : order) {
      const Detection& d = seq.gt_boxes[k];
      out << (d.frame + 1) << ',' << d.id << ',' << format_double(d.x) << ','
          << format_double(d.y) << ',' << format_double(d.w) << ',' << format_double(d.h)
          << ",1,1,1\n";
    }
    if (!out) throw std::runtime_error("write failed: " + (root / "gt.txt").string());

    if (!seq.gt_embeddings.empty()) {
      if (seq.gt_embeddings.size() != seq.gt_boxes.size())
        throw std::invalid_argument("save_sequence: gt_embeddings / gt_boxes size mismatch");
      std::vector<Detection> boxes;
      std::vector<Embedding> embeds;
      for (int k : order) {
        boxes.push_back(seq.gt_boxes[k]);
        embeds.push_back(seq.gt_embeddings[k]);
      }
      write_embeddings_csv((root / "gt_embed.txt").string(), boxes, embeds);
    }
  }
}

std::vector<std::string> list_sequence_dirs(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root);
  std::vector<std::string> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "det.txt"))
      dirs.push_back(entry.path().string());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace flowtrack
