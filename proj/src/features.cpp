#include "flowtrack/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowtrack {

Embedding normalized_embedding(Eigen::VectorXd v) {
  const double norm = v.norm();
  if (!(norm > 1e-12)) throw std::invalid_argument("cannot normalize a zero embedding");
  v /= norm;
  return Embedding{std::move(v)};
}

Eigen::Vector4d geometric_feature(const Detection& di, const Detection& dj) {
  const double hs = di.h + dj.h;
  Eigen::Vector4d g;
  g << 2.0 * (dj.x - di.x) / hs, 2.0 * (dj.y - di.y) / hs, std::log(di.h / dj.h),
      std::log(di.w / dj.w);
  return g;
}

double iou(const Detection& a, const Detection& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Detection& a, const Detection& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double cw = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ch = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  const double hull = cw * ch;
  if (!(uni > 0.0) || !(hull > 0.0)) return 0.0;
  return inter / uni - (hull - uni) / hull;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("embedding dimension mismatch");
  return a.vec.dot(b.vec);
}

EdgeFeature edge_feature(const Detection& di, const Detection& dj, const Embedding& ei,
                         const Embedding& ej) {
  EdgeFeature f;
  const Eigen::Vector4d g = geometric_feature(di, dj);
  f.dx = g[0];
  f.dy = g[1];
  f.log_h_ratio = g[2];
  f.log_w_ratio = g[3];
  f.appearance = cosine_similarity(ei, ej);
  f.giou = giou(di, dj);
  return f;
}

std::vector<EdgeFeature> compute_edge_features_serial(const FlowGraph& graph,
                                                      const std::vector<Embedding>& embeddings) {
  if (static_cast<int>(embeddings.size()) != graph.num_detections())
    throw std::invalid_argument("one embedding per detection required");
  std::vector<EdgeFeature> out(graph.num_transitions());
  for (int e = 0; e < graph.num_transitions(); ++e) {
    const auto& [i, j] = graph.transitions[e];
    out[e] = edge_feature(graph.detections[i], graph.detections[j], embeddings[i], embeddings[j]);
  }
  return out;
}

std::vector<EdgeFeature> compute_edge_features(const FlowGraph& graph,
                                               const std::vector<Embedding>& embeddings) {
  if (static_cast<int>(embeddings.size()) != graph.num_detections())
    throw std::invalid_argument("one embedding per detection required");
  const int ne = graph.num_transitions();
  std::vector<EdgeFeature> out(ne);
#pragma omp parallel for schedule(static)
  for (int e = 0; e < ne; ++e) {
    const auto& [i, j] = graph.transitions[e];
    out[e] = edge_feature(graph.detections[i], graph.detections[j], embeddings[i], embeddings[j]);
  }
  return out;
}

}  // namespace flowtrack
