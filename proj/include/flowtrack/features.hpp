#pragma once

#include <Eigen/Core>

#include <vector>

#include "flowtrack/graph.hpp"
#include "flowtrack/types.hpp"

namespace flowtrack {

/// Unit-norm appearance vector attached to one detection.
struct Embedding {
  Eigen::VectorXd vec;

  int dim() const { return static_cast<int>(vec.size()); }
};

/// Normalizes `v` to unit L2 norm. Throws std::invalid_argument on a
/// (near-)zero vector.
Embedding normalized_embedding(Eigen::VectorXd v);

/// The 6-d edge feature, in the frozen order
/// (dx, dy, log h-ratio, log w-ratio, appearance, giou).
struct EdgeFeature {
  double dx = 0.0;           ///< 2(x_j - x_i) / (h_i + h_j)
  double dy = 0.0;           ///< 2(y_j - y_i) / (h_i + h_j)
  double log_h_ratio = 0.0;  ///< log(h_i / h_j)
  double log_w_ratio = 0.0;  ///< log(w_i / w_j)
  double appearance = 0.0;   ///< cosine similarity of the embeddings
  double giou = 0.0;

  Eigen::Matrix<double, 6, 1> vec() const {
    Eigen::Matrix<double, 6, 1> v;
    v << dx, dy, log_h_ratio, log_w_ratio, appearance, giou;
    return v;
  }
};

/// (2(x_j-x_i)/(h_i+h_j), 2(y_j-y_i)/(h_i+h_j), log(h_i/h_j), log(w_i/w_j))
/// on the raw top-left coordinates.
Eigen::Vector4d geometric_feature(const Detection& di, const Detection& dj);

double iou(const Detection& a, const Detection& b);

/// Generalized IoU: IoU minus the fraction of the enclosing box not
/// covered by the union. In (-1, 1].
double giou(const Detection& a, const Detection& b);

/// Dot product of two unit-norm embeddings; in [-1, 1].
double cosine_similarity(const Embedding& a, const Embedding& b);

EdgeFeature edge_feature(const Detection& di, const Detection& dj,
                         const Embedding& ei, const Embedding& ej);

/// Edge features for every transition of `graph`, aligned with the
/// transition order. `embeddings` is aligned with graph.detections.
/// The default entry point parallelizes over edges with OpenMP; the
/// _serial variant is the reference implementation kept for testing.
std::vector<EdgeFeature> compute_edge_features(const FlowGraph& graph,
                                               const std::vector<Embedding>& embeddings);
std::vector<EdgeFeature> compute_edge_features_serial(
    const FlowGraph& graph, const std::vector<Embedding>& embeddings);

}  // namespace flowtrack
