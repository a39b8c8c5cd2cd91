#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "flowtrack/features.hpp"
#include "flowtrack/graph.hpp"

namespace flowtrack {

/// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before
/// -log so transition costs stay finite.
inline constexpr double kProbClamp = 1e-6;
inline constexpr int kFeatureDim = 6;

/// Two-layer MLP: p = sigmoid(W2 * relu(W1 * e + b1) + b2).
struct MlpParams {
  Eigen::MatrixXd W1;     ///< hidden x 6
  Eigen::VectorXd b1;     ///< hidden
  Eigen::RowVectorXd W2;  ///< 1 x hidden
  double b2 = 0.0;

  int hidden() const { return static_cast<int>(b1.size()); }

  /// Uniform init in +-sqrt(1/fan_in), deterministic in `seed`.
  static MlpParams init(int hidden, std::uint64_t seed);
  static MlpParams zeros(int hidden);
};

/// Gradient accumulator with the same shapes as MlpParams, plus the
/// gradient w.r.t. the 6-d input feature.
struct MlpGrad {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::RowVectorXd W2;
  double b2 = 0.0;
  Eigen::Matrix<double, kFeatureDim, 1> input = Eigen::Matrix<double, kFeatureDim, 1>::Zero();

  static MlpGrad zeros(int hidden);
  MlpGrad& operator+=(const MlpGrad& other);
  MlpGrad& operator*=(double s);
  double squared_norm() const;
};

/// Forward pass for one edge feature; output in (0, 1).
double mlp_forward(const EdgeFeature& e, const MlpParams& w);

/// Exact reverse-mode gradients of mlp_forward given upstream dL/dp.
MlpGrad mlp_vjp(const EdgeFeature& e, const MlpParams& w, double upstream);

/// Like mlp_vjp but with the upstream gradient taken w.r.t. the
/// pre-sigmoid logit (numerically stable for cross-entropy objectives,
/// where dL/dz = p - y).
MlpGrad mlp_vjp_logit(const EdgeFeature& e, const MlpParams& w, double upstream_dz);

/// Batched forward over an edge list (OpenMP) and its serial reference.
Eigen::VectorXd mlp_forward_batch(const std::vector<EdgeFeature>& features,
                                  const MlpParams& w);
Eigen::VectorXd mlp_forward_batch_serial(const std::vector<EdgeFeature>& features,
                                         const MlpParams& w);

/// Full cost vector in graph layout plus the per-edge matching
/// probabilities it was derived from.
struct CostVector {
  Eigen::VectorXd c;  ///< length n
  Eigen::VectorXd p;  ///< length E, p_ij per transition
};

/// c_det = -score, c_en = c_ex = entry_exit_cost,
/// c_tran = -log(clamp(p, eps, 1-eps)). Throws on a feature/edge count
/// mismatch.
CostVector assemble_cost(const FlowGraph& graph,
                         const std::vector<EdgeFeature>& features,
                         const MlpParams& w, double entry_exit_cost = 1.0);

/// Optimizer progress carried inside a checkpoint so an interrupted run
/// can resume with continuous epoch/step numbering.
struct CheckpointMeta {
  int epoch = 0;       ///< epochs completed
  long long step = 0;  ///< optimizer steps completed
};

/// JSON checkpoint (hidden size + row-major weight arrays + progress
/// counters); decimal serialization round-trips bit-exactly.
void save_checkpoint(const MlpParams& params, const std::string& path,
                     const CheckpointMeta& meta = {});
MlpParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace flowtrack
