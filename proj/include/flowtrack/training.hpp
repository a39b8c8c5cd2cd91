#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowtrack/config.hpp"
#include "flowtrack/cost_model.hpp"
#include "flowtrack/data_io.hpp"
#include "flowtrack/graph.hpp"

namespace flowtrack {

/// One training example: a window's graph, per-edge features, the
/// ground-truth indicator vector, and the (fixed) constraint matrices.
struct TrainingGraph {
  FlowGraph graph;
  std::vector<EdgeFeature> features;
  Eigen::VectorXd x_gt;
  ConstraintSet constraints;
  std::string origin;  ///< "<sequence>:<first_frame>" for diagnostics
};

/// Slices sequences into overlapping windows and encodes ground truth.
/// Training graphs are built from the ground-truth boxes themselves
/// (unit score), so the detection cost is exactly -1.
std::vector<TrainingGraph> build_training_graphs(const std::vector<Sequence>& sequences,
                                                 const TrainConfig& cfg);

/// Loss + gradient w.r.t. the QP solution (or the probabilities, for bce).
struct LossResult {
  double value = 0.0;
  Eigen::VectorXd grad;  ///< dL/dx for l2/l1, dL/dp over transitions for bce
};

LossResult l2_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_gt);
LossResult l1_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_gt);
/// Mean binary cross entropy over transition probabilities; x_gt supplies
/// the targets for the transition block.
LossResult bce_loss(const Eigen::VectorXd& p_tran, const Eigen::VectorXd& tran_gt);

/// Loss and parameter gradient for one graph; for "l2"/"l1" this runs the
/// QP forward/backward, for "bce" the MLP alone. Returns false (and leaves
/// `grad` untouched) when the QP solver fails on this graph.
bool graph_loss_grad(const TrainingGraph& tg, const MlpParams& w, const TrainConfig& cfg,
                     double& loss, MlpGrad& grad);

/// Adam with decoupled weight decay over MlpParams. `start_step` seeds the
/// bias-correction counter when resuming.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8, long long start_step = 0);
  void step(MlpParams& w, const MlpGrad& g);
  long long steps() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  long long t_ = 0;
  MlpGrad m_, v_;
  bool initialized_ = false;
};

/// Validation-set summary: affinity quality of the probabilities plus the
/// relaxed-solution error. Skipped graphs still contribute to auc/bce
/// (which need no solve) but not to the MSE pools or the mean loss.
struct AffinityReport {
  double auc = 0.0;       ///< rank-based; NaN when one class is absent
  double bce = 0.0;       ///< mean over transition edges
  double mse = 0.0;       ///< mean squared error of x_hat over all variables
  double mse_edge = 0.0;  ///< restricted to the transition block
  double loss = 0.0;      ///< mean configured loss over solved graphs
  int graphs = 0;
  int skipped = 0;        ///< graphs the solver failed on
};

AffinityReport evaluate_affinity(const std::vector<TrainingGraph>& graphs, const MlpParams& w,
                                 const TrainConfig& cfg);

/// Per-epoch progress record (one loss-trace CSV row).
struct EpochStats {
  int epoch = 0;        ///< 1-based, continues across resumes
  long long step = 0;   ///< cumulative optimizer steps
  double train_loss = 0.0;
  double val_loss = 0.0;       ///< mean configured loss on validation
  double val_mse_edge = 0.0;   ///< from evaluate_affinity
  double val_auc = 0.0;
  int dropped_graphs = 0;
};

struct TrainResult {
  MlpParams weights;           ///< best-validation parameters
  long long best_step = 0;     ///< optimizer step of the kept weights
  int best_epoch = 0;
  MlpParams last_weights;      ///< end-of-run parameters (resume point)
  long long last_step = 0;
  int last_epoch = 0;
  std::vector<EpochStats> history;
  AffinityReport initial_val;  ///< before the first step
  AffinityReport final_val;    ///< of the returned `weights`
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Optional warm start (resume) state for train().
struct TrainStart {
  const MlpParams* weights = nullptr;  ///< nullptr = fresh random init
  int epoch = 0;                       ///< epochs already completed
  long long step = 0;                  ///< optimizer steps already taken
};

/// Batched SGD over the training graphs (shuffle without replacement,
/// batch-mean gradients, AdamW step), cfg.epochs epochs on top of any
/// resumed progress. Graphs whose QP solve fails are dropped from their
/// batch; if more than 10% of all visits are dropped the run aborts with
/// std::runtime_error. Per-graph gradients are reduced in graph order
/// regardless of thread schedule, so results are deterministic in `seed`
/// for any OMP_NUM_THREADS.
TrainResult train(const std::vector<TrainingGraph>& train_graphs,
                  const std::vector<TrainingGraph>& val_graphs, const TrainConfig& cfg,
                  uint64_t seed, const EpochCallback& on_epoch = {},
                  const TrainStart& start = {});

}  // namespace flowtrack
