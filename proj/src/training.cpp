#include "flowtrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "flowtrack/diff_layer.hpp"
#include "flowtrack/log.hpp"
#include "flowtrack/qp_solver.hpp"

namespace flowtrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

/// Pooled rank-based AUC (Mann-Whitney U with average ranks for ties).
double pooled_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  std::size_t n = scores.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return kNaN;
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

std::vector<TrainingGraph> build_training_graphs(const std::vector<Sequence>& sequences,
                                                 const TrainConfig& cfg) {
  int stride = cfg.window - cfg.overlap;
  if (stride < 1) throw std::invalid_argument("window must exceed overlap");

  std::vector<TrainingGraph> graphs;
  for (const Sequence& seq : sequences) {
    if (seq.gt_boxes.empty()) {
      log_warn("sequence ", seq.name, " has no ground truth; skipped for training");
      continue;
    }
    if (seq.gt_embeddings.size() != seq.gt_boxes.size())
      throw std::runtime_error("sequence " + seq.name +
                               ": training needs one appearance vector per annotated box "
                               "(gt_embed.txt)");

    int n_frames = 0;
    for (const Detection& d : seq.gt_boxes) n_frames = std::max(n_frames, d.frame + 1);

    for (int start = 0; start < n_frames; start += stride) {
      std::vector<Detection> dets;
      std::vector<Embedding> embeds;
      int last_frame = -1, distinct_frames = 0;
      for (std::size_t i = 0; i < seq.gt_boxes.size(); ++i) {
        const Detection& d = seq.gt_boxes[i];
        if (d.frame < start || d.frame >= start + cfg.window) continue;
        dets.push_back(d);
        embeds.push_back(seq.gt_embeddings[i]);
        if (d.frame != last_frame) {
          ++distinct_frames;
          last_frame = d.frame;
        }
      }
      if (distinct_frames < 2) {
        log_debug("window ", seq.name, ":", start, " has ", distinct_frames,
                  " populated frame(s); skipped");
        continue;
      }

      TrainingGraph tg;
      tg.origin = seq.name + ":" + std::to_string(start);
      SpatialGate gate;
      if (cfg.gate_distance > 0) gate = center_distance_gate(cfg.gate_distance);
      tg.graph = build_graph(std::move(dets), cfg.max_gap, gate);
      tg.features = compute_edge_features(tg.graph, embeds);
      GroundTruthFlow gt = encode_ground_truth(tg.graph, group_by_id(tg.graph.detections));
      if (gt.split_count > 0)
        log_debug("window ", tg.origin, ": ", gt.split_count, " gt links without a graph edge");
      tg.x_gt = std::move(gt.x);
      tg.constraints = build_constraints(tg.graph);
      graphs.push_back(std::move(tg));
    }
  }
  log_info("built ", graphs.size(), " training graphs from ", sequences.size(), " sequences");
  return graphs;
}

LossResult l2_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_gt) {
  LossResult r;
  Eigen::VectorXd diff = x - x_gt;
  r.value = diff.squaredNorm();
  r.grad = 2.0 * diff;
  return r;
}

LossResult l1_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_gt) {
  LossResult r;
  Eigen::VectorXd diff = x - x_gt;
  r.value = diff.lpNorm<1>();
  r.grad = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  return r;
}

LossResult bce_loss(const Eigen::VectorXd& p_tran, const Eigen::VectorXd& tran_gt) {
  if (p_tran.size() != tran_gt.size())
    throw std::invalid_argument("bce_loss: size mismatch");
  LossResult r;
  r.grad = Eigen::VectorXd::Zero(p_tran.size());
  if (p_tran.size() == 0) return r;
  double n = static_cast<double>(p_tran.size());
  double sum = 0.0;
  for (Eigen::Index e = 0; e < p_tran.size(); ++e) {
    double y = tran_gt[e];
    double pc = clamp_prob(p_tran[e]);
    sum += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    if (p_tran[e] > kProbClamp && p_tran[e] < 1.0 - kProbClamp)
      r.grad[e] = (-y / pc + (1.0 - y) / (1.0 - pc)) / n;
  }
  r.value = sum / n;
  return r;
}

bool graph_loss_grad(const TrainingGraph& tg, const MlpParams& w, const TrainConfig& cfg,
                     double& loss, MlpGrad& grad) {
  const int E = tg.graph.num_transitions();

  if (cfg.loss == "bce") {
    Eigen::VectorXd p = mlp_forward_batch(tg.features, w);
    Eigen::VectorXd y = tg.x_gt.tail(E);
    loss = bce_loss(p, y).value;
    grad = MlpGrad::zeros(w.hidden());
    // Gradient through the logit (dL/dz = p - y): stable where the clamped
    // -log saturates.
    for (int e = 0; e < E; ++e)
      grad += mlp_vjp_logit(tg.features[e], w, (p[e] - y[e]) / std::max(1, E));
    return true;
  }

  try {
    CostVector costs = assemble_cost(tg.graph, tg.features, w);
    QpLayer layer(cfg.gamma, tg.constraints, cfg.qp_tol);
    layer.forward(costs.c);
    const Eigen::VectorXd& x = layer.solution().x;

    LossResult lr = (cfg.loss == "l1") ? l1_loss(x, tg.x_gt) : l2_loss(x, tg.x_gt);
    loss = lr.value;

    Eigen::VectorXd dc = layer.backward(lr.grad);
    grad = MlpGrad::zeros(w.hidden());
    for (int e = 0; e < E; ++e) {
      double p = costs.p[e];
      if (p <= kProbClamp || p >= 1.0 - kProbClamp) continue;  // clamped: dc/dp = 0
      double dLdp = dc[tg.graph.transition_var(e)] * (-1.0 / p);
      grad += mlp_vjp(tg.features[e], w, dLdp);
    }
    return true;
  } catch (const std::exception& e) {
    log_warn("graph ", tg.origin, " dropped: ", e.what());
    return false;
  }
}

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps,
             long long start_step)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps), t_(start_step) {}

void AdamW::step(MlpParams& w, const MlpGrad& g) {
  if (!initialized_) {
    m_ = MlpGrad::zeros(static_cast<int>(g.b1.size()));
    v_ = MlpGrad::zeros(static_cast<int>(g.b1.size()));
    initialized_ = true;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v.array() = beta2_ * v.array() + (1.0 - beta2_) * grad.array().square();
    param.array() -= lr_ * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_) +
                            wd_ * param.array());
  };
  update(w.W1, m_.W1, v_.W1, g.W1);
  update(w.b1, m_.b1, v_.b1, g.b1);
  update(w.W2, m_.W2, v_.W2, g.W2);

  m_.b2 = beta1_ * m_.b2 + (1.0 - beta1_) * g.b2;
  v_.b2 = beta2_ * v_.b2 + (1.0 - beta2_) * g.b2 * g.b2;
  w.b2 -= lr_ * ((m_.b2 / bc1) / (std::sqrt(v_.b2 / bc2) + eps_) + wd_ * w.b2);
}

AffinityReport evaluate_affinity(const std::vector<TrainingGraph>& graphs, const MlpParams& w,
                                 const TrainConfig& cfg) {
  const int n = static_cast<int>(graphs.size());
  struct PerGraph {
    Eigen::VectorXd p, y;
    Eigen::VectorXd x;  // empty when the solve failed
    double loss = 0.0;
    bool solved = false;
  };
  std::vector<PerGraph> results(n);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const TrainingGraph& tg = graphs[i];
    PerGraph& r = results[i];
    const int E = tg.graph.num_transitions();
    r.p = mlp_forward_batch(tg.features, w);
    r.y = tg.x_gt.tail(E);
    try {
      CostVector costs = assemble_cost(tg.graph, tg.features, w);
      QpSolution sol = solve_qp(cfg.gamma, costs.c, tg.constraints, cfg.qp_tol);
      if (sol.status != SolveStatus::Optimal)
        throw std::runtime_error(std::string("qp status ") + to_string(sol.status));
      r.x = std::move(sol.x);
      r.solved = true;
      if (cfg.loss == "l1")
        r.loss = l1_loss(r.x, tg.x_gt).value;
      else if (cfg.loss == "bce")
        r.loss = bce_loss(r.p, r.y).value;
      else
        r.loss = l2_loss(r.x, tg.x_gt).value;
    } catch (const std::exception& e) {
      log_warn("evaluation: graph ", tg.origin, " skipped: ", e.what());
    }
  }

  // Ordered (deterministic) reduction.
  AffinityReport rep;
  rep.graphs = n;
  std::vector<double> scores, labels;
  double bce_sum = 0.0;
  long long edge_count = 0;
  double sq_all = 0.0, sq_edge = 0.0, loss_sum = 0.0;
  long long var_count = 0, edge_count_solved = 0;
  int loss_count = 0;
  for (int i = 0; i < n; ++i) {
    const PerGraph& r = results[i];
    const TrainingGraph& tg = graphs[i];
    const int E = tg.graph.num_transitions();
    for (int e = 0; e < E; ++e) {
      scores.push_back(r.p[e]);
      labels.push_back(r.y[e]);
      double pc = clamp_prob(r.p[e]);
      bce_sum += -(r.y[e] * std::log(pc) + (1.0 - r.y[e]) * std::log(1.0 - pc));
    }
    edge_count += E;
    if (!r.solved) {
      ++rep.skipped;
      if (cfg.loss == "bce") {  // no solve needed for the bce loss value
        loss_sum += bce_loss(r.p, r.y).value;
        ++loss_count;
      }
      continue;
    }
    sq_all += (r.x - tg.x_gt).squaredNorm();
    var_count += tg.graph.num_variables();
    sq_edge += (r.x.tail(E) - r.y).squaredNorm();
    edge_count_solved += E;
    loss_sum += r.loss;
    ++loss_count;
  }

  rep.auc = scores.empty() ? kNaN : pooled_auc(scores, labels);
  rep.bce = edge_count > 0 ? bce_sum / static_cast<double>(edge_count) : kNaN;
  rep.mse = var_count > 0 ? sq_all / static_cast<double>(var_count) : kNaN;
  rep.mse_edge = edge_count_solved > 0 ? sq_edge / static_cast<double>(edge_count_solved) : kNaN;
  rep.loss = loss_count > 0 ? loss_sum / loss_count : kNaN;
  return rep;
}

TrainResult train(const std::vector<TrainingGraph>& train_graphs,
                  const std::vector<TrainingGraph>& val_graphs, const TrainConfig& cfg,
                  uint64_t seed, const EpochCallback& on_epoch, const TrainStart& start) {
  if (train_graphs.empty()) throw std::invalid_argument("no training graphs");

  MlpParams w = start.weights ? *start.weights : MlpParams::init(cfg.hidden, seed);
  // The shuffle stream is decoupled from the init stream so that resumed
  // runs (which skip the init) still shuffle the same way for a given seed.
  std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  AdamW opt(cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8, start.step);

  TrainResult result;
  result.initial_val = val_graphs.empty() ? AffinityReport{}
                                          : evaluate_affinity(val_graphs, w, cfg);

  MlpParams best_w = w;
  double best_val = std::numeric_limits<double>::infinity();
  long long best_step = start.step;
  int best_epoch = start.epoch;

  const int n = static_cast<int>(train_graphs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  long long visits = 0, drops = 0;
  std::vector<std::string> failed_origins;

  for (int ep = 1; ep <= cfg.epochs; ++ep) {
    int epoch_num = start.epoch + ep;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss_sum = 0.0;
    long long epoch_loss_count = 0;
    int epoch_drops = 0;

    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      int bs = std::min(cfg.batch_size, n - b0);
      std::vector<double> losses(bs, 0.0);
      std::vector<MlpGrad> grads(bs);
      std::vector<char> ok(bs, 0);

#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < bs; ++i)
        ok[i] = graph_loss_grad(train_graphs[order[b0 + i]], w, cfg, losses[i], grads[i]) ? 1 : 0;

      MlpGrad g = MlpGrad::zeros(w.hidden());
      int kept = 0;
      for (int i = 0; i < bs; ++i) {  // fixed order: deterministic reduction
        ++visits;
        if (!ok[i]) {
          ++drops;
          ++epoch_drops;
          if (failed_origins.size() < 5)
            failed_origins.push_back(train_graphs[order[b0 + i]].origin);
          continue;
        }
        g += grads[i];
        epoch_loss_sum += losses[i];
        ++kept;
      }
      if (kept == 0) {
        log_warn("epoch ", epoch_num, ": entire batch dropped, no step taken");
        continue;
      }
      g *= 1.0 / kept;  // batch mean over the retained graphs
      opt.step(w, g);
      epoch_loss_count += kept;
    }

    EpochStats stats;
    stats.epoch = epoch_num;
    stats.step = opt.steps();
    stats.train_loss = epoch_loss_count > 0 ? epoch_loss_sum / epoch_loss_count : kNaN;
    stats.dropped_graphs = epoch_drops;
    if (!val_graphs.empty()) {
      AffinityReport rep = evaluate_affinity(val_graphs, w, cfg);
      stats.val_loss = rep.loss;
      stats.val_mse_edge = rep.mse_edge;
      stats.val_auc = rep.auc;
      if (rep.loss < best_val) {
        best_val = rep.loss;
        best_w = w;
        best_step = opt.steps();
        best_epoch = epoch_num;
      }
    } else {
      stats.val_loss = kNaN;
      stats.val_mse_edge = kNaN;
      stats.val_auc = kNaN;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    log_info("epoch ", epoch_num, ": train_loss=", stats.train_loss,
             " val_loss=", stats.val_loss, " dropped=", epoch_drops);

    if (drops * 10 > visits) {
      std::string msg = "training aborted: " + std::to_string(drops) + " of " +
                        std::to_string(visits) + " graph visits failed the QP solve";
      if (!failed_origins.empty()) {
        msg += " (first failures:";
        for (const std::string& o : failed_origins) msg += " " + o;
        msg += ")";
      }
      throw std::runtime_error(msg);
    }
  }

  if (val_graphs.empty() || cfg.epochs == 0 ||
      best_val == std::numeric_limits<double>::infinity()) {
    best_w = w;
    best_step = opt.steps();
    best_epoch = start.epoch + cfg.epochs;
  }
  result.weights = std::move(best_w);
  result.best_step = best_step;
  result.best_epoch = best_epoch;
  result.last_weights = std::move(w);
  result.last_step = opt.steps();
  result.last_epoch = start.epoch + cfg.epochs;
  result.final_val = val_graphs.empty() ? AffinityReport{}
                                        : evaluate_affinity(val_graphs, result.weights, cfg);
  return result;
}

}  // namespace flowtrack
