// Compares the OpenMP kernels against their serial reference
// implementations: per-edge feature extraction, the batched MLP forward
// pass, and the per-graph batch gradient used by training. Reports wall
// time, speedup, and the numeric difference between both paths.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "flowtrack/cost_model.hpp"
#include "flowtrack/features.hpp"
#include "flowtrack/parallel.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/training.hpp"

using namespace flowtrack;

namespace {

double time_ms(const std::function<void()>& fn, int reps = 5) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, double max_diff) {
  std::printf("%-32s %10.2f ms %10.2f ms %7.2fx %12.3e\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, max_diff);
}

}  // namespace

int main() {
  SynthConfig synth;
  synth.n_frames = 150;
  synth.n_objects = 20;
  synth.embed_dim = 16;
  synth.embed_noise = 0.05;
  synth.pos_noise = 1.0;
  Sequence seq = generate_sequence(synth, 7, "bench");

  FlowGraph graph = build_graph(seq.detections, 3);
  std::printf("graph: %d detections, %d transition edges, %d threads on %d processors\n\n",
              graph.num_detections(), graph.num_transitions(), max_threads(), num_procs());
  std::printf("%-32s %13s %13s %8s %12s\n", "kernel", "serial", "parallel", "speedup",
              "max|diff|");

  // 1. Edge features.
  std::vector<EdgeFeature> fs, fp;
  double t_serial = time_ms([&] { fs = compute_edge_features_serial(graph, seq.embeddings); });
  double t_par = time_ms([&] { fp = compute_edge_features(graph, seq.embeddings); });
  double diff = 0.0;
  for (std::size_t e = 0; e < fs.size(); ++e)
    diff = std::max(diff, (fs[e].vec() - fp[e].vec()).cwiseAbs().maxCoeff());
  report("edge features", t_serial, t_par, diff);

  // 2. Batched MLP forward.
  MlpParams w = MlpParams::init(64, 11);
  Eigen::VectorXd ps, pp;
  t_serial = time_ms([&] { ps = mlp_forward_batch_serial(fp, w); });
  t_par = time_ms([&] { pp = mlp_forward_batch(fp, w); });
  report("mlp forward", t_serial, t_par, (ps - pp).cwiseAbs().maxCoeff());

  // 3. Batch gradient (the training inner loop), one window per graph.
  TrainConfig tc;
  tc.loss = "bce";
  tc.window = 15;
  tc.overlap = 5;
  std::vector<TrainingGraph> graphs = build_training_graphs({seq}, tc);
  const int n = static_cast<int>(graphs.size());
  std::vector<double> losses(n);
  std::vector<MlpGrad> grads(n);

  auto reduce = [&]() {
    MlpGrad g = MlpGrad::zeros(w.hidden());
    for (int i = 0; i < n; ++i) g += grads[i];
    return g;
  };
  t_serial = time_ms([&] {
    for (int i = 0; i < n; ++i) graph_loss_grad(graphs[i], w, tc, losses[i], grads[i]);
  });
  MlpGrad g_serial = reduce();
  t_par = time_ms([&] {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) graph_loss_grad(graphs[i], w, tc, losses[i], grads[i]);
  });
  MlpGrad g_par = reduce();

  double gdiff = 0.0;
  gdiff = std::max(gdiff, (g_serial.W1 - g_par.W1).cwiseAbs().maxCoeff());
  gdiff = std::max(gdiff, (g_serial.b1 - g_par.b1).cwiseAbs().maxCoeff());
  gdiff = std::max(gdiff, (g_serial.W2 - g_par.W2).cwiseAbs().maxCoeff());
  gdiff = std::max(gdiff, std::abs(g_serial.b2 - g_par.b2));
  char label[64];
  std::snprintf(label, sizeof(label), "batch gradient (%d graphs)", n);
  report(label, t_serial, t_par, gdiff);
  return 0;
}
