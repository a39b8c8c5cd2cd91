#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "flowtrack/synth.hpp"
#include "flowtrack/training.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

SynthConfig tiny_synth() {
  SynthConfig s;
  s.n_frames = 10;
  s.n_objects = 3;
  s.width = 400;
  s.height = 400;
  s.embed_dim = 8;
  return s;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.window = 4;
  t.overlap = 2;
  t.hidden = 8;
  t.epochs = 3;
  t.batch_size = 2;
  return t;
}

}  // namespace

TEST_CASE("build_training_graphs slices windows and encodes ground truth") {
  Sequence seq = generate_sequence(tiny_synth(), 71, "alpha");
  TrainConfig cfg = tiny_train();
  auto graphs = build_training_graphs({seq}, cfg);

  // stride = window - overlap = 2, starts 0,2,4,6,8
  REQUIRE(graphs.size() == 5);
  CHECK(graphs[0].origin == "alpha:0");
  CHECK(graphs[4].origin == "alpha:8");

  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& tg = graphs[gi];
    // the final window is clipped at the end of the sequence
    const int frames_in = std::min(cfg.window, 10 - static_cast<int>(2 * gi));
    REQUIRE(tg.graph.num_detections() > 0);
    CHECK(tg.features.size() == static_cast<size_t>(tg.graph.num_transitions()));
    CHECK(tg.x_gt.size() == tg.graph.num_variables());
    CHECK(tg.constraints.num_variables() == tg.graph.num_variables());
    CHECK(check_feasible(tg.constraints, tg.x_gt, 1e-12));
    for (const auto& d : tg.graph.detections) {
      CHECK(d.score == 1.0);  // training uses the annotated boxes directly
      CHECK(d.id >= 0);
    }
    // clean data, max_gap 1: every window holds 3 tracks spanning all its frames
    double trans = 0;
    for (int e = 0; e < tg.graph.num_transitions(); ++e)
      trans += tg.x_gt[tg.graph.transition_var(e)];
    CHECK(trans == 3.0 * (frames_in - 1));
  }
}

TEST_CASE("loss functions match hand values") {
  Eigen::Vector3d x(0.8, 0.0, 1.0);
  Eigen::Vector3d gt(1.0, 0.0, 0.0);

  LossResult l2 = l2_loss(x, gt);
  CHECK(l2.value == doctest::Approx(0.04 + 0.0 + 1.0));
  CHECK(l2.grad[0] == doctest::Approx(-0.4));
  CHECK(l2.grad[1] == 0.0);
  CHECK(l2.grad[2] == doctest::Approx(2.0));

  LossResult l1 = l1_loss(x, gt);
  CHECK(l1.value == doctest::Approx(1.2));
  CHECK(l1.grad[0] == -1.0);
  CHECK(l1.grad[1] == 0.0);  // exact tie has zero subgradient
  CHECK(l1.grad[2] == 1.0);

  // p = 1/2 against y = 1 contributes log 2 per edge
  Eigen::Vector2d p(0.5, 0.5);
  Eigen::Vector2d y(1.0, 0.0);
  LossResult bce = bce_loss(p, y);
  CHECK(bce.value == doctest::Approx(std::log(2.0)));
  CHECK(bce.grad[0] == doctest::Approx(-1.0));  // (-1/p) / n
  CHECK(bce.grad[1] == doctest::Approx(1.0));

  // clamped probabilities keep the value finite and the gradient zero
  Eigen::VectorXd psat(1), ysat(1);
  psat << 1e-9;
  ysat << 1.0;
  LossResult sat = bce_loss(psat, ysat);
  CHECK(sat.value == doctest::Approx(-std::log(kProbClamp)));
  CHECK(sat.grad[0] == 0.0);

  CHECK_THROWS_AS(bce_loss(Eigen::Vector2d(0.5, 0.5), Eigen::Vector3d(1, 0, 0)),
                  std::invalid_argument);
}

TEST_CASE("graph_loss_grad differentiates the full pipeline") {
  Sequence seq = generate_sequence(tiny_synth(), 73, "beta");
  TrainConfig cfg = tiny_train();
  auto graphs = build_training_graphs({seq}, cfg);
  REQUIRE(!graphs.empty());
  const TrainingGraph& tg = graphs[0];
  MlpParams w = MlpParams::init(cfg.hidden, 7);
  const double h = 1e-5;

  auto loss_at = [&](const MlpParams& wp, const TrainConfig& c) {
    double loss = 0.0;
    MlpGrad g = MlpGrad::zeros(c.hidden);
    REQUIRE(graph_loss_grad(tg, wp, c, loss, g));
    return loss;
  };

  auto fd_matches = [&](const TrainConfig& c, double tol) {
    double loss = 0.0;
    MlpGrad g = MlpGrad::zeros(c.hidden);
    REQUIRE(graph_loss_grad(tg, w, c, loss, g));
    CHECK(loss > 0.0);

    // spot-check a few representative parameters
    struct Probe {
      double analytic;
      std::function<void(MlpParams&, double)> bump;
    };
    std::vector<Probe> probes = {
        {g.W1(1, 4), [](MlpParams& p, double d) { p.W1(1, 4) += d; }},
        {g.b1[0], [](MlpParams& p, double d) { p.b1[0] += d; }},
        {g.W2[2], [](MlpParams& p, double d) { p.W2[2] += d; }},
        {g.b2, [](MlpParams& p, double d) { p.b2 += d; }},
    };
    for (const auto& probe : probes) {
      MlpParams wp = w, wm = w;
      probe.bump(wp, h);
      probe.bump(wm, -h);
      const double fd = (loss_at(wp, c) - loss_at(wm, c)) / (2 * h);
      const double rel =
          std::abs(fd - probe.analytic) / std::max({std::abs(fd), std::abs(probe.analytic), 1e-3});
      CHECK(rel < tol);
    }
  };

  SUBCASE("bce path (no inner solve)") {
    TrainConfig c = cfg;
    c.loss = "bce";
    fd_matches(c, 1e-4);
  }
  SUBCASE("l2 path (through the damped program)") {
    TrainConfig c = cfg;
    c.loss = "l2";
    c.qp_tol = 1e-12;
    fd_matches(c, 2e-3);
  }
  SUBCASE("l1 path (through the damped program)") {
    TrainConfig c = cfg;
    c.loss = "l1";
    c.qp_tol = 1e-12;
    fd_matches(c, 2e-3);
  }
}

TEST_CASE("graph_loss_grad reports failure instead of throwing") {
  Sequence seq = generate_sequence(tiny_synth(), 79, "gamma");
  TrainConfig cfg = tiny_train();
  cfg.qp_tol = 1e-300;  // unreachable tolerance: the solve gives up
  auto graphs = build_training_graphs({seq}, cfg);
  MlpParams w = MlpParams::init(cfg.hidden, 7);
  double loss = 1.0;
  MlpGrad g = MlpGrad::zeros(cfg.hidden);
  CHECK(!graph_loss_grad(graphs[0], w, cfg, loss, g));
}

TEST_CASE("AdamW matches a reference implementation") {
  // reference: standard Adam moments + decoupled weight decay, all scalars
  const double lr = 1e-2, wd = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto reference_step = [&](double& w, double g, double& m, double& v, long long t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    w -= lr * (mh / (std::sqrt(vh) + eps) + wd * w);
  };

  MlpParams w = MlpParams::init(4, 11);
  const MlpParams w0 = w;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // drive the optimizer with random dense gradients for 5 steps
  AdamW opt(lr, wd, b1, b2, eps);
  std::vector<MlpGrad> grads;
  for (int s = 0; s < 5; ++s) {
    MlpGrad g = MlpGrad::zeros(4);
    for (int r = 0; r < g.W1.rows(); ++r)
      for (int c = 0; c < g.W1.cols(); ++c) g.W1(r, c) = gauss(rng);
    for (int r = 0; r < 4; ++r) g.b1[r] = gauss(rng);
    for (int r = 0; r < 4; ++r) g.W2[r] = gauss(rng);
    g.b2 = gauss(rng);
    grads.push_back(g);
    opt.step(w, g);
  }
  CHECK(opt.steps() == 5);

  // replay one tracked coordinate of each parameter block
  auto replay = [&](double w_init, auto pick) {
    double wr = w_init, m = 0.0, v = 0.0;
    for (int s = 0; s < 5; ++s) reference_step(wr, pick(grads[s]), m, v, s + 1);
    return wr;
  };
  CHECK(w.W1(2, 3) ==
        doctest::Approx(replay(w0.W1(2, 3), [](const MlpGrad& g) { return g.W1(2, 3); }))
            .epsilon(1e-14));
  CHECK(w.b1[1] == doctest::Approx(replay(w0.b1[1], [](const MlpGrad& g) { return g.b1[1]; }))
                       .epsilon(1e-14));
  CHECK(w.W2[0] == doctest::Approx(replay(w0.W2[0], [](const MlpGrad& g) { return g.W2[0]; }))
                       .epsilon(1e-14));
  CHECK(w.b2 ==
        doctest::Approx(replay(w0.b2, [](const MlpGrad& g) { return g.b2; })).epsilon(1e-14));
}

TEST_CASE("AdamW start_step resumes the bias correction") {
  // a resumed optimizer restarts its moments, so it is not expected to
  // match an uninterrupted run; what must carry over is the bias
  // correction picking up at t = start_step + 1.
  MlpParams w = MlpParams::zeros(2);
  w.b2 = 1.0;
  MlpGrad g = MlpGrad::zeros(2);
  g.b2 = 1.0;

  AdamW resumed(1e-2, 0.0, 0.9, 0.999, 1e-8, 1000);
  resumed.step(w, g);
  CHECK(resumed.steps() == 1001);
  // with t = 1001 the bias corrections are ~1, so the update is close to
  // -lr * g / (sqrt(g^2) + eps) = -lr
  const double mh = 0.1 / (1 - std::pow(0.9, 1001.0));
  const double vh = 0.001 / (1 - std::pow(0.999, 1001.0));
  CHECK(w.b2 == doctest::Approx(1.0 - 1e-2 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));

  // decoupled decay acts even with zero gradient
  MlpParams wz = MlpParams::zeros(2);
  wz.b2 = 1.0;
  AdamW opt(1e-2, 0.5);
  opt.step(wz, MlpGrad::zeros(2));
  CHECK(wz.b2 == doctest::Approx(1.0 - 1e-2 * 0.5).epsilon(1e-12));
}

TEST_CASE("duplicated graphs leave the batch-mean gradient unchanged") {
  Sequence seq = generate_sequence(tiny_synth(), 83, "delta");
  TrainConfig cfg = tiny_train();
  cfg.loss = "bce";
  auto graphs = build_training_graphs({seq}, cfg);
  MlpParams w = MlpParams::init(cfg.hidden, 3);

  auto mean_grad = [&](const std::vector<const TrainingGraph*>& batch) {
    MlpGrad acc = MlpGrad::zeros(cfg.hidden);
    int kept = 0;
    for (const auto* tg : batch) {
      double loss = 0.0;
      MlpGrad g = MlpGrad::zeros(cfg.hidden);
      REQUIRE(graph_loss_grad(*tg, w, cfg, loss, g));
      acc += g;
      ++kept;
    }
    acc *= 1.0 / kept;
    return acc;
  };

  MlpGrad one = mean_grad({&graphs[0]});
  MlpGrad four = mean_grad({&graphs[0], &graphs[0], &graphs[0], &graphs[0]});
  CHECK((one.W1 - four.W1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((one.b1 - four.b1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((one.W2 - four.W2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(one.b2 - four.b2) < 1e-12);
}

TEST_CASE("evaluate_affinity pools scores across graphs") {
  Sequence seq = generate_sequence(tiny_synth(), 89, "eps");
  TrainConfig cfg = tiny_train();
  auto graphs = build_training_graphs({seq}, cfg);
  MlpParams w = MlpParams::init(cfg.hidden, 5);

  AffinityReport rep = evaluate_affinity(graphs, w, cfg);
  CHECK(rep.graphs == static_cast<int>(graphs.size()));
  CHECK(rep.skipped == 0);
  CHECK(rep.bce > 0.0);
  CHECK(rep.mse >= 0.0);
  CHECK(rep.mse_edge >= 0.0);
  CHECK(rep.loss > 0.0);
  CHECK(rep.auc >= 0.0);
  CHECK(rep.auc <= 1.0);

  // zero weights score every edge identically; with all scores tied the
  // rank statistic must come out as exactly one half
  AffinityReport tied = evaluate_affinity(graphs, MlpParams::zeros(cfg.hidden), cfg);
  CHECK(tied.auc == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tied.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("train converges on a clean two-object sequence") {
  // eight clean frames of two objects: the model must learn to score the
  // consecutive same-object links above the cross-object ones
  SynthConfig s = tiny_synth();
  s.n_objects = 2;
  s.n_frames = 8;
  Sequence seq = generate_sequence(s, 97, "chain");

  TrainConfig cfg = tiny_train();
  cfg.window = 8;
  cfg.overlap = 0;
  cfg.epochs = 40;
  cfg.lr = 3e-2;
  cfg.batch_size = 1;
  cfg.loss = "l2";

  auto graphs = build_training_graphs({seq}, cfg);
  REQUIRE(graphs.size() == 1);

  TrainResult r = train(graphs, graphs, cfg, 1);
  REQUIRE(r.history.size() == 40);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
  CHECK(r.final_val.mse_edge < 0.5 * r.initial_val.mse_edge);
  CHECK(r.final_val.auc > r.initial_val.auc - 0.05);
  CHECK(r.best_epoch >= 1);
  CHECK(r.last_epoch == 40);
  CHECK(r.last_step == 40);
}

TEST_CASE("train is deterministic in the seed") {
  Sequence seq = generate_sequence(tiny_synth(), 101, "det");
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4;
  auto graphs = build_training_graphs({seq}, cfg);
  auto val = std::vector<TrainingGraph>(graphs.begin(), graphs.begin() + 2);

  TrainResult a = train(graphs, val, cfg, 42);
  TrainResult b = train(graphs, val, cfg, 42);
  TrainResult c = train(graphs, val, cfg, 43);

  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(a.weights.W1 == b.weights.W1);
  CHECK(a.weights.b2 == b.weights.b2);
  CHECK(a.history.back().train_loss != c.history.back().train_loss);
}

TEST_CASE("train aborts when the solver drops too many graphs") {
  Sequence seq = generate_sequence(tiny_synth(), 103, "abort");
  TrainConfig cfg = tiny_train();
  cfg.qp_tol = 1e-300;  // every graph solve fails
  cfg.epochs = 1;
  auto graphs = build_training_graphs({seq}, cfg);
  CHECK_THROWS_AS(train(graphs, {}, cfg, 1), std::runtime_error);
}

TEST_CASE("affinity report of an untrained model is well formed") {
  std::mt19937_64 rng(107);
  SynthConfig s = tiny_synth();
  s.n_frames = 20;
  s.embed_noise = 2.0;  // drown the appearance signal
  Sequence seq = generate_sequence(s, rng(), "auc");
  TrainConfig cfg = tiny_train();
  cfg.window = 20;
  auto graphs = build_training_graphs({seq}, cfg);
  MlpParams w = MlpParams::init(cfg.hidden, rng());
  AffinityReport rep = evaluate_affinity(graphs, w, cfg);
  // a random net may rank the classes either way round (the geometry
  // features alone separate them, with an arbitrary sign), so only the
  // range is guaranteed, not closeness to 1/2
  CHECK(rep.auc >= 0.0);
  CHECK(rep.auc <= 1.0);
  CHECK(rep.mse_edge > 0.0);
  CHECK(rep.mse_edge < 1.0);
  CHECK(rep.bce > 0.0);
  CHECK(rep.graphs + rep.skipped == static_cast<int>(graphs.size()));

  AffinityReport again = evaluate_affinity(graphs, w, cfg);
  CHECK(again.auc == rep.auc);
  CHECK(again.loss == rep.loss);
}
