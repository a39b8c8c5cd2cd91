#include "flowtrack/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "flowtrack/config.hpp"
#include "flowtrack/cost_model.hpp"
#include "flowtrack/data_io.hpp"
#include "flowtrack/diff_layer.hpp"
#include "flowtrack/log.hpp"
#include "flowtrack/metrics.hpp"
#include "flowtrack/parallel.hpp"
#include "flowtrack/qp_solver.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tracking.hpp"
#include "flowtrack/training.hpp"

namespace fs = std::filesystem;

namespace flowtrack {

namespace {

constexpr double kGradTol = 1e-4;  ///< gradcheck pass threshold

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  int jobs = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
};

bool is_override_key(const std::string& key) {
  return key.rfind("synth.", 0) == 0 || key.rfind("train.", 0) == 0 ||
         key.rfind("track.", 0) == 0;
}

/// Pulls dotted config overrides (--train.gamma 0.05 or --track.delta=3)
/// out of the raw argument list; everything else goes to the CLI parser.
std::vector<std::string> extract_overrides(
    const std::vector<std::string>& args,
    std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.size() > 2 && a[0] == '-' && a[1] == '-') {
      std::string body = a.substr(2);
      std::size_t eq = body.find('=');
      std::string key = eq == std::string::npos ? body : body.substr(0, eq);
      if (is_override_key(key)) {
        std::string value;
        if (eq != std::string::npos) {
          value = body.substr(eq + 1);
        } else if (i + 1 < args.size()) {
          value = args[++i];
        } else {
          throw std::invalid_argument("override --" + key + " needs a value");
        }
        overrides.emplace_back(key, value);
        continue;
      }
    }
    rest.push_back(a);
  }
  return rest;
}

Config make_config(const CommonOpts& c) {
  Config cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  for (const auto& [k, v] : c.overrides) apply_override(cfg, k, v);
  validate_config(cfg);
  if (c.jobs > 0) set_threads(c.jobs);
  return cfg;
}

void write_meta(const std::string& out_dir, const std::string& command, std::uint64_t seed,
                const Config& cfg, const nlohmann::ordered_json& extra = {}) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  j["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "meta.json");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write meta.json in " + out_dir);
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const CommonOpts& common, const std::string& out_dir) {
  Config cfg = make_config(common);
  std::vector<std::string> dirs = generate_dataset(cfg.synth, common.seed, out_dir);
  write_meta(out_dir, "synth", common.seed, cfg);
  std::cout << "wrote " << dirs.size() << " sequence(s) to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& val_dir,
              const std::string& out_dir, const std::string& resume) {
  Config cfg = make_config(common);

  std::vector<std::string> dirs = list_sequence_dirs(data_dir);
  if (dirs.empty()) throw std::runtime_error("no sequences under " + data_dir);

  std::vector<Sequence> train_seqs, val_seqs;
  if (!val_dir.empty()) {
    for (const std::string& d : dirs) train_seqs.push_back(load_sequence(d));
    for (const std::string& d : list_sequence_dirs(val_dir))
      val_seqs.push_back(load_sequence(d));
  } else {
    int n = static_cast<int>(dirs.size());
    int n_val = 0;
    if (cfg.train.val_fraction > 0.0 && n > 1)
      n_val = std::clamp(static_cast<int>(std::lround(cfg.train.val_fraction * n)), 1, n - 1);
    for (int i = 0; i < n; ++i) {
      if (i < n - n_val)
        train_seqs.push_back(load_sequence(dirs[i]));
      else
        val_seqs.push_back(load_sequence(dirs[i]));
    }
  }
  std::cout << "training on " << train_seqs.size() << " sequence(s), validating on "
            << val_seqs.size() << "\n";

  std::vector<TrainingGraph> train_graphs = build_training_graphs(train_seqs, cfg.train);
  std::vector<TrainingGraph> val_graphs = build_training_graphs(val_seqs, cfg.train);

  MlpParams resumed;
  CheckpointMeta meta;
  TrainStart start;
  if (!resume.empty()) {
    resumed = load_checkpoint(resume, &meta);
    start.weights = &resumed;
    start.epoch = meta.epoch;
    start.step = meta.step;
    std::cout << "resuming from " << resume << " (epoch " << meta.epoch << ", step "
              << meta.step << ")\n";
  }

  fs::create_directories(out_dir);
  fs::path trace_path = fs::path(out_dir) / "trace.csv";
  bool append = !resume.empty() && fs::exists(trace_path);
  std::ofstream trace(trace_path, append ? std::ios::app : std::ios::out);
  if (!trace) throw std::runtime_error("cannot write " + trace_path.string());
  if (!append) trace << "epoch,step,train_loss,val_loss\n";
  auto on_epoch = [&trace](const EpochStats& s) {
    trace << s.epoch << ',' << s.step << ',' << format_double(s.train_loss) << ','
          << format_double(s.val_loss) << "\n";
    trace.flush();
  };

  TrainResult result = train(train_graphs, val_graphs, cfg.train, common.seed, on_epoch, start);

  save_checkpoint(result.weights, (fs::path(out_dir) / "checkpoint.json").string(),
                  {result.best_epoch, result.best_step});
  save_checkpoint(result.last_weights, (fs::path(out_dir) / "last.json").string(),
                  {result.last_epoch, result.last_step});

  int dropped = 0;
  for (const EpochStats& s : result.history) dropped += s.dropped_graphs;
  nlohmann::ordered_json extra;
  extra["best_epoch"] = result.best_epoch;
  extra["best_step"] = result.best_step;
  extra["epochs_run"] = static_cast<int>(result.history.size());
  extra["dropped_graphs"] = dropped;
  write_meta(out_dir, "train", common.seed, cfg, extra);

  std::cout << "kept weights from epoch " << result.best_epoch << " (step "
            << result.best_step << ")\n";
  if (!val_graphs.empty()) {
    std::cout << "validation " << cfg.train.loss << " loss: "
              << format_double(result.initial_val.loss) << " -> "
              << format_double(result.final_val.loss) << "\n";
    std::cout << "validation edge AUC: " << format_double(result.initial_val.auc) << " -> "
              << format_double(result.final_val.auc) << "\n";
  }
  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// track

int cmd_track(const CommonOpts& common, const std::string& data_dir, const std::string& ckpt,
              const std::string& out_dir) {
  Config cfg = make_config(common);
  MlpParams w = load_checkpoint(ckpt);

  std::vector<std::string> dirs;
  if (fs::exists(fs::path(data_dir) / "det.txt"))
    dirs.push_back(data_dir);
  else
    dirs = list_sequence_dirs(data_dir);
  if (dirs.empty()) throw std::runtime_error("no sequences under " + data_dir);

  fs::create_directories(out_dir);
  for (const std::string& d : dirs) {
    Sequence seq = load_sequence(d);
    std::vector<Trajectory> tracks = track_sequence(seq, w, cfg.track);
    std::string result_path = (fs::path(out_dir) / (seq.name + ".txt")).string();
    write_mot_csv(result_path, flatten_tracks(tracks));
    std::cout << seq.name << ": " << tracks.size() << " track(s) -> " << result_path << "\n";
  }
  write_meta(out_dir, "track", common.seed, cfg, {{"checkpoint", ckpt}});
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
  std::string name;
  MotMetrics m;
};

std::string format_eval_row(const std::string& name, const MotMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %7.3f %7.3f %7.3f %6d %6d %5d %5d %4d %4d %7d %7d",
                name.c_str(), m.mota, m.idf1, m.motp, m.false_positives, m.false_negatives,
                m.id_switches, m.fragmentations, m.mostly_tracked, m.mostly_lost, m.gt_count,
                m.pred_count);
  return buf;
}

MotMetrics aggregate(const std::vector<EvalRow>& rows) {
  MotMetrics total;
  double iou_sum = 0.0;
  for (const EvalRow& r : rows) {
    total.gt_count += r.m.gt_count;
    total.pred_count += r.m.pred_count;
    total.matches += r.m.matches;
    total.false_positives += r.m.false_positives;
    total.false_negatives += r.m.false_negatives;
    total.id_switches += r.m.id_switches;
    total.fragmentations += r.m.fragmentations;
    total.idtp += r.m.idtp;
    total.mostly_tracked += r.m.mostly_tracked;
    total.mostly_lost += r.m.mostly_lost;
    total.gt_track_count += r.m.gt_track_count;
    if (r.m.matches > 0) iou_sum += r.m.motp * r.m.matches;
  }
  double nan = std::numeric_limits<double>::quiet_NaN();
  total.mota = total.gt_count > 0
                   ? 1.0 - static_cast<double>(total.false_positives + total.false_negatives +
                                               total.id_switches) /
                               total.gt_count
                   : nan;
  total.motp = total.matches > 0 ? iou_sum / total.matches : nan;
  total.idf1 = (total.gt_count + total.pred_count) > 0
                   ? 2.0 * total.idtp / (total.gt_count + total.pred_count)
                   : nan;
  return total;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows,
                    const MotMetrics& total, bool with_total) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "sequence,mota,idf1,motp,fp,fn,ids,frag,mt,ml,gt,pred,idtp,matches,gt_tracks\n";
  auto emit = [&out](const std::string& name, const MotMetrics& m) {
    out << name << ',' << format_double(m.mota) << ',' << format_double(m.idf1) << ','
        << format_double(m.motp) << ',' << m.false_positives << ',' << m.false_negatives << ','
        << m.id_switches << ',' << m.fragmentations << ',' << m.mostly_tracked << ','
        << m.mostly_lost << ',' << m.gt_count << ',' << m.pred_count << ',' << m.idtp << ','
        << m.matches << ',' << m.gt_track_count << "\n";
  };
  for (const EvalRow& r : rows) emit(r.name, r.m);
  if (with_total) emit("TOTAL", total);
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path,
             const std::string& out_dir, double iou_threshold, int jobs) {
  if (jobs > 0) set_threads(jobs);

  std::vector<EvalRow> rows;
  if (fs::is_directory(gt_path) && fs::is_directory(pred_path)) {
    std::vector<std::string> gt_dirs;
    for (const auto& entry : fs::directory_iterator(gt_path))
      if (entry.is_directory() && fs::exists(entry.path() / "gt.txt"))
        gt_dirs.push_back(entry.path().string());
    std::sort(gt_dirs.begin(), gt_dirs.end());
    if (gt_dirs.empty())
      throw std::runtime_error("no sequences with gt.txt under " + gt_path);

    for (const std::string& d : gt_dirs) {
      std::string name = fs::path(d).filename().string();
      fs::path pred_file = fs::path(pred_path) / (name + ".txt");
      if (!fs::exists(pred_file))
        throw std::runtime_error("missing result file: " + pred_file.string());
      std::vector<Trajectory> gt = group_by_id(read_mot_csv((fs::path(d) / "gt.txt").string(),
                                                            /*is_ground_truth=*/true));
      std::vector<Trajectory> pred = group_by_id(read_mot_csv(pred_file.string()));
      rows.push_back({name, evaluate_tracks(gt, pred, iou_threshold)});
    }
  } else {
    std::vector<Trajectory> gt =
        group_by_id(read_mot_csv(gt_path, /*is_ground_truth=*/true));
    std::vector<Trajectory> pred = group_by_id(read_mot_csv(pred_path));
    rows.push_back({fs::path(pred_path).stem().string(), evaluate_tracks(gt, pred,
                                                                         iou_threshold)});
  }

  MotMetrics total = aggregate(rows);
  std::printf("%-14s %7s %7s %7s %6s %6s %5s %5s %4s %4s %7s %7s\n", "sequence", "MOTA",
              "IDF1", "MOTP", "FP", "FN", "IDS", "Frag", "MT", "ML", "GT", "Pred");
  for (const EvalRow& r : rows) std::printf("%s\n", format_eval_row(r.name, r.m).c_str());
  if (rows.size() > 1) std::printf("%s\n", format_eval_row("TOTAL", total).c_str());

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_eval_csv((fs::path(out_dir) / "eval.csv").string(), rows, total, rows.size() > 1);
    std::cout << "wrote " << (fs::path(out_dir) / "eval.csv").string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradInstance {
  FlowGraph graph;
  ConstraintSet cs;
  Eigen::VectorXd c;
  Eigen::VectorXd target;
};

GradInstance random_instance(std::mt19937_64& rng, int max_dets) {
  std::uniform_real_distribution<double> pos(0.0, 240.0), size(20.0, 60.0), conf(0.3, 1.0),
      unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    int m = 4 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, max_dets - 3)));
    std::vector<int> per_frame(3, 1);
    for (int extra = m - 3; extra > 0; --extra) ++per_frame[rng() % 3];

    std::vector<Detection> dets;
    std::vector<Embedding> embeds;
    for (int f = 0; f < 3; ++f) {
      for (int k = 0; k < per_frame[f]; ++k) {
        Detection d;
        d.frame = f;
        d.x = pos(rng);
        d.y = pos(rng);
        d.w = size(rng);
        d.h = size(rng);
        d.score = conf(rng);
        dets.push_back(d);
        Eigen::VectorXd v(8);
        for (int q = 0; q < 8; ++q) v[q] = normal(rng);
        embeds.push_back(normalized_embedding(std::move(v)));
      }
    }

    GradInstance inst;
    inst.graph = build_graph(std::move(dets), 2);
    if (inst.graph.num_transitions() < 2) continue;
    std::vector<EdgeFeature> features = compute_edge_features(inst.graph, embeds);
    MlpParams mlp = MlpParams::init(16, rng());
    inst.c = assemble_cost(inst.graph, features, mlp).c;
    inst.cs = build_constraints(inst.graph);
    inst.target = Eigen::VectorXd(inst.graph.num_variables());
    for (Eigen::Index i = 0; i < inst.target.size(); ++i) inst.target[i] = unit(rng);
    return inst;
  }
}

/// Active/inactive classification of every inequality row (used to detect
/// finite-difference steps that cross an active-set boundary).
std::vector<char> activity_pattern(const QpSolution& sol, const ConstraintSet& cs) {
  Eigen::VectorXd slack = cs.h - cs.G * sol.x;
  std::vector<char> a(cs.num_inequalities());
  for (int r = 0; r < cs.num_inequalities(); ++r) a[r] = sol.lambda[r] > slack[r] ? 1 : 0;
  return a;
}

int cmd_gradcheck(const CommonOpts& common, int n_graphs, int max_dets) {
  Config cfg = make_config(common);
  const double gamma = cfg.train.gamma;
  const double tol = std::min(cfg.train.qp_tol, 1e-10);
  const double h = 1e-5;

  double max_rel = 0.0;
  long long checked = 0, excluded = 0;
  int solved_graphs = 0;

  for (int g = 0; g < n_graphs; ++g) {
    std::mt19937_64 rng(common.seed + static_cast<std::uint64_t>(g) * 0x9e3779b9ULL);
    GradInstance inst = random_instance(rng, max_dets);
    const int n = inst.graph.num_variables();

    QpLayer layer(gamma, inst.cs, tol, 200);
    Eigen::VectorXd analytic;
    try {
      layer.forward(inst.c);
      analytic = layer.backward(2.0 * (layer.solution().x - inst.target));
    } catch (const std::exception& e) {
      log_warn("gradcheck graph ", g, " skipped: ", e.what());
      continue;
    }
    ++solved_graphs;

    double graph_max = 0.0;
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd cp = inst.c, cm = inst.c;
      cp[k] += h;
      cm[k] -= h;
      QpSolution sp = solve_qp(gamma, cp, inst.cs, tol, 200);
      QpSolution sm = solve_qp(gamma, cm, inst.cs, tol, 200);
      if (sp.status != SolveStatus::Optimal || sm.status != SolveStatus::Optimal) {
        ++excluded;
        continue;
      }
      if (activity_pattern(sp, inst.cs) != activity_pattern(sm, inst.cs)) {
        ++excluded;  // the step straddles an active-set change: L is kinked here
        continue;
      }
      double lp = (sp.x - inst.target).squaredNorm();
      double lm = (sm.x - inst.target).squaredNorm();
      double fd = (lp - lm) / (2.0 * h);
      // The 1e-2 floor makes the test an absolute one (at 1e-6) for
      // coordinates whose true gradient vanishes, where the difference
      // quotient only carries solver-tolerance noise.
      double rel = std::abs(fd - analytic[k]) /
                   std::max({std::abs(fd), std::abs(analytic[k]), 1e-2});
      graph_max = std::max(graph_max, rel);
      ++checked;
    }
    max_rel = std::max(max_rel, graph_max);
    log_debug("gradcheck graph ", g, ": n=", n, " max rel err ", graph_max);
  }

  if (solved_graphs == 0) {
    std::cerr << "gradcheck: no graph could be solved\n";
    return 1;
  }
  std::printf("gradcheck: %d graphs, %lld coordinates checked, %lld excluded "
              "(active-set flips)\n",
              solved_graphs, checked, excluded);
  std::printf("max relative error: %.3e (tolerance %.0e)\n", max_rel, kGradTol);
  bool pass = checked > 0 && max_rel <= kGradTol;
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"learned min-cost-flow multi-object tracker"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string out_dir, data_dir, val_dir, ckpt, resume, gt_path, pred_path;
  double iou = 0.5;
  int n_graphs = 25, max_dets = 8;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", common.seed, "RNG seed")->capture_default_str();
    sub->add_option("--jobs", common.jobs, "thread cap (0 = runtime default)");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic sequences");
  add_common(synth);
  synth->add_option("--out", out_dir, "dataset directory to create")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "fit the edge cost model");
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "training dataset root")->required();
  train_cmd->add_option("--val", val_dir, "validation dataset root (default: tail split)");
  train_cmd->add_option("--out", out_dir, "run output directory")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  CLI::App* track_cmd = app.add_subcommand("track", "associate detections into tracks");
  add_common(track_cmd);
  track_cmd->add_option("--data", data_dir, "sequence directory or dataset root")->required();
  track_cmd->add_option("--ckpt", ckpt, "model checkpoint")->required();
  track_cmd->add_option("--out", out_dir, "result directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "score results against ground truth");
  eval_cmd->add_option("--gt", gt_path, "gt.txt file or dataset root")->required();
  eval_cmd->add_option("--pred", pred_path, "result file or directory")->required();
  eval_cmd->add_option("--iou", iou, "match threshold")->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "directory for eval.csv");
  eval_cmd->add_option("--jobs", common.jobs, "thread cap (0 = runtime default)");

  CLI::App* gc = app.add_subcommand("gradcheck",
                                    "finite-difference check of the solver backward pass");
  add_common(gc);
  gc->add_option("--graphs", n_graphs, "random instances")->capture_default_str();
  gc->add_option("--max-dets", max_dets, "max detections per instance")->capture_default_str();

  try {
    std::vector<std::string> rest = extract_overrides(args, common.overrides);
    std::vector<std::string> argv_store;
    argv_store.push_back("flowtrack");
    argv_store.insert(argv_store.end(), rest.begin(), rest.end());
    std::vector<char*> argv;
    argv.reserve(argv_store.size());
    for (std::string& s : argv_store) argv.push_back(s.data());
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (eval_cmd->parsed() && !common.overrides.empty())
      log_warn("eval takes no config overrides; ignoring ", common.overrides.size());

    if (synth->parsed()) return cmd_synth(common, out_dir);
    if (train_cmd->parsed()) return cmd_train(common, data_dir, val_dir, out_dir, resume);
    if (track_cmd->parsed()) return cmd_track(common, data_dir, ckpt, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(gt_path, pred_path, out_dir, iou, common.jobs);
    if (gc->parsed()) return cmd_gradcheck(common, n_graphs, max_dets);
    std::cerr << "error: no subcommand given\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli_line(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> args;
  std::string tok;
  while (in >> tok) args.push_back(tok);
  return run_cli(args);
}

}  // namespace flowtrack
