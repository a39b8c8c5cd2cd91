#include "flowtrack/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "flowtrack/data_io.hpp"

namespace flowtrack {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

MlpParams MlpParams::init(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw std::invalid_argument("hidden width must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    return dist(rng);
  };
  MlpParams w;
  const double bound1 = std::sqrt(1.0 / kFeatureDim);
  w.W1.resize(hidden, kFeatureDim);
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < kFeatureDim; ++c) w.W1(r, c) = uniform(bound1);
  w.b1.resize(hidden);
  for (int r = 0; r < hidden; ++r) w.b1[r] = uniform(bound1);
  const double bound2 = std::sqrt(1.0 / hidden);
  w.W2.resize(hidden);
  for (int c = 0; c < hidden; ++c) w.W2[c] = uniform(bound2);
  w.b2 = uniform(bound2);
  return w;
}

MlpParams MlpParams::zeros(int hidden) {
  MlpParams w;
  w.W1 = Eigen::MatrixXd::Zero(hidden, kFeatureDim);
  w.b1 = Eigen::VectorXd::Zero(hidden);
  w.W2 = Eigen::RowVectorXd::Zero(hidden);
  w.b2 = 0.0;
  return w;
}

MlpGrad MlpGrad::zeros(int hidden) {
  MlpGrad g;
  g.W1 = Eigen::MatrixXd::Zero(hidden, kFeatureDim);
  g.b1 = Eigen::VectorXd::Zero(hidden);
  g.W2 = Eigen::RowVectorXd::Zero(hidden);
  g.b2 = 0.0;
  return g;
}

MlpGrad& MlpGrad::operator+=(const MlpGrad& other) {
  W1 += other.W1;
  b1 += other.b1;
  W2 += other.W2;
  b2 += other.b2;
  input += other.input;
  return *this;
}

MlpGrad& MlpGrad::operator*=(double s) {
  W1 *= s;
  b1 *= s;
  W2 *= s;
  b2 *= s;
  input *= s;
  return *this;
}

double MlpGrad::squared_norm() const {
  return W1.squaredNorm() + b1.squaredNorm() + W2.squaredNorm() + b2 * b2;
}

double mlp_forward(const EdgeFeature& e, const MlpParams& w) {
  const Eigen::VectorXd hidden = (w.W1 * e.vec() + w.b1).cwiseMax(0.0);
  return sigmoid(w.W2.dot(hidden) + w.b2);
}

MlpGrad mlp_vjp_logit(const EdgeFeature& e, const MlpParams& w, double upstream_dz) {
  const Eigen::Matrix<double, kFeatureDim, 1> x = e.vec();
  const Eigen::VectorXd pre = w.W1 * x + w.b1;
  const Eigen::VectorXd hidden = pre.cwiseMax(0.0);

  MlpGrad g;
  g.W2 = upstream_dz * hidden.transpose();
  g.b2 = upstream_dz;
  Eigen::VectorXd dh = upstream_dz * w.W2.transpose();
  for (int r = 0; r < dh.size(); ++r)
    if (pre[r] <= 0.0) dh[r] = 0.0;  // relu: zero subgradient at the kink
  g.W1 = dh * x.transpose();
  g.b1 = dh;
  g.input = w.W1.transpose() * dh;
  return g;
}

MlpGrad mlp_vjp(const EdgeFeature& e, const MlpParams& w, double upstream) {
  // d sigmoid / d logit = p (1 - p)
  const double p = mlp_forward(e, w);
  return mlp_vjp_logit(e, w, upstream * p * (1.0 - p));
}

Eigen::VectorXd mlp_forward_batch_serial(const std::vector<EdgeFeature>& features,
                                         const MlpParams& w) {
  Eigen::VectorXd p(features.size());
  for (size_t e = 0; e < features.size(); ++e) p[e] = mlp_forward(features[e], w);
  return p;
}

Eigen::VectorXd mlp_forward_batch(const std::vector<EdgeFeature>& features, const MlpParams& w) {
  const int ne = static_cast<int>(features.size());
  Eigen::VectorXd p(ne);
#pragma omp parallel for schedule(static)
  for (int e = 0; e < ne; ++e) p[e] = mlp_forward(features[e], w);
  return p;
}

CostVector assemble_cost(const FlowGraph& graph, const std::vector<EdgeFeature>& features,
                         const MlpParams& w, double entry_exit_cost) {
  if (static_cast<int>(features.size()) != graph.num_transitions())
    throw std::invalid_argument("one feature per transition required");
  const int m = graph.num_detections();
  CostVector out;
  out.c.resize(graph.num_variables());
  for (int i = 0; i < m; ++i) out.c[graph.det_var(i)] = -graph.detections[i].score;
  out.c.segment(m, 2 * m).setConstant(entry_exit_cost);
  out.p = mlp_forward_batch(features, w);
  for (int e = 0; e < graph.num_transitions(); ++e) {
    const double p = std::clamp(out.p[e], kProbClamp, 1.0 - kProbClamp);
    out.c[graph.transition_var(e)] = -std::log(p);
  }
  return out;
}

void save_checkpoint(const MlpParams& params, const std::string& path,
                     const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["hidden"] = params.hidden();
  j["epoch"] = meta.epoch;
  j["step"] = meta.step;
  auto encode = [](const double* data, Eigen::Index count) {
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) out.push_back(format_double(data[i]));
    return out;
  };
  // row-major W1 so the file reads as one row per hidden unit
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1 = params.W1;
  j["W1"] = encode(w1.data(), w1.size());
  j["b1"] = encode(params.b1.data(), params.b1.size());
  j["W2"] = encode(params.W2.data(), params.W2.size());
  j["b2"] = format_double(params.b2);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << j.dump(2) << '\n';
}

MlpParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;

  if (meta) {
    meta->epoch = j.value("epoch", 0);
    meta->step = j.value("step", 0LL);
  }
  const int hidden = j.at("hidden").get<int>();
  auto decode = [&path](const nlohmann::json& arr, Eigen::Index count, double* data) {
    if (static_cast<Eigen::Index>(arr.size()) != count)
      throw std::runtime_error("checkpoint shape mismatch in " + path);
    for (Eigen::Index i = 0; i < count; ++i) data[i] = std::stod(arr[i].get<std::string>());
  };
  MlpParams w = MlpParams::zeros(hidden);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1(hidden, kFeatureDim);
  decode(j.at("W1"), w1.size(), w1.data());
  w.W1 = w1;
  decode(j.at("b1"), hidden, w.b1.data());
  decode(j.at("W2"), hidden, w.W2.data());
  w.b2 = std::stod(j.at("b2").get<std::string>());
  return w;
}

}  // namespace flowtrack
