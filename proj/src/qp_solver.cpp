#include "flowtrack/qp_solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowtrack/log.hpp"

namespace flowtrack {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

namespace {

// Requires the box structure G = [I; -I] the interior-point iteration
// is specialized for.
void check_box_structure(const ConstraintSet& cs) {
  const int n = cs.num_variables();
  if (cs.G.rows() != 2 * n || cs.G.cols() != n || cs.G.nonZeros() != 2 * n)
    throw std::invalid_argument("solve_qp expects box constraints G = [I; -I]");
  for (int k = 0; k < n; ++k) {
    bool upper = false, lower = false;
    for (Eigen::SparseMatrix<double>::InnerIterator it(cs.G, k); it; ++it) {
      if (it.row() == k && it.value() == 1.0) upper = true;
      else if (it.row() == n + k && it.value() == -1.0) lower = true;
      else throw std::invalid_argument("solve_qp expects box constraints G = [I; -I]");
    }
    if (!upper || !lower) throw std::invalid_argument("solve_qp expects box constraints G = [I; -I]");
  }
}

double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

}  // namespace

QpSolution solve_qp(double gamma, const Eigen::VectorXd& c, const ConstraintSet& cs, double tol,
                    int max_iter) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  const int n = cs.num_variables();
  const int p = cs.num_equalities();
  if (c.size() != n) throw std::invalid_argument("cost length does not match constraints");
  check_box_structure(cs);

  QpSolution sol;
  if (n == 0) {
    sol.status = SolveStatus::Optimal;
    return sol;
  }

  const Eigen::VectorXd u = cs.h.head(n);
  const Eigen::VectorXd l = -cs.h.tail(n);
  if (((u - l).array() <= 0.0).any()) throw std::invalid_argument("box must have positive width");

  // Interior start: primal midpoint of the box, all duals at one.
  Eigen::VectorXd x = 0.5 * (u + l);
  Eigen::VectorXd su = u - x;
  Eigen::VectorXd sl = x - l;
  Eigen::VectorXd lu = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd ll = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd nu = Eigen::VectorXd::Ones(p);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> schur;
  Eigen::SparseMatrix<double> At = cs.A.transpose();
  bool analyzed = false;

  auto finish = [&](SolveStatus status, int iters) {
    sol.x = x;
    sol.lambda.resize(2 * n);
    sol.lambda << lu, ll;
    sol.nu = nu;
    sol.objective = gamma * x.squaredNorm() + c.dot(x);
    sol.status = status;
    sol.iterations = iters;
    return sol;
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd rd = 2.0 * gamma * x + c + At * nu + lu - ll;
    const Eigen::VectorXd rp = cs.A * x - cs.b;
    const Eigen::VectorXd ru = x + su - u;
    const Eigen::VectorXd rl = sl - x + l;
    const double mu = (su.dot(lu) + sl.dot(ll)) / (2.0 * n);
    const double comp = std::max(su.cwiseProduct(lu).cwiseAbs().maxCoeff(),
                                 sl.cwiseProduct(ll).cwiseAbs().maxCoeff());

    if (!std::isfinite(mu) || lu.maxCoeff() > 1e10 || ll.maxCoeff() > 1e10)
      return finish(SolveStatus::Infeasible, iter);

    const double rp_inf = p > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
    const double rd_inf = rd.cwiseAbs().maxCoeff();
    const double box_inf = std::max(ru.cwiseAbs().maxCoeff(), rl.cwiseAbs().maxCoeff());
    if (rp_inf <= tol && rd_inf <= tol && box_inf <= tol && comp <= tol)
      return finish(SolveStatus::Optimal, iter);

    // Normal equations: D dx + A' dnu = r,  A dx = -rp, with the bound
    // multipliers eliminated through the complementarity rows.
    const Eigen::VectorXd D =
        Eigen::VectorXd::Constant(n, 2.0 * gamma) + lu.cwiseQuotient(su) + ll.cwiseQuotient(sl);
    const Eigen::VectorXd Dinv = D.cwiseInverse();

    if (p > 0) {
      Eigen::SparseMatrix<double> S = cs.A * Dinv.asDiagonal() * At;
      if (!analyzed) {
        schur.analyzePattern(S);
        analyzed = true;
      }
      schur.factorize(S);
      if (schur.info() != Eigen::Success)
        throw std::runtime_error("interior point: Schur complement factorization failed");
    }

    auto solve_direction = [&](const Eigen::VectorXd& rcu, const Eigen::VectorXd& rcl,
                               Eigen::VectorXd& dx, Eigen::VectorXd& dnu, Eigen::VectorXd& dsu,
                               Eigen::VectorXd& dsl, Eigen::VectorXd& dlu, Eigen::VectorXd& dll) {
      const Eigen::VectorXd r = -rd - (lu.cwiseProduct(ru) - rcu).cwiseQuotient(su) +
                                (ll.cwiseProduct(rl) - rcl).cwiseQuotient(sl);
      if (p > 0) {
        dnu = schur.solve(cs.A * Dinv.cwiseProduct(r) + rp);
        dx = Dinv.cwiseProduct(r - At * dnu);
      } else {
        dnu.resize(0);
        dx = Dinv.cwiseProduct(r);
      }
      dsu = -ru - dx;
      dsl = -rl + dx;
      dlu = (-rcu - lu.cwiseProduct(dsu)).cwiseQuotient(su);
      dll = (-rcl - ll.cwiseProduct(dsl)).cwiseQuotient(sl);
    };

    // Predictor (affine scaling) step.
    Eigen::VectorXd dx, dnu, dsu, dsl, dlu, dll;
    solve_direction(su.cwiseProduct(lu), sl.cwiseProduct(ll), dx, dnu, dsu, dsl, dlu, dll);

    const double ap_aff = std::min(step_to_boundary(su, dsu), step_to_boundary(sl, dsl));
    const double ad_aff = std::min(step_to_boundary(lu, dlu), step_to_boundary(ll, dll));
    const double mu_aff = ((su + ap_aff * dsu).dot(lu + ad_aff * dlu) +
                           (sl + ap_aff * dsl).dot(ll + ad_aff * dll)) /
                          (2.0 * n);
    const double ratio = std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0);
    const double sigma = ratio * ratio * ratio;

    // Corrector with centering.
    const Eigen::VectorXd rcu =
        su.cwiseProduct(lu) + dsu.cwiseProduct(dlu) - Eigen::VectorXd::Constant(n, sigma * mu);
    const Eigen::VectorXd rcl =
        sl.cwiseProduct(ll) + dsl.cwiseProduct(dll) - Eigen::VectorXd::Constant(n, sigma * mu);
    solve_direction(rcu, rcl, dx, dnu, dsu, dsl, dlu, dll);

    const double tau = std::max(0.995, 1.0 - 10.0 * mu);
    const double ap = std::min(1.0, tau * std::min(step_to_boundary(su, dsu), step_to_boundary(sl, dsl)));
    const double ad = std::min(1.0, tau * std::min(step_to_boundary(lu, dlu), step_to_boundary(ll, dll)));

    x += ap * dx;
    su += ap * dsu;
    sl += ap * dsl;
    nu += ad * dnu;
    lu += ad * dlu;
    ll += ad * dll;
  }

  log_warn("solve_qp: not converged after ", max_iter, " iterations");
  return finish(SolveStatus::MaxIter, max_iter);
}

FlowSolution solve_flow_exact(const Eigen::VectorXd& c, const FlowGraph& graph) {
  const int m = graph.num_detections();
  const int ne = graph.num_transitions();
  if (c.size() != graph.num_variables())
    throw std::invalid_argument("cost length does not match graph");

  FlowSolution out;
  out.x = Eigen::VectorXd::Zero(graph.num_variables());
  if (m == 0) return out;

  // Node-split digraph: source, sink, and an in/out node pair per
  // detection so that unit detection capacity is an arc.
  const int source = 0, sink = 1;
  const int num_nodes = 2 + 2 * m;
  auto in_node = [](int i) { return 2 + 2 * i; };
  auto out_node = [](int i) { return 3 + 2 * i; };

  struct Arc {
    int to;
    int cap;
    double cost;
  };
  std::vector<Arc> arcs;                             // arc 2k and its reverse 2k+1
  std::vector<std::vector<int>> adj(num_nodes);
  auto add_arc = [&](int from, int to, double cost) {
    adj[from].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({to, 1, cost});
    adj[to].push_back(static_cast<int>(arcs.size()));
    arcs.push_back({from, 0, -cost});
    return static_cast<int>(arcs.size()) - 2;
  };

  std::vector<int> var_arc(graph.num_variables());
  for (int i = 0; i < m; ++i) {
    var_arc[graph.entry_var(i)] = add_arc(source, in_node(i), c[graph.entry_var(i)]);
    var_arc[graph.det_var(i)] = add_arc(in_node(i), out_node(i), c[graph.det_var(i)]);
    var_arc[graph.exit_var(i)] = add_arc(out_node(i), sink, c[graph.exit_var(i)]);
  }
  for (int e = 0; e < ne; ++e) {
    const auto& [i, j] = graph.transitions[e];
    var_arc[graph.transition_var(e)] = add_arc(out_node(i), in_node(j), c[graph.transition_var(e)]);
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(num_nodes);
  std::vector<int> parent(num_nodes);
  std::vector<char> queued(num_nodes);

  // Successive shortest augmenting paths: the residual graph starts as a
  // DAG and stays free of negative cycles, so label-correcting search
  // terminates. Augment while the best source->sink path is profitable.
  for (int round = 0; round <= m; ++round) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(queued.begin(), queued.end(), 0);
    dist[source] = 0.0;
    std::deque<int> queue{source};
    queued[source] = 1;
    long long relaxations = 0;
    const long long relax_limit =
        static_cast<long long>(num_nodes + 1) * static_cast<long long>(arcs.size() + 1);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      queued[v] = 0;
      for (int a : adj[v]) {
        if (arcs[a].cap <= 0) continue;
        const double nd = dist[v] + arcs[a].cost;
        if (nd < dist[arcs[a].to] - 1e-12) {
          if (++relaxations > relax_limit)
            throw std::runtime_error("min-cost flow: shortest-path search did not terminate");
          dist[arcs[a].to] = nd;
          parent[arcs[a].to] = a;
          if (!queued[arcs[a].to]) {
            queue.push_back(arcs[a].to);
            queued[arcs[a].to] = 1;
          }
        }
      }
    }
    if (!(dist[sink] < -1e-12)) break;
    for (int v = sink; v != source;) {
      const int a = parent[v];
      arcs[a].cap -= 1;
      arcs[a ^ 1].cap += 1;
      v = arcs[a ^ 1].to;
    }
  }

  for (int v = 0; v < graph.num_variables(); ++v) {
    out.x[v] = 1 - arcs[var_arc[v]].cap;
    if (out.x[v] != 0.0) out.objective += c[v];
  }
  return out;
}

RoundedSolution round_solution(const Eigen::VectorXd& x, const ConstraintSet& cs, double tol) {
  RoundedSolution r;
  r.x.resize(x.size());
  r.max_deviation = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    r.x[i] = x[i] >= 0.5 ? 1.0 : 0.0;
    r.max_deviation = std::max(r.max_deviation, std::abs(x[i] - r.x[i]));
  }
  r.integral = r.max_deviation <= tol;

  std::vector<int> bad;
  const Eigen::VectorXd eq = cs.A * r.x - cs.b;
  for (Eigen::Index i = 0; i < eq.size(); ++i)
    if (std::abs(eq[i]) > 1e-6) bad.push_back(static_cast<int>(i));
  const Eigen::VectorXd ineq = cs.G * r.x - cs.h;
  for (Eigen::Index i = 0; i < ineq.size(); ++i)
    if (ineq[i] > 1e-6) bad.push_back(static_cast<int>(cs.num_equalities() + i));
  if (!bad.empty())
    throw InfeasibleRoundingError("rounded solution violates " + std::to_string(bad.size()) +
                                      " constraint row(s); max deviation " +
                                      std::to_string(r.max_deviation),
                                  std::move(bad));
  return r;
}

}  // namespace flowtrack
