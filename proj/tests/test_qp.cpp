#include <doctest.h>

#include <random>

#include "flowtrack/graph.hpp"
#include "flowtrack/qp_solver.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

Detection det(int frame, double x) {
  Detection d;
  d.frame = frame;
  d.x = x;
  d.w = 10;
  d.h = 10;
  return d;
}

/// Single-detection graph: n = 3, conservation forces det = en = ex = t,
/// so the QP reduces to min_t 3*gamma*t^2 + C*t on [0, 1] with
/// C = c_det + c_en + c_ex. Closed form: t* = clamp(-C / (6*gamma), 0, 1).
struct OneDet {
  FlowGraph graph;
  ConstraintSet cs;
  OneDet() : graph(build_graph({det(0, 0)}, 1)), cs(build_constraints(graph)) {}
};

}  // namespace

TEST_CASE("solve_qp matches the closed form on a one-detection graph") {
  OneDet p;
  const double gamma = 0.1;

  SUBCASE("interior optimum") {
    Eigen::Vector3d c(-0.1, -0.05, -0.15);  // C = -0.3, t* = 0.5
    QpSolution s = solve_qp(gamma, c, p.cs, 1e-10);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.x[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.x[1] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.x[2] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.objective == doctest::Approx(3 * gamma * 0.25 - 0.3 * 0.5).epsilon(1e-7));
    CHECK(s.lambda.maxCoeff() < 1e-6);  // no active box rows
  }

  SUBCASE("optimum clipped at the upper bound") {
    Eigen::Vector3d c(-1.0, -0.5, -0.5);  // C = -2, unconstrained t* = 10/3
    QpSolution s = solve_qp(gamma, c, p.cs, 1e-10);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-7));
    // stationarity: 2*gamma*x + c + G'lambda + A'nu = 0, and the upper
    // bound multipliers must absorb C + 6*gamma = -1.4 in total
    CHECK(s.lambda.head(3).sum() == doctest::Approx(1.4).epsilon(1e-6));
  }

  SUBCASE("optimum clipped at zero") {
    Eigen::Vector3d c(0.5, 0.2, 0.2);
    QpSolution s = solve_qp(gamma, c, p.cs, 1e-10);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.x.cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("solve_qp norm shrinks as gamma grows") {
  std::mt19937_64 rng(3);
  oracle::Instance inst = oracle::random_instance(rng, {});
  ConstraintSet cs = build_constraints(inst.graph);
  Eigen::VectorXd c = oracle::random_cost(rng, inst.graph);

  double prev = std::numeric_limits<double>::infinity();
  for (double gamma : {1e-3, 1e-2, 1e-1, 1.0}) {
    QpSolution s = solve_qp(gamma, c, cs, 1e-10);
    REQUIRE(s.status == SolveStatus::Optimal);
    const double norm = s.x.squaredNorm();
    CHECK(norm <= prev + 1e-7);
    prev = norm;
  }
}

TEST_CASE("solve_qp reports MaxIter when starved of iterations") {
  OneDet p;
  Eigen::Vector3d c(-0.1, -0.05, -0.15);
  QpSolution s = solve_qp(0.1, c, p.cs, 1e-12, 1);
  CHECK(s.status == SolveStatus::MaxIter);
  CHECK(std::string(to_string(s.status)) == "max_iter");
  CHECK(std::string(to_string(SolveStatus::Optimal)) == "optimal");
  CHECK(std::string(to_string(SolveStatus::Infeasible)) == "infeasible");
}

TEST_CASE("solve_flow_exact equals exhaustive enumeration") {
  std::mt19937_64 rng(11);
  oracle::InstanceSpec spec;
  spec.min_dets = 2;
  spec.max_dets = 6;
  spec.min_frames = 2;
  spec.max_frames = 4;

  int compared = 0;
  for (int t = 0; t < 50; ++t) {
    oracle::Instance inst = oracle::random_instance(rng, spec);
    Eigen::VectorXd c = oracle::random_cost(rng, inst.graph);
    auto brute = oracle::brute_best_flow(inst.graph, c, 200000);
    REQUIRE(brute.has_value());

    FlowSolution fs = solve_flow_exact(c, inst.graph);
    CHECK(fs.objective == doctest::Approx(brute->objective).epsilon(1e-10));
    CHECK(fs.objective == doctest::Approx(c.dot(fs.x)).epsilon(1e-12));
    CHECK(check_feasible(build_constraints(inst.graph), fs.x, 1e-12));

    // when the optimum is unique the argmin agrees coordinatewise
    if (oracle::flow_margin(inst.graph, c, fs.x) > 1e-9) {
      CHECK((fs.x - brute->x).cwiseAbs().maxCoeff() < 1e-12);
      ++compared;
    }
  }
  CHECK(compared >= 30);  // ties should be rare under continuous costs
}

TEST_CASE("solve_flow_exact picks the cheaper of chain vs singletons") {
  // three detections in a row; transition costs decide the structure
  FlowGraph g = build_graph({det(0, 0), det(1, 10), det(2, 20)}, 1);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(g.num_variables());
  for (int i = 0; i < 3; ++i) c[g.det_var(i)] = -1.0;
  for (int i = 0; i < 3; ++i) c[g.entry_var(i)] = c[g.exit_var(i)] = 0.4;

  SUBCASE("attractive links produce one chain") {
    c[g.transition_var(0)] = c[g.transition_var(1)] = 0.1;  // < en + ex = 0.8
    FlowSolution fs = solve_flow_exact(c, g);
    CHECK(fs.x[g.transition_var(0)] == 1.0);
    CHECK(fs.x[g.transition_var(1)] == 1.0);
    CHECK(fs.x[g.entry_var(0)] == 1.0);
    CHECK(fs.x[g.exit_var(2)] == 1.0);
    CHECK(fs.objective == doctest::Approx(-3 + 0.8 + 0.2));
  }

  SUBCASE("repulsive links produce singletons") {
    c[g.transition_var(0)] = c[g.transition_var(1)] = 1.0;  // > en + ex
    FlowSolution fs = solve_flow_exact(c, g);
    CHECK(fs.x[g.transition_var(0)] == 0.0);
    CHECK(fs.x[g.transition_var(1)] == 0.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(fs.x[g.det_var(i)] == 1.0);
      CHECK(fs.x[g.entry_var(i)] == 1.0);
      CHECK(fs.x[g.exit_var(i)] == 1.0);
    }
  }

  SUBCASE("unprofitable detections stay unused") {
    for (int i = 0; i < 3; ++i) c[g.det_var(i)] = 0.5;
    c[g.transition_var(0)] = c[g.transition_var(1)] = 1.0;
    FlowSolution fs = solve_flow_exact(c, g);
    CHECK(fs.x.isZero(0.0));
    CHECK(fs.objective == 0.0);
  }
}

TEST_CASE("small-gamma QP lands on the unique integral vertex") {
  std::mt19937_64 rng(13);
  oracle::InstanceSpec spec;
  spec.min_dets = 3;
  spec.max_dets = 10;
  spec.min_frames = 2;
  spec.max_frames = 4;

  for (int t = 0; t < 10; ++t) {
    oracle::Instance inst;
    Eigen::VectorXd c;
    FlowSolution fs;
    double margin = -1;
    do {
      inst = oracle::random_instance(rng, spec);
      c = oracle::random_cost(rng, inst.graph);
      fs = solve_flow_exact(c, inst.graph);
      margin = oracle::flow_margin(inst.graph, c, fs.x);
    } while (margin < 0.05);

    ConstraintSet cs = build_constraints(inst.graph);
    QpSolution qs = solve_qp(1e-4, c, cs, 1e-9);
    REQUIRE(qs.status == SolveStatus::Optimal);
    RoundedSolution r = round_solution(qs.x, cs);
    CHECK(r.integral);
    CHECK(r.max_deviation < 1e-6);
    CHECK((r.x - fs.x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("round_solution flags fractional input and infeasible rounding") {
  OneDet p;
  Eigen::VectorXd x(3);
  x << 0.97, 1.02, 0.96;
  RoundedSolution r = round_solution(x, p.cs, 1e-1);
  CHECK(r.x.isOnes());
  CHECK(r.max_deviation == doctest::Approx(0.04));
  CHECK(r.integral);
  CHECK(!round_solution(x, p.cs, 1e-3).integral);

  // det rounds to 1 but entry/exit round to 0: conservation breaks
  Eigen::VectorXd bad(3);
  bad << 0.9, 0.4, 0.4;
  CHECK_THROWS_AS(round_solution(bad, p.cs), InfeasibleRoundingError);
  try {
    round_solution(bad, p.cs);
  } catch (const InfeasibleRoundingError& e) {
    CHECK(e.violating_rows.size() == 2);  // both conservation rows of the det
  }
}
