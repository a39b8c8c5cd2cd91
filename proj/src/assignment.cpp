#include "flowtrack/assignment.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flowtrack {

namespace {

constexpr double kBig = 1e15;  // finite stand-in for forbidden pairs

// Hungarian algorithm with row/column potentials, O(n^2 m), requires
// rows <= cols. Returns col index per row (every row is assigned; the
// caller strips kBig-level pairs).
std::vector<int> hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment out;
  out.row_to_col.assign(rows, -1);
  if (rows == 0 || cols == 0) return out;
  if (cost.hasNaN()) throw std::invalid_argument("cost matrix contains NaN");

  const bool flip = rows > cols;
  Eigen::MatrixXd a = flip ? Eigen::MatrixXd(cost.transpose()) : cost;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(a(i) < kUnassignable)) a(i) = kBig;

  const std::vector<int> match = hungarian(a);
  for (int r = 0; r < static_cast<int>(match.size()); ++r) {
    const int c = match[r];
    if (c < 0 || a(r, c) >= kBig / 2) continue;
    const int orow = flip ? c : r;
    const int ocol = flip ? r : c;
    out.row_to_col[orow] = ocol;
    out.total_cost += cost(orow, ocol);
  }
  return out;
}

Assignment solve_max_weight(const Eigen::MatrixXd& weight) {
  const int rows = static_cast<int>(weight.rows());
  const int cols = static_cast<int>(weight.cols());
  Assignment out;
  out.row_to_col.assign(rows, -1);
  if (rows == 0 || cols == 0) return out;

  // Negate and give every row a private zero-cost opt-out column, so the
  // perfect matching below realizes the maximum-weight (not necessarily
  // perfect) matching over strictly positive weights.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols + rows);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double w = weight(r, c);
      a(r, c) = (std::isfinite(w) && w > 0.0) ? -w : kBig;
    }
    for (int d = 0; d < rows; ++d) a(r, cols + d) = (d == r) ? 0.0 : kBig;
  }

  const std::vector<int> match = hungarian(a);
  for (int r = 0; r < rows; ++r) {
    const int c = match[r];
    if (c < 0 || c >= cols || a(r, c) >= kBig / 2) continue;
    out.row_to_col[r] = c;
    out.total_cost += weight(r, c);
  }
  return out;
}

}  // namespace flowtrack
