#include "impbake/assignment.h"

#include <cmath>
#include <limits>
#include <string>

#include "impbake/error.h"

namespace impbake {

const char* to_string(GroundCost c) { return c == GroundCost::Euclidean ? "euclidean" : "sqeuclidean"; }

GroundCost ground_cost_from_string(const std::string& name) {
  if (name == "euclidean") return GroundCost::Euclidean;
  if (name == "sqeuclidean" || name == "squared") return GroundCost::SquaredEuclidean;
  throw ContractError("unknown ground cost '" + name + "' (expected euclidean or sqeuclidean)");
}

double ground_cost(GroundCost kind, SquareCoord a, SquareCoord b) {
  const double dx = a.s - b.s, dy = a.t - b.t;
  const double d2 = dx * dx + dy * dy;
  return kind == GroundCost::Euclidean ? std::sqrt(d2) : d2;
}

bool Assignment::is_bijection() const {
  std::vector<char> seen(perm.size(), 0);
  for (int j : perm) {
    if (j < 0 || j >= static_cast<int>(perm.size()) || seen[j]) return false;
    seen[j] = 1;
  }
  return true;
}

namespace {

// Shortest augmenting path assignment (Kuhn-Munkres with potentials, in the
// Jonker-Volgenant formulation). Rows are inserted one at a time; each
// insertion runs a Dijkstra search over reduced costs until it reaches a
// free column, then flips the alternating path.
template <typename CostFn>
std::vector<int> solve_sap(int n, CostFn&& cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int dummy = n;
  std::vector<double> u(n, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> col_row(n + 1, -1), way(n + 1, dummy);
  std::vector<char> used(n + 1);
  std::vector<int> free_cols;
  free_cols.reserve(n);

  for (int row = 0; row < n; ++row) {
    col_row[dummy] = row;
    int j0 = dummy;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    // Columns not yet reached by this search, kept in ascending order.
    free_cols.clear();
    for (int j = 0; j < n; ++j) free_cols.push_back(j);
    std::vector<int> reached;
    do {
      used[j0] = 1;
      if (j0 != dummy) reached.push_back(j0);
      const int i0 = col_row[j0];
      double delta = kInf;
      int j1 = -1;
      std::size_t j1_pos = 0;
      const double ui = u[i0];
      for (std::size_t k = 0; k < free_cols.size(); ++k) {
        const int j = free_cols[k];
        const double cur = cost(i0, j) - ui - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
          j1_pos = k;
        }
      }
      if (j1 < 0 || !std::isfinite(delta)) throw Error("assignment solver: no augmenting path (non-finite costs?)");
      u[col_row[dummy]] += delta;
      v[dummy] -= delta;
      for (int j : reached) {
        u[col_row[j]] += delta;
        v[j] -= delta;
      }
      for (int j : free_cols) minv[j] -= delta;
      free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(j1_pos));
      j0 = j1;
    } while (col_row[j0] != -1);
    do {
      const int j1 = way[j0];
      col_row[j0] = col_row[j1];
      j0 = j1;
    } while (j0 != dummy);
  }

  std::vector<int> perm(n, -1);
  for (int j = 0; j < n; ++j)
    if (col_row[j] >= 0) perm[col_row[j]] = j;
  return perm;
}

}  // namespace

std::vector<int> solve_dense_assignment(int n, const std::function<double(int, int)>& cost) {
  if (n < 0) throw ContractError("solve_dense_assignment: negative size");
  return solve_sap(n, cost);
}

Assignment solve_assignment(const PointSet& alpha, const PointSet& beta, GroundCost cost) {
  if (alpha.size() != beta.size())
    throw ContractError("solve_assignment: point sets differ in size (" + std::to_string(alpha.size()) + " vs " +
                        std::to_string(beta.size()) + ")");
  const int n = static_cast<int>(alpha.size());
  std::vector<double> ax(n), ay(n), bx(n), by(n);
  for (int k = 0; k < n; ++k) {
    ax[k] = alpha.points[k].s;
    ay[k] = alpha.points[k].t;
    bx[k] = beta.points[k].s;
    by[k] = beta.points[k].t;
  }
  Assignment out;
  if (cost == GroundCost::SquaredEuclidean) {
    out.perm = solve_sap(n, [&](int i, int j) {
      const double dx = ax[i] - bx[j], dy = ay[i] - by[j];
      return dx * dx + dy * dy;
    });
  } else {
    out.perm = solve_sap(n, [&](int i, int j) {
      const double dx = ax[i] - bx[j], dy = ay[i] - by[j];
      return std::sqrt(dx * dx + dy * dy);
    });
  }
  if (!out.is_bijection()) throw Error("solve_assignment: solver did not return a permutation");
  for (int i = 0; i < n; ++i) {
    out.objective += ground_cost(cost, alpha.points[i], beta.points[out.perm[i]]);
    out.euclidean_cost += ground_cost(GroundCost::Euclidean, alpha.points[i], beta.points[out.perm[i]]);
  }
  return out;
}

}  // namespace impbake
