#pragma once

#include <functional>
#include <span>
#include <vector>

#include "impbake/slice.h"

namespace impbake {

/// Ground cost between two points of the unit square.
enum class GroundCost { Euclidean, SquaredEuclidean };

const char* to_string(GroundCost c);
GroundCost ground_cost_from_string(const std::string& name);

double ground_cost(GroundCost kind, SquareCoord a, SquareCoord b);

/// A one-to-one matching: source point i goes to target point perm[i].
struct Assignment {
  std::vector<int> perm;
  double objective = 0.0;       ///< sum of the ground cost that was minimized
  double euclidean_cost = 0.0;  ///< sum of Euclidean distances of the matching

  bool is_bijection() const;
};

/// Minimum-cost perfect matching for a dense n x n cost matrix given as a
/// callback. Shortest augmenting paths with dual potentials (cubic time,
/// exact). Ties are broken towards the lowest column index, so results are
/// reproducible.
std::vector<int> solve_dense_assignment(int n, const std::function<double(int, int)>& cost);

/// Exact discrete optimal transport between equally weighted point sets.
/// Throws ContractError when the sizes differ and Error if the solver
/// fails to produce a permutation.
Assignment solve_assignment(const PointSet& alpha, const PointSet& beta,
                            GroundCost cost = GroundCost::SquaredEuclidean);

}  // namespace impbake
