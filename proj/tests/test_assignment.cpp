#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "impbake/assignment.h"
#include "impbake/error.h"

using namespace impbake;

namespace {

PointSet random_points(Rng& rng, int n) {
  PointSet p;
  for (int k = 0; k < n; ++k) p.points.push_back(rng.uniform2());
  return p;
}

double brute_force_min(const PointSet& a, const PointSet& b, GroundCost cost) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += ground_cost(cost, a.points[i], b.points[perm[i]]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("identical point sets give the identity") {
  const PointSet g = uniform_grid(64);
  const Assignment a = solve_assignment(g, g);
  for (int i = 0; i < 64; ++i) CHECK(a.perm[i] == i);
  CHECK(a.objective == 0.0);
  CHECK(a.euclidean_cost == 0.0);
}

TEST_CASE("matches exhaustive search on small instances") {
  Rng rng(1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    const PointSet a = random_points(rng, n), b = random_points(rng, n);
    for (GroundCost c : {GroundCost::Euclidean, GroundCost::SquaredEuclidean}) {
      const Assignment s = solve_assignment(a, b, c);
      REQUIRE(s.is_bijection());
      CHECK(s.objective == doctest::Approx(brute_force_min(a, b, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("translated grid") {
  // Interior points shifted by 0.1 along s: every point moves by exactly 0.1.
  PointSet a;
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) a.points.push_back({0.1 + 0.05 * i, 0.1 + 0.1 * j});
  PointSet b = a;
  for (auto& p : b.points) p.s += 0.1;
  const Assignment s = solve_assignment(a, b, GroundCost::SquaredEuclidean);
  CHECK(s.euclidean_cost == doctest::Approx(64 * 0.1));
}

TEST_CASE("dense solver on an explicit matrix") {
  const std::vector<std::vector<double>> m = {{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  const std::vector<int> perm = solve_dense_assignment(3, [&](int i, int j) { return m[i][j]; });
  CHECK(perm == std::vector<int>{1, 0, 2});
  // All-equal costs: ties resolve to the identity.
  const std::vector<int> ties = solve_dense_assignment(5, [](int, int) { return 1.0; });
  CHECK(ties == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("bijection on a 1024-point bake") {
  TabulateOptions o;
  o.resolution = 32;
  BsdfParams p;
  p.alpha_x = 0.2;
  p.alpha_y = 0.4;
  const SliceImage s = tabulate_slice(p, normalize(Vec3{0.5, 0.1, 0.8}), o);
  const Assignment a = solve_assignment(uniform_grid(1024), discretize(s, 1024));
  CHECK(a.is_bijection());
  const Assignment again = solve_assignment(uniform_grid(1024), discretize(s, 1024));
  CHECK(a.perm == again.perm);
}

TEST_CASE("size mismatch") {
  CHECK_THROWS_AS(solve_assignment(uniform_grid(16), uniform_grid(25)), ContractError);
  CHECK(ground_cost_from_string("euclidean") == GroundCost::Euclidean);
  CHECK(ground_cost_from_string("sqeuclidean") == GroundCost::SquaredEuclidean);
  CHECK_THROWS_AS(ground_cost_from_string("manhattan"), ContractError);
}
