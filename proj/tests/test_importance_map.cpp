#include <cmath>
#include <vector>

#include "doctest.h"
#include "impbake/error.h"
#include "impbake/importance_map.h"
#include "test_util.h"

using namespace impbake;

namespace {

SliceImage ggx_slice(int res, double ax, double ay, double theta) {
  BsdfParams p;
  p.r0 = Rgb(0.9, 0.7, 0.4);
  p.alpha_x = ax;
  p.alpha_y = ay;
  TabulateOptions o;
  o.resolution = res;
  return tabulate_slice(p, testutil::spherical(theta, 0.6), o);
}

// Gaussian in t, constant in s, scaled so the four quarters of t carry
// masses 0.1 / 0.4 / 0.4 / 0.1.
SliceImage quartile_gaussian(int n) {
  auto outer_mass = [](double sigma) {
    auto cdf = [&](double t) { return 0.5 * std::erfc(-(t - 0.5) / (sigma * std::sqrt(2.0))); };
    return (cdf(0.25) - cdf(0.0)) / (cdf(1.0) - cdf(0.0));
  };
  double lo = 0.01, hi = 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (outer_mass(mid) < 0.1 ? lo : hi) = mid;
  }
  const double sigma = 0.5 * (lo + hi);
  std::vector<double> v(n * n);
  for (int j = 0; j < n; ++j) {
    // Exact mass of the row so quarter masses hold at any resolution.
    auto cdf = [&](double t) { return 0.5 * std::erfc(-(t - 0.5) / (sigma * std::sqrt(2.0))); };
    const double m = cdf((j + 1.0) / n) - cdf(static_cast<double>(j) / n);
    for (int i = 0; i < n; ++i) v[j * n + i] = m;
  }
  return slice_from_values(v, n);
}

}  // namespace

TEST_CASE("uniform slice bakes to the identity") {
  const std::vector<double> flat(32 * 32, 1.0);
  const SliceImage s = slice_from_values(flat, 32);
  const ImportanceMap map = bake_slice(s, 1024);
  REQUIRE(map.resolution == 32);
  // Each texel keeps its own stratified target point.
  const PointSet strat = stratified_grid(1024);
  double cost = 0.0;
  for (int k = 0; k < map.texel_count(); ++k) {
    CHECK(map.uv[k].s == doctest::Approx(strat.points[k].s));
    CHECK(map.uv[k].t == doctest::Approx(strat.points[k].t));
    CHECK(static_cast<int>(map.uv[k].s * 32) == k % 32);
    CHECK(static_cast<int>(map.uv[k].t * 32) == k / 32);
    CHECK(map.sw[k].r == doctest::Approx(map.sw[0].r));
    const SquareCoord c = map.texel_center(k);
    cost += std::hypot(strat.points[k].s - c.s, strat.points[k].t - c.t);
  }
  CHECK(map.transport_cost == doctest::Approx(cost));
  CHECK(map_pdf(map, {0.3, 0.8}) == doctest::Approx(1.0 / kTwoPi));
}

TEST_CASE("identity map locality is the grid spacing") {
  const std::vector<double> flat(64 * 64, 1.0);
  const ImportanceMap map = row_column_map(slice_from_values(flat, 64), 4096);
  CHECK(locality_score(map) == doctest::Approx(1.0 / 64));
  // Stratified targets shift neighbours by at most 1/n of a texel.
  CHECK(max_adjacent_jump(map) == doctest::Approx(1.0).epsilon(1.0 / 64));
}

TEST_CASE("quartile gaussian bakes to a monotone map") {
  const SliceImage s = quartile_gaussian(32);
  double q1 = 0.0;
  for (int k = 0; k < 8 * 32; ++k) q1 += s.density[k];
  CHECK(q1 == doctest::Approx(0.1).epsilon(1e-6));

  const ImportanceMap map = bake_slice(s, 1024);
  const int n = map.resolution;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      REQUIRE(map.uv[(j + 1) * n + i].t > map.uv[j * n + i].t);
      // No mixing across columns.
      REQUIRE(static_cast<int>(map.uv[j * n + i].s * n) == i);
    }
  // Order is preserved segment by segment: the rows landing in each target
  // quarter are those whose stratified input falls in that quarter's mass
  // interval (0.1, 0.4, 0.4, 0.1).
  const PointSet strat = stratified_grid(1024);
  int rows_in[4] = {0, 0, 0, 0}, expected[4] = {0, 0, 0, 0};
  for (int j = 0; j < n; ++j) {
    ++rows_in[std::min(3, static_cast<int>(map.uv[j * n].t * 4))];
    const double mass = strat.points[j * n].t;
    ++expected[mass < 0.1 ? 0 : mass < 0.5 ? 1 : mass < 0.9 ? 2 : 3];
  }
  for (int q = 0; q < 4; ++q) CHECK(rows_in[q] == expected[q]);
}

TEST_CASE("texel-center query returns stored values") {
  const ImportanceMap map = bake_slice(ggx_slice(32, 0.3, 0.2, 0.8), 1024);
  for (int k : {0, 31, 500, 1023}) {
    const MapQuery q = query(map, map.texel_center(k));
    CHECK(q.uv.s == doctest::Approx(map.uv[k].s).epsilon(1e-12));
    CHECK(q.uv.t == doctest::Approx(map.uv[k].t).epsilon(1e-12));
    CHECK(q.sw.g == doctest::Approx(map.sw[k].g).epsilon(1e-12));
  }
}

TEST_CASE("query is Lipschitz with the map's largest jump") {
  const ImportanceMap map = bake_slice(ggx_slice(32, 0.4, 0.4, 0.5), 1024);
  // Bilinear interpolation moves at most max_jump per texel along each axis.
  const double lipschitz = std::sqrt(2.0) * max_adjacent_jump(map) * map.resolution;
  Rng rng(1, 1);
  for (int k = 0; k < 10000; ++k) {
    const SquareCoord a = rng.uniform2();
    const SquareCoord b{std::clamp(a.s + 1e-3 * (rng.uniform() - 0.5), 0.0, 1.0),
                        std::clamp(a.t + 1e-3 * (rng.uniform() - 0.5), 0.0, 1.0)};
    const SquareCoord qa = query(map, a).uv, qb = query(map, b).uv;
    REQUIRE(std::hypot(qa.s - qb.s, qa.t - qb.t) <= lipschitz * std::hypot(a.s - b.s, a.t - b.t) + 1e-12);
  }
}

TEST_CASE("perfect importance sampling identity at texel centers") {
  const SliceImage s = ggx_slice(32, 0.2, 0.5, 1.0);
  const ImportanceMap map = bake_slice(s, 1024);
  const double omega = domain_solid_angle(s.domain);
  for (int k = 0; k < map.texel_count(); ++k) {
    const Rgb target = s.rgb[s.texel_index(map.uv[k])] / omega;
    const Rgb got = map.sw[k] * map_pdf(map, map.uv[k]);
    for (int c = 0; c < 3; ++c) REQUIRE(got[c] == doctest::Approx(target[c]).epsilon(1e-9));
  }
}

TEST_CASE("map pdf integrates to one") {
  const ImportanceMap map = bake_slice(ggx_slice(32, 0.3, 0.3, 0.6), 1024);
  const double integral = testutil::integrate_directions(
      [&](const Direction& d) { return map_pdf(map, direction_to_square(d, Domain::Hemisphere)); }, 1000, 2000);
  CHECK(integral == doctest::Approx(1.0).epsilon(5e-3));

  // Interpolated maps never reach the far tails, so E[1 / pdf] falls short
  // of the domain solid angle; the f-weighted identity E[sw] = albedo is
  // what sampling relies on and holds to within the tail mass.
  const SliceImage s = ggx_slice(32, 0.3, 0.3, 0.6);
  Rng rng(2, 2);
  Rgb sum;
  const int n = 400000;
  for (int k = 0; k < n; ++k) sum += query(map, rng.uniform2()).sw;
  const Rgb albedo = s.albedo();
  for (int c = 0; c < 3; ++c) CHECK(sum[c] / n == doctest::Approx(albedo[c]).epsilon(0.01));
}

TEST_CASE("binned map targets reproduce the density") {
  const SliceImage s = ggx_slice(32, 0.25, 0.45, 0.9);
  const ImportanceMap map = bake_slice(s, 1024);
  std::vector<double> observed(256, 0.0), expected(256, 0.0);
  for (const SquareCoord& c : map.uv)
    observed[std::min(15, static_cast<int>(c.t * 16)) * 16 + std::min(15, static_cast<int>(c.s * 16))] += 1;
  for (int k = 0; k < s.texel_count(); ++k) {
    const SquareCoord c = s.texel_center(k);
    expected[static_cast<int>(c.t * 16) * 16 + static_cast<int>(c.s * 16)] += s.density[k] * 1024;
  }
  CHECK(testutil::chi_square(observed, expected).p_value > 0.01);
}

TEST_CASE("locality is invariant to density rescaling") {
  SliceImage s = ggx_slice(32, 0.3, 0.15, 0.7);
  const ImportanceMap a = bake_slice(s, 1024);
  // A power of two keeps the rescaled density bitwise identical.
  for (Rgb& v : s.rgb) v *= 4.0;
  normalize_density(s);
  const ImportanceMap b = bake_slice(s, 1024);
  CHECK(locality_score(a) == doctest::Approx(locality_score(b)).epsilon(1e-12));
  CHECK(a.uv == b.uv);
}

TEST_CASE("bake validates parameters") {
  BsdfParams p;
  p.r0 = Rgb(2.0);
  CHECK_THROWS_AS(bake(p, {0, 0, 1}), ContractError);
}
