#include "impbake/importance_map.h"

#include <algorithm>
#include <cmath>

#include "impbake/error.h"

namespace impbake {

namespace {

ImportanceMap empty_map(const SliceImage& slice, int points) {
  const PointSet grid = uniform_grid(points);
  ImportanceMap map;
  map.resolution = grid.side();
  map.domain = slice.domain;
  map.params = slice.params;
  map.wi = slice.wi;
  map.noise_target = slice.noise_target;
  map.density_resolution = slice.resolution;
  map.density = slice.density;
  return map;
}

void fill_targets(ImportanceMap& map, const SliceImage& slice, const PointSet& targets) {
  map.uv = targets.points;
  map.sw.resize(map.uv.size());
  for (std::size_t k = 0; k < map.uv.size(); ++k) map.sw[k] = slice_sampling_weight(slice, map.uv[k]);
}

}  // namespace

Rgb slice_sampling_weight(const SliceImage& slice, SquareCoord uv) {
  const int k = slice.texel_index(uv);
  const double d = slice.density[k];
  if (!(d > 0)) return Rgb(0.0);
  return slice.rgb[k] / (d * slice.texel_count());
}

ImportanceMap bake(const BsdfParams& params, const Direction& wi, const BakeConfig& config) {
  params.validate();
  const SliceImage slice = tabulate_slice(params, wi, config.tabulate);
  return bake_slice(slice, config.points, config.cost);
}

ImportanceMap bake_slice(const SliceImage& slice, int points, GroundCost cost) {
  ImportanceMap map = empty_map(slice, points);
  const PointSet alpha = uniform_grid(points);
  const PointSet beta = discretize(slice, points);
  const Assignment a = solve_assignment(alpha, beta, cost);
  PointSet targets;
  targets.points.resize(points);
  for (int i = 0; i < points; ++i) targets.points[i] = beta.points[a.perm[i]];
  fill_targets(map, slice, targets);
  map.transport_cost = a.euclidean_cost;
  return map;
}

ImportanceMap row_column_map(const SliceImage& slice, int points) {
  ImportanceMap map = empty_map(slice, points);
  const PointSet alpha = uniform_grid(points);
  const PointSet beta = discretize(slice, points);
  fill_targets(map, slice, beta);
  for (int i = 0; i < points; ++i)
    map.transport_cost += ground_cost(GroundCost::Euclidean, alpha.points[i], beta.points[i]);
  return map;
}

MapQuery query(const ImportanceMap& map, SquareCoord xi) {
  const int n = map.resolution;
  if (n < 2) return {map.uv.at(0), map.sw.at(0)};
  const double x = std::clamp(xi.s, 0.0, 1.0) * n - 0.5;
  const double y = std::clamp(xi.t, 0.0, 1.0) * n - 0.5;
  const int i0 = std::clamp(static_cast<int>(std::floor(x)), 0, n - 2);
  const int j0 = std::clamp(static_cast<int>(std::floor(y)), 0, n - 2);
  const double fx = x - i0, fy = y - j0;
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
  const int k00 = j0 * n + i0, k10 = k00 + 1, k01 = k00 + n, k11 = k01 + 1;

  MapQuery q;
  q.uv.s = w00 * map.uv[k00].s + w10 * map.uv[k10].s + w01 * map.uv[k01].s + w11 * map.uv[k11].s;
  q.uv.t = w00 * map.uv[k00].t + w10 * map.uv[k10].t + w01 * map.uv[k01].t + w11 * map.uv[k11].t;
  q.uv.s = std::clamp(q.uv.s, 0.0, 1.0);
  q.uv.t = std::clamp(q.uv.t, 0.0, 1.0);
  q.sw = map.sw[k00] * w00 + map.sw[k10] * w10 + map.sw[k01] * w01 + map.sw[k11] * w11;
  q.sw = Rgb(std::max(0.0, q.sw.r), std::max(0.0, q.sw.g), std::max(0.0, q.sw.b));
  return q;
}

double map_pdf(const ImportanceMap& map, SquareCoord uv) {
  const int n = map.density_resolution;
  if (n <= 0 || map.density.size() != static_cast<std::size_t>(n) * n)
    throw ContractError("map_pdf: map carries no source density");
  const int i = std::clamp(static_cast<int>(uv.s * n), 0, n - 1);
  const int j = std::clamp(static_cast<int>(uv.t * n), 0, n - 1);
  return pdf_square_to_solid_angle(map.density[j * n + i] * n * n, uv, map.domain);
}

namespace {

template <typename Fn>
void for_adjacent_pairs(const ImportanceMap& map, Fn&& fn) {
  const int n = map.resolution;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int k = j * n + i;
      if (i + 1 < n) fn(map.uv[k], map.uv[k + 1]);
      if (j + 1 < n) fn(map.uv[k], map.uv[k + n]);
    }
}

double distance(SquareCoord a, SquareCoord b) { return std::hypot(a.s - b.s, a.t - b.t); }

}  // namespace

double locality_score(const ImportanceMap& map) {
  double sum = 0.0;
  long pairs = 0;
  for_adjacent_pairs(map, [&](SquareCoord a, SquareCoord b) {
    sum += distance(a, b);
    ++pairs;
  });
  return pairs > 0 ? sum / pairs : 0.0;
}

double max_adjacent_jump(const ImportanceMap& map) {
  double worst = 0.0;
  for_adjacent_pairs(map, [&](SquareCoord a, SquareCoord b) {
    if (map.domain == Domain::Sphere && (a.t < 0.5) != (b.t < 0.5)) return;
    worst = std::max(worst, distance(a, b));
  });
  return worst * map.resolution;
}

}  // namespace impbake
