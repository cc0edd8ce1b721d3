#pragma once

#include <vector>

#include "impbake/assignment.h"
#include "impbake/slice.h"

namespace impbake {

struct BakeConfig {
  TabulateOptions tabulate;
  /// Number of transported points; the map is sqrt(points) texels square.
  int points = 4096;
  GroundCost cost = GroundCost::SquaredEuclidean;
};

/// A baked importance map. Texel i (index j * N + i, center at the regular
/// grid point) stores the target square coordinate uv[i] and the sampling
/// weight sw[i] = f cos / pdf at that target.
///
/// The source density of the slice is kept so that map_pdf can be answered
/// without the slice itself. It is not part of the map file; loading a map
/// for pdf queries therefore needs the matching slice (see io.h).
struct ImportanceMap {
  int resolution = 0;
  Domain domain = Domain::Hemisphere;
  std::vector<SquareCoord> uv;
  std::vector<Rgb> sw;

  BsdfParams params;
  Direction wi{0, 0, 1};
  double noise_target = 0.0;

  int density_resolution = 0;
  std::vector<double> density;

  double transport_cost = 0.0;  ///< Euclidean cost of the assignment

  int texel_count() const { return resolution * resolution; }
  SquareCoord texel_center(int index) const {
    return {(index % resolution + 0.5) / resolution, (index / resolution + 0.5) / resolution};
  }
};

struct MapQuery {
  SquareCoord uv;
  Rgb sw;
};

/// Tabulate the slice for (params, wi) and bake it.
ImportanceMap bake(const BsdfParams& params, const Direction& wi, const BakeConfig& config = {});

/// Bake an already tabulated slice: discretize it into `points` samples,
/// match them to the regular grid by optimal transport and record the
/// matched targets.
ImportanceMap bake_slice(const SliceImage& slice, int points = 4096, GroundCost cost = GroundCost::SquaredEuclidean);

/// The map produced by plain row-column sampling of the regular grid (no
/// transport); the baseline the baked map is compared against.
ImportanceMap row_column_map(const SliceImage& slice, int points = 4096);

/// Sampling weight f cos / pdf at a square coordinate of the slice.
Rgb slice_sampling_weight(const SliceImage& slice, SquareCoord uv);

/// Bilinear interpolation of uv and sw between texel centers (linear
/// extrapolation in the outer half texel), uv clamped to the unit square.
MapQuery query(const ImportanceMap& map, SquareCoord xi);

/// Density per steradian of the map's samples at `uv`: the source slice
/// density converted through the equal-area Jacobian.
double map_pdf(const ImportanceMap& map, SquareCoord uv);

/// Mean distance between the uv of horizontally or vertically adjacent
/// texels.
double locality_score(const ImportanceMap& map);

/// Largest uv distance between adjacent texels, in units of the texel
/// spacing. Pairs whose targets fall in different halves of a sphere
/// domain (reflection vs refraction) straddle the seam and are skipped.
double max_adjacent_jump(const ImportanceMap& map);

}  // namespace impbake
