#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "impbake/bsdf.h"
#include "impbake/core_math.h"

namespace impbake {

/// A tabulated BSDF slice over the square parameterization of wo.
///
/// Texel (i, j) covers s in [i/N, (i+1)/N), t in [j/N, (j+1)/N) and is stored
/// at index j * N + i. `rgb` holds f_s cos at the texel-center direction
/// times the domain's solid angle, i.e. a value per unit square area, so
/// sum(rgb) / N^2 approximates the directional albedo. `density` is the
/// luminance of `rgb` normalized to sum to 1.
struct SliceImage {
  int resolution = 0;
  Domain domain = Domain::Hemisphere;
  std::vector<Rgb> rgb;
  std::vector<double> density;

  BsdfParams params;
  Direction wi{0, 0, 1};
  double noise_target = 0.0;

  int texel_count() const { return resolution * resolution; }
  SquareCoord texel_center(int index) const;
  int texel_index(SquareCoord c) const;

  /// Density per unit square area (piecewise constant).
  double square_pdf(SquareCoord c) const { return density[texel_index(c)] * texel_count(); }
  /// Density per steradian.
  double solid_angle_pdf(SquareCoord c) const {
    return pdf_square_to_solid_angle(square_pdf(c), c, domain);
  }
  /// Integral of f cos over the domain (sum of rgb times cell area).
  Rgb albedo() const;
};

struct TabulateOptions {
  int resolution = 64;
  /// Per-texel relative standard error target for stochastic tabulation.
  double noise_target = 0.01;
  int min_walks = 64;
  int max_walks = 4096;
  int walk_batch = 32;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Tabulate f_s cos for fixed (params, wi). Single-bounce slices are
/// evaluated analytically at texel centers; multi-bounce texels accumulate
/// random walks until the relative standard error reaches the noise target
/// or the walk budget runs out. Throws Error("empty slice") when nothing
/// scatters (e.g. grazing wi).
SliceImage tabulate_slice(const BsdfParams& params, const Direction& wi, const TabulateOptions& options = {});

/// Wrap an arbitrary nonnegative N x N grayscale image (row-major, row j
/// covering t in [j/N, (j+1)/N)) as a slice; used for photo densities.
SliceImage slice_from_values(std::span<const double> values, int resolution, Domain domain = Domain::Hemisphere);

/// Recompute `density` from `rgb` (luminance, normalized).
void normalize_density(SliceImage& slice);

/// Marginal-then-conditional inverse transform sampling of a piecewise
/// constant density on the unit square.
class RowColumnSampler {
 public:
  RowColumnSampler() = default;
  RowColumnSampler(std::span<const double> density, int resolution);
  explicit RowColumnSampler(const SliceImage& slice) : RowColumnSampler(slice.density, slice.resolution) {}

  SquareCoord sample(SquareCoord xi) const;
  /// Density per unit square area.
  double pdf(SquareCoord c) const;
  int resolution() const { return resolution_; }

 private:
  int resolution_ = 0;
  std::vector<double> marginal_cdf_;     // resolution + 1
  std::vector<double> conditional_cdf_;  // resolution rows of resolution + 1
  std::vector<double> density_;
  double total_ = 0.0;
};

/// One-off convenience wrapper around RowColumnSampler.
SquareCoord row_column_sample(const SliceImage& slice, SquareCoord xi);

/// Ordered, equally weighted point set on the unit square.
struct PointSet {
  std::vector<SquareCoord> points;

  std::size_t size() const { return points.size(); }
  /// Side of the square grid the set was built on.
  int side() const;
};

/// Regular grid of texel centers, index j * side + i.
PointSet uniform_grid(int n);

/// One point per texel of the sqrt(n) grid, offset inside its stratum so
/// that every one of the n fine rows and columns holds exactly one point
/// (canonical multi-jittered layout), index j * side + i.
PointSet stratified_grid(int n);

/// Push stratified_grid(n) through row-column sampling of the slice.
/// Point k of the result is the image of grid point k. `n` must be a
/// perfect square.
PointSet discretize(const SliceImage& slice, int n);

}  // namespace impbake
