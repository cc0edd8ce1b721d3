#include "impbake/slice.h"

#include <algorithm>
#include <bit>
#include <cmath>

#include "impbake/error.h"
#include "impbake/parallel.h"

namespace impbake {

SquareCoord SliceImage::texel_center(int index) const {
  const int i = index % resolution;
  const int j = index / resolution;
  return {(i + 0.5) / resolution, (j + 0.5) / resolution};
}

int SliceImage::texel_index(SquareCoord c) const {
  const int i = std::clamp(static_cast<int>(c.s * resolution), 0, resolution - 1);
  const int j = std::clamp(static_cast<int>(c.t * resolution), 0, resolution - 1);
  return j * resolution + i;
}

Rgb SliceImage::albedo() const {
  Rgb sum(0.0);
  for (const Rgb& v : rgb) sum += v;
  return sum / static_cast<double>(texel_count());
}

void normalize_density(SliceImage& slice) {
  slice.density.assign(slice.rgb.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < slice.rgb.size(); ++k) {
    const double l = std::max(0.0, slice.rgb[k].luminance());
    slice.density[k] = l;
    total += l;
  }
  if (!(total > 0) || !std::isfinite(total)) throw Error("empty slice: " + slice.params.describe());
  for (double& d : slice.density) d /= total;
}

namespace {

std::uint64_t hash_double(std::uint64_t h, double v) { return mix_bits(h ^ std::bit_cast<std::uint64_t>(v)); }

std::uint64_t slice_key(const BsdfParams& p, const Direction& wi) {
  std::uint64_t h = 0x51ce5eedull;
  for (double v : {p.r0.r, p.r0.g, p.r0.b, p.alpha_x, p.alpha_y, p.eta, wi.x, wi.y, wi.z}) h = hash_double(h, v);
  h = mix_bits(h + static_cast<std::uint64_t>(p.model) * 3 + static_cast<std::uint64_t>(p.kind));
  return h;
}

Rgb tabulate_texel_multi(const BsdfParams& p, const Direction& wi, const Direction& wo, Rng& rng,
                         const TabulateOptions& o) {
  Rgb sum(0.0);
  double s1 = 0.0, s2 = 0.0;
  int n = 0;
  const int batch = std::max(1, o.walk_batch);
  while (n < o.max_walks) {
    const int todo = std::min(o.max_walks - n, n < o.min_walks ? o.min_walks - n : batch);
    for (int k = 0; k < todo; ++k) {
      const Rgb v = eval_multi(p, wi, wo, rng, 1);
      sum += v;
      const double l = v.luminance();
      s1 += l;
      s2 += l * l;
    }
    n += todo;
    if (n < o.min_walks) continue;
    if (s1 == 0.0) break;
    const double mean = s1 / n;
    const double var = std::max(0.0, (s2 / n - mean * mean) * n / std::max(1, n - 1));
    if (std::sqrt(var / n) <= o.noise_target * mean) break;
  }
  return sum / std::max(1, n);
}

}  // namespace

SliceImage tabulate_slice(const BsdfParams& params, const Direction& wi, const TabulateOptions& options) {
  if (options.resolution < 16) throw ContractError("tabulate_slice: resolution must be >= 16");
  if (!(wi.z > 0)) throw ContractError("tabulate_slice: wi must lie in the upper hemisphere");
  SliceImage slice;
  slice.resolution = options.resolution;
  slice.params = params;
  slice.domain = params.domain();
  slice.wi = wi;
  slice.noise_target = params.model == Model::MultiBounce ? options.noise_target : 0.0;
  const int count = slice.texel_count();
  slice.rgb.assign(count, Rgb(0.0));
  const double scale = domain_solid_angle(slice.domain);
  const std::uint64_t key = slice_key(params, wi);

  parallel_for(count, options.threads, [&](std::int64_t k) {
    const Direction wo = square_to_direction(slice.texel_center(static_cast<int>(k)), slice.domain);
    Rgb v;
    if (params.model == Model::SingleBounce) {
      v = eval_single(params, wi, wo);
    } else {
      Rng rng(options.seed, stream_key(key, static_cast<std::uint64_t>(k)));
      v = tabulate_texel_multi(params, wi, wo, rng, options);
    }
    slice.rgb[k] = v * scale;
  });
  for (const Rgb& v : slice.rgb)
    if (!v.is_finite()) throw Error("tabulate_slice: non-finite texel for " + params.describe());
  normalize_density(slice);
  return slice;
}

SliceImage slice_from_values(std::span<const double> values, int resolution, Domain domain) {
  if (resolution <= 0 || values.size() != static_cast<std::size_t>(resolution) * resolution)
    throw ContractError("slice_from_values: expected resolution^2 values");
  SliceImage slice;
  slice.resolution = resolution;
  slice.domain = domain;
  slice.rgb.resize(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] >= 0) || !std::isfinite(values[k]))
      throw ContractError("slice_from_values: values must be finite and nonnegative");
    slice.rgb[k] = Rgb(values[k]);
  }
  normalize_density(slice);
  return slice;
}

// ---------------------------------------------------------------------------

RowColumnSampler::RowColumnSampler(std::span<const double> density, int resolution)
    : resolution_(resolution), density_(density.begin(), density.end()) {
  const int n = resolution;
  if (n <= 0 || density.size() != static_cast<std::size_t>(n) * n)
    throw ContractError("RowColumnSampler: density must have resolution^2 entries");
  marginal_cdf_.assign(n + 1, 0.0);
  conditional_cdf_.assign(static_cast<std::size_t>(n) * (n + 1), 0.0);
  for (int j = 0; j < n; ++j) {
    double* cdf = &conditional_cdf_[static_cast<std::size_t>(j) * (n + 1)];
    for (int i = 0; i < n; ++i) {
      const double d = density[static_cast<std::size_t>(j) * n + i];
      if (!(d >= 0)) throw ContractError("RowColumnSampler: negative density");
      cdf[i + 1] = cdf[i] + d;
    }
    marginal_cdf_[j + 1] = marginal_cdf_[j] + cdf[n];
  }
  total_ = marginal_cdf_[n];
  if (!(total_ > 0)) throw ContractError("RowColumnSampler: density has no mass");
}

namespace {

// Invert a piecewise-linear CDF (n cells, cdf[0] = 0, cdf[n] = total) at x in
// [0, total]; returns a continuous coordinate in [0, 1] and the cell index.
double invert_cdf(const double* cdf, int n, double x, int* cell) {
  const double total = cdf[n];
  x = std::clamp(x, 0.0, total);
  // First cell whose upper edge exceeds x; cells with zero mass are skipped.
  int k = static_cast<int>(std::upper_bound(cdf, cdf + n + 1, x) - cdf) - 1;
  if (k >= n) {
    // x == total: step back to the last cell with mass.
    k = n - 1;
    while (k > 0 && cdf[k + 1] == cdf[k]) --k;
  }
  k = std::clamp(k, 0, n - 1);
  const double mass = cdf[k + 1] - cdf[k];
  const double frac = mass > 0 ? std::clamp((x - cdf[k]) / mass, 0.0, 1.0) : 0.5;
  if (cell) *cell = k;
  return (k + frac) / n;
}

}  // namespace

SquareCoord RowColumnSampler::sample(SquareCoord xi) const {
  const int n = resolution_;
  int row = 0;
  const double t = invert_cdf(marginal_cdf_.data(), n, xi.t * total_, &row);
  const double* cdf = &conditional_cdf_[static_cast<std::size_t>(row) * (n + 1)];
  const double s = invert_cdf(cdf, n, xi.s * cdf[n], nullptr);
  return {s, t};
}

double RowColumnSampler::pdf(SquareCoord c) const {
  const int n = resolution_;
  const int i = std::clamp(static_cast<int>(c.s * n), 0, n - 1);
  const int j = std::clamp(static_cast<int>(c.t * n), 0, n - 1);
  return density_[static_cast<std::size_t>(j) * n + i] / total_ * n * n;
}

SquareCoord row_column_sample(const SliceImage& slice, SquareCoord xi) {
  return RowColumnSampler(slice).sample(xi);
}

int PointSet::side() const {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(points.size()))));
}

namespace {
int checked_side(int n) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (n <= 0 || side * side != n) throw ContractError("point count must be a perfect square, got " + std::to_string(n));
  return side;
}
}  // namespace

PointSet uniform_grid(int n) {
  const int side = checked_side(n);
  PointSet grid;
  grid.points.reserve(n);
  for (int j = 0; j < side; ++j)
    for (int i = 0; i < side; ++i) grid.points.push_back({(i + 0.5) / side, (j + 0.5) / side});
  return grid;
}

PointSet stratified_grid(int n) {
  const int side = checked_side(n);
  PointSet grid;
  grid.points.reserve(n);
  for (int j = 0; j < side; ++j)
    for (int i = 0; i < side; ++i)
      grid.points.push_back({(i + (j + 0.5) / side) / side, (j + (i + 0.5) / side) / side});
  return grid;
}

PointSet discretize(const SliceImage& slice, int n) {
  PointSet grid = stratified_grid(n);
  const RowColumnSampler sampler(slice);
  for (SquareCoord& p : grid.points) p = sampler.sample(p);
  return grid;
}

}  // namespace impbake
