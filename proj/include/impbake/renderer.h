#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impbake/bsdf.h"
#include "impbake/importance_map.h"
#include "impbake/io.h"
#include "impbake/neural.h"

namespace impbake {

enum class SamplerKind : std::uint8_t { NDF, VNDF, RandomWalk, BakedMap, Neural };
enum class Integrator : std::uint8_t { LightOnly, BsdfOnly, MIS };

const char* to_string(SamplerKind s);
const char* to_string(Integrator i);
SamplerKind sampler_from_string(const std::string& s);
Integrator integrator_from_string(const std::string& s);

/// Importance maps baked for one material at several incident directions.
/// A shading point uses the map whose wi is closest to its own.
struct BakedSet {
  std::vector<ImportanceMap> maps;  // each with its density attached

  const ImportanceMap& nearest(const Direction& wi) const;
};

struct Material {
  std::string name;
  BsdfParams params;
  SamplerKind sampler = SamplerKind::VNDF;
  std::shared_ptr<const BakedSet> baked;    // required for BakedMap
  std::shared_ptr<const NeuralBsdf> neural;  // required for Neural
};

struct Sphere {
  Vec3 center;
  double radius = 1.0;
  int material = 0;
};

/// Triangle with a shading tangent (the anisotropy's x axis), projected onto
/// the plane of the triangle at shading time.
struct Triangle {
  Vec3 p0, p1, p2;
  Vec3 tangent{1, 0, 0};
  int material = 0;
};

/// One-sided emitting parallelogram corner + s u + t v, s, t in [0,1]; it
/// emits towards cross(u, v).
struct RectLight {
  Vec3 corner, u, v;
  Rgb radiance{1, 1, 1};
};

/// Piecewise-constant 2D distribution over a W x H grid of weights.
class Distribution2D {
 public:
  Distribution2D() = default;
  Distribution2D(std::vector<double> weights, int width, int height);

  /// Continuous sample in [0,1)^2 and its density per unit square area.
  SquareCoord sample(SquareCoord xi, double* pdf) const;
  double pdf(SquareCoord c) const;
  bool empty() const { return width_ == 0; }

 private:
  int width_ = 0, height_ = 0;
  std::vector<double> marginal_;      // height + 1
  std::vector<double> conditional_;   // height rows of width + 1
  std::vector<double> weights_;
  double total_ = 0.0;
};

/// Environment light: constant radiance or an equirectangular image (z up,
/// theta from +z along image rows, phi = atan2(y, x) along columns), scaled
/// by `scale` and importance-sampled by luminance times sin(theta).
class EnvironmentLight {
 public:
  EnvironmentLight() = default;
  static EnvironmentLight constant(const Rgb& radiance);
  static EnvironmentLight from_image(Image image, double scale = 1.0);

  Rgb radiance(const Vec3& dir) const;
  /// Sample a world direction; returns radiance, sets pdf per steradian.
  Rgb sample(SquareCoord xi, Vec3* dir, double* pdf) const;
  double pdf(const Vec3& dir) const;
  Rgb max_radiance() const;

  bool is_constant() const { return image_.width == 0; }

 private:
  Rgb constant_{0, 0, 0};
  Image image_;
  double scale_ = 1.0;
  Distribution2D distribution_;
};

/// Procedural sky baked to an equirectangular image: vertical gradient plus
/// a disc "sun".
struct ProceduralSky {
  int width = 256, height = 128;
  Rgb zenith{0.3, 0.45, 0.8};
  Rgb horizon{0.9, 0.9, 1.0};
  Rgb ground{0.15, 0.13, 0.1};
  Vec3 sun_direction{0.5, 0.3, 0.8};
  double sun_radius_deg = 4.0;
  Rgb sun_radiance{60, 55, 45};

  Image render() const;
};

enum class CameraType : std::uint8_t { Pinhole, Orthographic };

struct Camera {
  CameraType type = CameraType::Pinhole;
  Vec3 position{0, -5, 1};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 0, 1};
  double fov_deg = 40.0;     ///< vertical field of view (pinhole)
  double ortho_height = 2.0;  ///< world-space height of the view (orthographic)
  int width = 128, height = 128;
};

struct Ray {
  Vec3 origin, dir;
};

struct Scene {
  Camera camera;
  std::vector<Material> materials;
  std::vector<Sphere> spheres;
  std::vector<Triangle> triangles;
  std::vector<RectLight> rect_lights;
  std::optional<EnvironmentLight> environment;
  /// Path depth; 1 is direct lighting.
  int max_depth = 1;

  int light_count() const { return static_cast<int>(rect_lights.size()) + (environment ? 1 : 0); }

  /// Throws ContractError unless there is a light, every material is within
  /// the BSDF bounds and every object references an existing material with
  /// its sampler data present.
  void validate() const;

  void add_quad(const Vec3& corner, const Vec3& u, const Vec3& v, int material, const Vec3& tangent = {1, 0, 0});
};

struct RenderOptions {
  Integrator integrator = Integrator::MIS;
  int spp = 16;
  std::uint64_t seed = 0;
  int threads = 0;  ///< 0 = all cores; the image does not depend on it
};

struct RenderOutput {
  Image image;
  int spp = 0;
  double seconds = 0.0;
  std::uint64_t nan_count = 0;  ///< non-finite samples (dropped from the image)
  std::uint64_t negative_count = 0;
};

/// Throws ContractError when MIS is requested for a material whose sampler
/// has no pdf.
RenderOutput render(const Scene& scene, const RenderOptions& options);

/// Mean over pixels and channels of (x - ref)^2 / (ref^2 + 0.01).
double relmse(const Image& image, const Image& reference);

/// Power heuristic (exponent 2) weight of strategy a against b.
double power_heuristic(double pdf_a, double pdf_b);

struct VarianceRow {
  SamplerKind sampler;
  Integrator integrator;
  int spp;
  double relmse;
  double seconds;
  double reference_seconds;
};

struct VarianceOptions {
  Integrator integrator = Integrator::BsdfOnly;
  int spp = 64;
  int reference_spp = 4096;
  std::uint64_t seed = 1;
  int threads = 0;
};

/// For each sampler: bind it to every material, render at `spp` and against
/// a `reference_spp` render of the same configuration (another seed), and
/// report the relMSE.
std::vector<VarianceRow> variance_report(const Scene& scene, const std::vector<SamplerKind>& samplers,
                                         const VarianceOptions& options, std::vector<Image>* images = nullptr);

/// CSV with columns sampler,integrator,spp,relmse,seconds,reference_seconds.
void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceRow>& rows);

/// Images side by side with a 2-pixel gap (for comparison strips).
Image side_by_side(const std::vector<Image>& images);

/// Scale so that the 99th-percentile luminance maps to 1.
Image tonemap_exposure(const Image& image);

// ---------------------------------------------------------------------------
// Scene files (JSON). See README for the schema.

struct SceneFile {
  Scene scene;
  RenderOptions options;
};

/// Relative paths inside the file resolve against its directory.
SceneFile load_scene(const std::filesystem::path& path);
SceneFile parse_scene(const std::string& json_text, const std::filesystem::path& base_dir = ".");

}  // namespace impbake
