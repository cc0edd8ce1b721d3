#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "impbake/core_math.h"

namespace impbake {

enum class Model : std::uint8_t { SingleBounce = 0, MultiBounce = 1 };
enum class Kind : std::uint8_t { Conductor = 0, Dielectric = 1 };

const char* to_string(Model m);
const char* to_string(Kind k);

inline constexpr double kAlphaMin = 0.01;
inline constexpr double kAlphaMax = 1.0;
inline constexpr double kEtaMin = 1.1;
inline constexpr double kEtaMax = 2.5;

/// Parameters of an anisotropic GGX microfacet BSDF.
struct BsdfParams {
  Rgb r0{1.0, 1.0, 1.0};  ///< normal-incidence reflectance (conductors)
  double alpha_x = 0.5;
  double alpha_y = 0.5;
  double eta = 1.5;       ///< interior / exterior IOR (dielectrics)
  Model model = Model::SingleBounce;
  Kind kind = Kind::Conductor;

  /// Outgoing-direction domain of a slice: hemisphere for conductors,
  /// sphere (reflection + refraction) for dielectrics.
  Domain domain() const { return kind == Kind::Dielectric ? Domain::Sphere : Domain::Hemisphere; }

  /// Copy with roughness clamped into [kAlphaMin, kAlphaMax].
  BsdfParams clamped() const;

  /// Throws ContractError naming the first violated bound (R0 outside
  /// [0,1], non-positive roughness, dielectric eta outside [1.1, 2.5]).
  void validate() const;

  std::string describe() const;
  bool operator==(const BsdfParams&) const = default;
};

/// One drawn outgoing direction. `pdf` is per steradian; it is empty for
/// samplers without a closed-form density (the random walk).
struct BsdfSample {
  Direction wo;
  Rgb weight;
  std::optional<double> pdf;

  bool absorbed() const { return weight.is_black(); }
};

/// Counters filled by the stochastic multiple-scattering routines.
struct WalkStats {
  std::uint64_t walks = 0;
  std::uint64_t truncated = 0;
  std::uint64_t bounces = 0;
};

inline constexpr int kDefaultWalkCap = 16;

// ---------------------------------------------------------------------------
// GGX building blocks. Directions are in the local frame (normal = +z).

namespace ggx {

/// Anisotropic GGX normal distribution D(wh); zero for wh.z <= 0.
double ndf(double alpha_x, double alpha_y, const Direction& wh);

/// Smith Lambda. For w.z < 0 this returns -1 - Lambda(-w), matching the
/// microsurface's view from below.
double lambda(double alpha_x, double alpha_y, const Direction& w);

/// Smith masking G1 for an upper-hemisphere direction (0 below the horizon).
double g1(double alpha_x, double alpha_y, const Direction& w);

/// Height-correlated shadowing-masking for reflection.
double g2_reflection(double alpha_x, double alpha_y, const Direction& wi, const Direction& wo);

/// Height-correlated shadowing-masking for transmission, B(1+Li, 1+Lo).
double g2_transmission(double alpha_x, double alpha_y, const Direction& wi, const Direction& wo);

/// Projected area of the microsurface seen from w, (1 + Lambda(w)) w.z.
/// Valid for directions in both hemispheres.
double projected_area(double alpha_x, double alpha_y, const Direction& w);

/// Distribution of normals visible from w: <w, wh>+ D(wh) / projected_area(w).
double visible_ndf(double alpha_x, double alpha_y, const Direction& w, const Direction& wh);

/// Draw wh proportional to D(wh) wh.z (slope-space stretch of the
/// isotropic unit-roughness distribution).
Direction sample_ndf(double alpha_x, double alpha_y, SquareCoord u);

/// Draw wh from visible_ndf(w, .) by the spherical-cap construction; works
/// for w in either hemisphere.
Direction sample_visible_normal(double alpha_x, double alpha_y, const Direction& w, SquareCoord u);

}  // namespace ggx

/// Schlick approximation from the normal-incidence color.
Rgb fresnel_schlick(const Rgb& r0, double cos_theta);

/// Unpolarized dielectric Fresnel reflectance for a ray arriving with
/// cos_theta_i (> 0) at an interface with relative index eta = n_t / n_i.
/// Returns 1 under total internal reflection.
double fresnel_dielectric(double cos_theta_i, double eta);

/// Refract `wi` (pointing away from the surface) through the microfacet
/// normal `wh`. Returns nothing under total internal reflection.
std::optional<Direction> refract(const Direction& wi, const Direction& wh, double eta);

// ---------------------------------------------------------------------------
// Single-scattering model

/// f_s(wi, wo) |wo.z| for the single-bounce model. Requires wi.z > 0.
/// Conductors return black below the horizon; dielectrics cover both
/// hemispheres. Grazing wi (wi.z < 1e-6) returns black and sets *degenerate.
Rgb eval_single(const BsdfParams& params, const Direction& wi, const Direction& wo,
                bool* degenerate = nullptr);

/// Draw wo by sampling D(wh) wh.z and reflecting (conductors) or choosing
/// reflection / refraction by Fresnel (dielectrics).
BsdfSample sample_ndf(const BsdfParams& params, const Direction& wi, Rng& rng);

/// As sample_ndf but wh is drawn from the visible-normal distribution of wi.
BsdfSample sample_vndf(const BsdfParams& params, const Direction& wi, Rng& rng);

/// Solid-angle densities of the two samplers above.
double pdf_ndf(const BsdfParams& params, const Direction& wi, const Direction& wo);
double pdf_vndf(const BsdfParams& params, const Direction& wi, const Direction& wo);

// ---------------------------------------------------------------------------
// Multiple-scattering model (volumetric Smith microsurface random walk,
// uniform height distribution)

/// Unbiased estimate of f_s(wi, wo) |wo.z| including all scattering orders,
/// averaged over `n_walks` independent walks.
Rgb eval_multi(const BsdfParams& params, const Direction& wi, const Direction& wo, Rng& rng,
               int n_walks = 1, int walk_cap = kDefaultWalkCap, WalkStats* stats = nullptr);

/// Trace one walk and return its exit direction. The weight is the walk
/// throughput; the pdf is unknown. Truncated walks are absorbed.
BsdfSample sample_multi(const BsdfParams& params, const Direction& wi, Rng& rng,
                        int walk_cap = kDefaultWalkCap, WalkStats* stats = nullptr);

/// Dispatch on params.model. `n_walks` only applies to the multi-bounce model.
Rgb eval_bsdf(const BsdfParams& params, const Direction& wi, const Direction& wo, Rng& rng,
              int n_walks = 1);

}  // namespace impbake
