#include "impbake/bsdf.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "impbake/error.h"

namespace impbake {

const char* to_string(Model m) { return m == Model::SingleBounce ? "single" : "multi"; }
const char* to_string(Kind k) { return k == Kind::Conductor ? "conductor" : "dielectric"; }

BsdfParams BsdfParams::clamped() const {
  BsdfParams p = *this;
  p.alpha_x = std::clamp(alpha_x, kAlphaMin, kAlphaMax);
  p.alpha_y = std::clamp(alpha_y, kAlphaMin, kAlphaMax);
  return p;
}

void BsdfParams::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(r0.r) || !in01(r0.g) || !in01(r0.b))
    throw ContractError("BsdfParams: R0 must lie in [0,1]^3, got " + describe());
  if (!(alpha_x > 0.0) || !(alpha_y > 0.0))
    throw ContractError("BsdfParams: roughness must be positive, got " + describe());
  if (kind == Kind::Dielectric && !(eta >= kEtaMin && eta <= kEtaMax))
    throw ContractError("BsdfParams: dielectric eta must lie in [1.1, 2.5], got " + describe());
}

std::string BsdfParams::describe() const {
  std::ostringstream os;
  os << to_string(kind) << '/' << to_string(model) << " R0=(" << r0.r << ',' << r0.g << ',' << r0.b
     << ") alpha=(" << alpha_x << ',' << alpha_y << ')';
  if (kind == Kind::Dielectric) os << " eta=" << eta;
  return os.str();
}

// ---------------------------------------------------------------------------

namespace ggx {

double ndf(double ax, double ay, const Direction& wh) {
  if (wh.z <= 0) return 0.0;
  const double e = wh.x * wh.x / (ax * ax) + wh.y * wh.y / (ay * ay) + wh.z * wh.z;
  return 1.0 / (kPi * ax * ay * e * e);
}

double lambda(double ax, double ay, const Direction& w) {
  const double a2 = (ax * ax * w.x * w.x + ay * ay * w.y * w.y) / (w.z * w.z);
  const double s = std::sqrt(1.0 + a2);
  return w.z > 0 ? 0.5 * (s - 1.0) : 0.5 * (-s - 1.0);
}

double g1(double ax, double ay, const Direction& w) {
  if (w.z <= 0) return 0.0;
  return 1.0 / (1.0 + lambda(ax, ay, w));
}

double g2_reflection(double ax, double ay, const Direction& wi, const Direction& wo) {
  if (wi.z <= 0 || wo.z <= 0) return 0.0;
  return 1.0 / (1.0 + lambda(ax, ay, wi) + lambda(ax, ay, wo));
}

double g2_transmission(double ax, double ay, const Direction& wi, const Direction& wo) {
  if (wi.z <= 0 || wo.z >= 0) return 0.0;
  const double li = lambda(ax, ay, wi);
  const double lo = lambda(ax, ay, -wo);
  if (!std::isfinite(li) || !std::isfinite(lo)) return 0.0;
  return std::beta(1.0 + li, 1.0 + lo);
}

double projected_area(double ax, double ay, const Direction& w) {
  return 0.5 * (w.z + std::sqrt(w.z * w.z + ax * ax * w.x * w.x + ay * ay * w.y * w.y));
}

double visible_ndf(double ax, double ay, const Direction& w, const Direction& wh) {
  const double cos = dot(w, wh);
  if (cos <= 0) return 0.0;
  const double area = projected_area(ax, ay, w);
  if (!(area > 0)) return 0.0;
  return cos * ndf(ax, ay, wh) / area;
}

Direction sample_ndf(double ax, double ay, SquareCoord u) {
  const double u1 = std::min(u.s, 1.0 - 1e-12);
  const double r = std::sqrt(u1 / (1.0 - u1));
  const double phi = kTwoPi * u.t;
  const double sx = ax * r * std::cos(phi);
  const double sy = ay * r * std::sin(phi);
  return normalize(Vec3{-sx, -sy, 1.0});
}

Direction sample_visible_normal(double ax, double ay, const Direction& w, SquareCoord u) {
  // Dupuy & Benyoub 2023: visible normals of the unit-roughness
  // hemisphere configuration are a spherical cap shifted by the view.
  const Vec3 wi_std = normalize(Vec3{ax * w.x, ay * w.y, w.z});
  const double phi = kTwoPi * u.s;
  const double z = (1.0 - u.t) * (1.0 + wi_std.z) - wi_std.z;
  const double sin_theta = std::sqrt(std::clamp(1.0 - z * z, 0.0, 1.0));
  const Vec3 c{sin_theta * std::cos(phi), sin_theta * std::sin(phi), z};
  const Vec3 h = c + wi_std;
  const Vec3 wm{ax * h.x, ay * h.y, std::max(h.z, 0.0)};
  const double len = length(wm);
  if (!(len > 0)) return {0.0, 0.0, 1.0};
  return wm / len;
}

}  // namespace ggx

Rgb fresnel_schlick(const Rgb& r0, double cos_theta) {
  const double c = std::clamp(1.0 - cos_theta, 0.0, 1.0);
  const double c2 = c * c;
  const double k = c2 * c2 * c;
  return r0 + (Rgb(1.0) - r0) * k;
}

double fresnel_dielectric(double cos_theta_i, double eta) {
  cos_theta_i = std::clamp(cos_theta_i, 0.0, 1.0);
  const double sin2_t = (1.0 - cos_theta_i * cos_theta_i) / (eta * eta);
  if (sin2_t >= 1.0) return 1.0;
  const double cos_t = std::sqrt(1.0 - sin2_t);
  const double rs = (cos_theta_i - eta * cos_t) / (cos_theta_i + eta * cos_t);
  const double rp = (eta * cos_theta_i - cos_t) / (eta * cos_theta_i + cos_t);
  return 0.5 * (rs * rs + rp * rp);
}

std::optional<Direction> refract(const Direction& wi, const Direction& wh, double eta) {
  const double cos_i = dot(wi, wh);
  const double sin2_t = (1.0 - cos_i * cos_i) / (eta * eta);
  if (sin2_t >= 1.0) return std::nullopt;
  const double cos_t = std::sqrt(1.0 - sin2_t);
  return normalize(-wi / eta + (cos_i / eta - cos_t) * wh);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kGrazing = 1e-6;

// Half vector of a refraction pair, oriented towards +z.
Direction transmission_half_vector(const Direction& wi, const Direction& wo, double eta) {
  Vec3 wh = wi + wo * eta;
  const double len = length(wh);
  if (!(len > 0)) return {0, 0, 0};
  wh = wh / len;
  return wh.z < 0 ? -wh : wh;
}

// d(omega_h)/d(omega_o) for refraction.
double refraction_jacobian(const Direction& wi, const Direction& wo, const Direction& wh, double eta) {
  const double denom = dot(wi, wh) + eta * dot(wo, wh);
  return eta * eta * std::abs(dot(wo, wh)) / (denom * denom);
}

// Normal density used by a sampler, evaluated for wi.
enum class NormalSampler { Ndf, Vndf };

double normal_pdf(NormalSampler which, const BsdfParams& p, const Direction& wi, const Direction& wh) {
  if (which == NormalSampler::Ndf) return ggx::ndf(p.alpha_x, p.alpha_y, wh) * wh.z;
  return ggx::visible_ndf(p.alpha_x, p.alpha_y, wi, wh);
}

double pdf_microfacet(NormalSampler which, const BsdfParams& params, const Direction& wi,
                      const Direction& wo) {
  const BsdfParams p = params.clamped();
  if (wi.z < kGrazing) return 0.0;
  if (wo.z > 0) {
    Vec3 wh = wi + wo;
    const double len = length(wh);
    if (!(len > 0)) return 0.0;
    wh = wh / len;
    const double cos = dot(wi, wh);
    if (cos <= 0) return 0.0;
    double pdf = normal_pdf(which, p, wi, wh) / (4.0 * cos);
    if (p.kind == Kind::Dielectric) pdf *= fresnel_dielectric(cos, p.eta);
    return pdf;
  }
  if (p.kind == Kind::Conductor || wo.z == 0) return 0.0;
  const Direction wh = transmission_half_vector(wi, wo, p.eta);
  const double cos_i = dot(wi, wh);
  if (cos_i <= 0 || dot(wo, wh) >= 0) return 0.0;
  const double f = fresnel_dielectric(cos_i, p.eta);
  return normal_pdf(which, p, wi, wh) * (1.0 - f) * refraction_jacobian(wi, wo, wh, p.eta);
}

BsdfSample sample_microfacet(NormalSampler which, const BsdfParams& params, const Direction& wi,
                             Rng& rng) {
  const BsdfParams p = params.clamped();
  BsdfSample out{{0, 0, 1}, Rgb(0.0), 0.0};
  if (wi.z < kGrazing) return out;
  const SquareCoord u = rng.uniform2();
  const Direction wh = which == NormalSampler::Ndf ? ggx::sample_ndf(p.alpha_x, p.alpha_y, u)
                                                   : ggx::sample_visible_normal(p.alpha_x, p.alpha_y, wi, u);
  const double cos = dot(wi, wh);
  const double pdf_h = normal_pdf(which, p, wi, wh);
  if (cos <= 0 || !(pdf_h > 0)) {
    out.wo = reflect(wi, wh);
    return out;
  }
  bool reflected = true;
  if (p.kind == Kind::Conductor) {
    out.wo = reflect(wi, wh);
    out.pdf = pdf_h / (4.0 * cos);
  } else {
    const double f = fresnel_dielectric(cos, p.eta);
    const auto wt = refract(wi, wh, p.eta);
    if (!wt || rng.uniform() < f) {
      out.wo = reflect(wi, wh);
      out.pdf = pdf_h * (wt ? f : 1.0) / (4.0 * cos);
    } else {
      out.wo = *wt;
      out.pdf = pdf_h * (1.0 - f) * refraction_jacobian(wi, out.wo, wh, p.eta);
      reflected = false;
    }
  }
  // Samples that leave on the wrong side of the macrosurface are absorbed.
  if (reflected ? out.wo.z <= 0 : out.wo.z >= 0) return out;
  if (!(*out.pdf > 0)) {
    out.pdf = std::nullopt;
    return out;
  }
  const Rgb f = eval_single(p, wi, out.wo);
  out.weight = f / *out.pdf;
  return out;
}

// ---------------------------------------------------------------------------
// Microsurface random walk with a uniform height distribution on [-1, 1].

constexpr double kExit = std::numeric_limits<double>::infinity();

double height_cdf(double h) { return std::clamp(0.5 * (h + 1.0), 0.0, 1.0); }
double height_inv_cdf(double u) { return std::clamp(2.0 * u - 1.0, -1.0, 1.0); }

class Microsurface {
 public:
  explicit Microsurface(const BsdfParams& p) : ax_(p.alpha_x), ay_(p.alpha_y) {}

  // Probability that a ray leaving height h in direction w escapes.
  double g1(const Direction& w, double h) const {
    if (w.z > 0.9999) return 1.0;
    if (w.z <= 0.0) return 0.0;
    return std::pow(height_cdf(h), ggx::lambda(ax_, ay_, w));
  }

  // Height of the next intersection for a ray travelling along w from
  // height h, or kExit.
  double sample_height(const Direction& w, double h, double u) const {
    if (w.z > 0.9999) return kExit;
    if (w.z < -0.9999) return height_inv_cdf(u * height_cdf(h));
    if (std::abs(w.z) < 1e-4) return h;
    if (u > 1.0 - g1(w, h)) return kExit;
    return height_inv_cdf(height_cdf(h) / std::pow(1.0 - u, 1.0 / ggx::lambda(ax_, ay_, w)));
  }

  double visible_ndf(const Direction& w, const Direction& wm) const {
    return ggx::visible_ndf(ax_, ay_, w, wm);
  }

  Direction sample_visible_normal(const Direction& w, Rng& rng) const {
    return ggx::sample_visible_normal(ax_, ay_, w, rng.uniform2());
  }

 private:
  double ax_, ay_;
};

constexpr double kStartHeight = 1.0 + 0.998;  // above the microsurface

class ConductorWalk {
 public:
  explicit ConductorWalk(const BsdfParams& p) : surface_(p), r0_(p.r0) {}

  // Phase function times Fresnel; `wi` points away from the last event.
  Rgb phase(const Direction& wi, const Direction& wo) const {
    Vec3 wh = wi + wo;
    const double len = length(wh);
    if (!(len > 0)) return Rgb(0.0);
    wh = wh / len;
    if (wh.z < 0) return Rgb(0.0);
    const double cos = dot(wi, wh);
    if (cos <= 0) return Rgb(0.0);
    return fresnel_schlick(r0_, cos) * (0.25 * surface_.visible_ndf(wi, wh) / cos);
  }

  // Returns the estimate; `exit_dir`, `throughput` describe the walk exit.
  template <bool kEval>
  Rgb walk(const Direction& wi, const Direction& wo, Rng& rng, int cap, WalkStats* stats,
           Direction* exit_dir, Rgb* exit_weight) const {
    Direction wr = -wi;
    double hr = kStartHeight;
    Rgb throughput(1.0);
    Rgb sum(0.0);
    if (stats) ++stats->walks;
    for (int k = 0;; ++k) {
      hr = surface_.sample_height(wr, hr, rng.uniform());
      if (hr == kExit) break;
      if (k == cap || std::isnan(hr)) {
        if (stats && k == cap) ++stats->truncated;
        throughput = Rgb(0.0);
        break;
      }
      if (stats) ++stats->bounces;
      if constexpr (kEval) {
        const Rgb contrib = throughput * phase(-wr, wo) * surface_.g1(wo, hr);
        if (contrib.is_finite()) sum += contrib;
      }
      const Direction wm = surface_.sample_visible_normal(-wr, rng);
      const double cos = dot(-wr, wm);
      if (!(cos > 0)) {
        throughput = Rgb(0.0);
        break;
      }
      throughput *= fresnel_schlick(r0_, cos);
      wr = reflect(-wr, wm);
      if (std::isnan(wr.z)) {
        throughput = Rgb(0.0);
        break;
      }
    }
    if (exit_dir) *exit_dir = wr;
    if (exit_weight) *exit_weight = throughput;
    return sum;
  }

 private:
  Microsurface surface_;
  Rgb r0_;
};

class DielectricWalk {
 public:
  explicit DielectricWalk(const BsdfParams& p) : surface_(p), eta_(p.eta) {}

  double phase(const Direction& wi, const Direction& wo, bool wi_outside, bool wo_outside) const {
    const double eta = wi_outside ? eta_ : 1.0 / eta_;
    if (wi_outside == wo_outside) {
      Vec3 wh = wi + wo;
      const double len = length(wh);
      if (!(len > 0)) return 0.0;
      wh = wh / len;
      if (wi_outside) {
        const double cos = dot(wi, wh);
        if (cos <= 0) return 0.0;
        return 0.25 * surface_.visible_ndf(wi, wh) / cos * fresnel_dielectric(cos, eta);
      }
      const double cos = dot(-wi, -wh);
      if (cos <= 0) return 0.0;
      return 0.25 * surface_.visible_ndf(-wi, -wh) / cos * fresnel_dielectric(cos, eta);
    }
    Vec3 wh = wi + wo * eta;
    const double len = length(wh);
    if (!(len > 0)) return 0.0;
    wh = -wh / len;
    const double sign = wh.z >= 0 ? 1.0 : -1.0;
    wh = wh * (wi_outside ? sign : -sign);
    if (dot(wh, wi) < 0) return 0.0;
    if (wi_outside) {
      const double denom = dot(wi, wh) + eta * dot(wo, wh);
      return eta * eta * (1.0 - fresnel_dielectric(dot(wi, wh), eta)) * surface_.visible_ndf(wi, wh) *
             std::max(0.0, -dot(wo, wh)) / (denom * denom);
    }
    const double denom = dot(-wi, -wh) + eta * dot(-wo, -wh);
    return eta * eta * (1.0 - fresnel_dielectric(dot(-wi, -wh), eta)) * surface_.visible_ndf(-wi, -wh) *
           std::max(0.0, -dot(-wo, -wh)) / (denom * denom);
  }

  // Sample the next direction; updates `outside` on refraction.
  Direction sample_phase(const Direction& wi, bool& outside, Rng& rng) const {
    const double eta = outside ? eta_ : 1.0 / eta_;
    const Direction wm = outside ? surface_.sample_visible_normal(wi, rng)
                                 : -surface_.sample_visible_normal(-wi, rng);
    const double f = fresnel_dielectric(dot(wi, wm), eta);
    if (rng.uniform() < f) return reflect(wi, wm);
    const auto wt = refract(wi, wm, eta);
    if (!wt) return reflect(wi, wm);
    outside = !outside;
    return *wt;
  }

  template <bool kEval>
  double walk(const Direction& wi, const Direction& wo, Rng& rng, int cap, WalkStats* stats,
              Direction* exit_dir, double* exit_weight) const {
    Direction wr = -wi;
    double hr = kStartHeight;
    bool outside = true;
    double sum = 0.0;
    double weight = 1.0;
    if (stats) ++stats->walks;
    for (int k = 0;; ++k) {
      hr = outside ? surface_.sample_height(wr, hr, rng.uniform())
                   : -surface_.sample_height(-wr, -hr, rng.uniform());
      if (hr == kExit || hr == -kExit) break;
      if (k == cap || std::isnan(hr)) {
        if (stats && k == cap) ++stats->truncated;
        weight = 0.0;
        break;
      }
      if (stats) ++stats->bounces;
      if constexpr (kEval) {
        const double p = phase(-wr, wo, outside, wo.z > 0);
        const double shadow = wo.z > 0 ? surface_.g1(wo, hr) : surface_.g1(-wo, -hr);
        const double contrib = p * shadow;
        if (std::isfinite(contrib)) sum += contrib;
      }
      wr = sample_phase(-wr, outside, rng);
      if (std::isnan(wr.z)) {
        weight = 0.0;
        break;
      }
    }
    if (exit_dir) *exit_dir = wr;
    if (exit_weight) *exit_weight = weight;
    return sum;
  }

 private:
  Microsurface surface_;
  double eta_;
};

}  // namespace

// ---------------------------------------------------------------------------

Rgb eval_single(const BsdfParams& params, const Direction& wi, const Direction& wo, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (wi.z < kGrazing) {
    if (degenerate) *degenerate = true;
    return Rgb(0.0);
  }
  const BsdfParams p = params.clamped();
  if (wo.z > 0) {
    Vec3 wh = wi + wo;
    const double len = length(wh);
    if (!(len > 0)) return Rgb(0.0);
    wh = wh / len;
    const double d = ggx::ndf(p.alpha_x, p.alpha_y, wh);
    const double g = ggx::g2_reflection(p.alpha_x, p.alpha_y, wi, wo);
    const double cos = std::max(0.0, dot(wi, wh));
    const double base = d * g / (4.0 * wi.z);
    if (p.kind == Kind::Conductor) return fresnel_schlick(p.r0, cos) * base;
    return Rgb(fresnel_dielectric(cos, p.eta) * base);
  }
  if (p.kind == Kind::Conductor || wo.z == 0) return Rgb(0.0);
  const Direction wh = transmission_half_vector(wi, wo, p.eta);
  const double cos_i = dot(wi, wh);
  const double cos_o = dot(wo, wh);
  if (cos_i <= 0 || cos_o >= 0) return Rgb(0.0);
  const double denom = cos_i + p.eta * cos_o;
  const double d = ggx::ndf(p.alpha_x, p.alpha_y, wh);
  const double g = ggx::g2_transmission(p.alpha_x, p.alpha_y, wi, wo);
  const double f = fresnel_dielectric(cos_i, p.eta);
  const double value = cos_i * -cos_o * p.eta * p.eta * (1.0 - f) * d * g / (wi.z * denom * denom);
  return Rgb(std::max(0.0, value));
}

BsdfSample sample_ndf(const BsdfParams& params, const Direction& wi, Rng& rng) {
  return sample_microfacet(NormalSampler::Ndf, params, wi, rng);
}

BsdfSample sample_vndf(const BsdfParams& params, const Direction& wi, Rng& rng) {
  return sample_microfacet(NormalSampler::Vndf, params, wi, rng);
}

double pdf_ndf(const BsdfParams& params, const Direction& wi, const Direction& wo) {
  return pdf_microfacet(NormalSampler::Ndf, params, wi, wo);
}

double pdf_vndf(const BsdfParams& params, const Direction& wi, const Direction& wo) {
  return pdf_microfacet(NormalSampler::Vndf, params, wi, wo);
}

Rgb eval_multi(const BsdfParams& params, const Direction& wi, const Direction& wo, Rng& rng, int n_walks,
               int walk_cap, WalkStats* stats) {
  if (n_walks < 1) throw ContractError("eval_multi: n_walks must be >= 1");
  if (wi.z < kGrazing) return Rgb(0.0);
  const BsdfParams p = params.clamped();
  if (p.kind == Kind::Conductor) {
    if (wo.z <= 0) return Rgb(0.0);
    const ConductorWalk walk(p);
    Rgb sum(0.0);
    for (int k = 0; k < n_walks; ++k)
      sum += walk.walk<true>(wi, wo, rng, walk_cap, stats, nullptr, nullptr);
    return sum / n_walks;
  }
  const DielectricWalk walk(p);
  double sum = 0.0;
  for (int k = 0; k < n_walks; ++k) sum += walk.walk<true>(wi, wo, rng, walk_cap, stats, nullptr, nullptr);
  return Rgb(sum / n_walks);
}

BsdfSample sample_multi(const BsdfParams& params, const Direction& wi, Rng& rng, int walk_cap,
                        WalkStats* stats) {
  BsdfSample out{{0, 0, 1}, Rgb(0.0), std::nullopt};
  if (wi.z < kGrazing) return out;
  const BsdfParams p = params.clamped();
  if (p.kind == Kind::Conductor) {
    ConductorWalk(p).walk<false>(wi, wi, rng, walk_cap, stats, &out.wo, &out.weight);
    // A conductor walk can only leave upwards.
    if (out.wo.z <= 0) out.weight = Rgb(0.0);
  } else {
    double w = 0.0;
    DielectricWalk(p).walk<false>(wi, wi, rng, walk_cap, stats, &out.wo, &w);
    out.weight = Rgb(w);
  }
  out.wo = normalize(out.wo);
  return out;
}

Rgb eval_bsdf(const BsdfParams& params, const Direction& wi, const Direction& wo, Rng& rng, int n_walks) {
  if (params.model == Model::SingleBounce) return eval_single(params, wi, wo);
  return eval_multi(params, wi, wo, rng, n_walks);
}

}  // namespace impbake
