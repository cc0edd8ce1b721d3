#include "impbake/renderer.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "impbake/error.h"
#include "impbake/parallel.h"

namespace impbake {

const char* to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::NDF: return "ndf";
    case SamplerKind::VNDF: return "vndf";
    case SamplerKind::RandomWalk: return "random_walk";
    case SamplerKind::BakedMap: return "baked_map";
    case SamplerKind::Neural: return "neural";
  }
  return "?";
}

const char* to_string(Integrator i) {
  switch (i) {
    case Integrator::LightOnly: return "light";
    case Integrator::BsdfOnly: return "bsdf";
    case Integrator::MIS: return "mis";
  }
  return "?";
}

SamplerKind sampler_from_string(const std::string& s) {
  for (SamplerKind k : {SamplerKind::NDF, SamplerKind::VNDF, SamplerKind::RandomWalk, SamplerKind::BakedMap,
                        SamplerKind::Neural})
    if (s == to_string(k)) return k;
  throw ContractError("unknown sampler '" + s + "' (expected ndf, vndf, random_walk, baked_map or neural)");
}

Integrator integrator_from_string(const std::string& s) {
  for (Integrator i : {Integrator::LightOnly, Integrator::BsdfOnly, Integrator::MIS})
    if (s == to_string(i)) return i;
  throw ContractError("unknown integrator '" + s + "' (expected light, bsdf or mis)");
}

const ImportanceMap& BakedSet::nearest(const Direction& wi) const {
  if (maps.empty()) throw ContractError("baked set has no maps");
  std::size_t best = 0;
  double best_dot = -2.0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const double d = dot(maps[k].wi, wi);
    if (d > best_dot) {
      best_dot = d;
      best = k;
    }
  }
  return maps[best];
}

// ---------------------------------------------------------------------------
// Distribution2D

namespace {

void build_cdf(const double* w, int n, double* cdf) {
  cdf[0] = 0.0;
  for (int i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + w[i];
}

// Continuous inverse of a piecewise-linear CDF; returns the cell index and
// the position inside it.
int invert_cdf(const double* cdf, int n, double u, double* frac) {
  const double target = u * cdf[n];
  int i = static_cast<int>(std::upper_bound(cdf, cdf + n + 1, target) - cdf) - 1;
  i = std::clamp(i, 0, n - 1);
  while (i > 0 && cdf[i + 1] == cdf[i] && cdf[i] >= target) --i;
  while (i < n - 1 && cdf[i + 1] <= cdf[i]) ++i;
  const double width = cdf[i + 1] - cdf[i];
  *frac = width > 0 ? std::clamp((target - cdf[i]) / width, 0.0, std::nextafter(1.0, 0.0)) : 0.5;
  return i;
}

}  // namespace

Distribution2D::Distribution2D(std::vector<double> weights, int width, int height)
    : width_(width), height_(height), weights_(std::move(weights)) {
  if (width <= 0 || height <= 0 || weights_.size() != static_cast<std::size_t>(width) * height)
    throw ContractError("Distribution2D: size mismatch");
  for (double w : weights_)
    if (!(w >= 0) || !std::isfinite(w)) throw ContractError("Distribution2D: weights must be finite and >= 0");
  conditional_.resize(static_cast<std::size_t>(height) * (width + 1));
  std::vector<double> rows(height);
  for (int j = 0; j < height; ++j) {
    build_cdf(weights_.data() + static_cast<std::size_t>(j) * width, width, conditional_.data() + j * (width + 1));
    rows[j] = conditional_[j * (width + 1) + width];
  }
  marginal_.resize(height + 1);
  build_cdf(rows.data(), height, marginal_.data());
  total_ = marginal_[height];
  if (!(total_ > 0)) throw ContractError("Distribution2D: all weights are zero");
}

SquareCoord Distribution2D::sample(SquareCoord xi, double* pdf) const {
  double fy = 0, fx = 0;
  const int j = invert_cdf(marginal_.data(), height_, xi.t, &fy);
  const int i = invert_cdf(conditional_.data() + j * (width_ + 1), width_, xi.s, &fx);
  if (pdf) *pdf = weights_[static_cast<std::size_t>(j) * width_ + i] / total_ * width_ * height_;
  return {(i + fx) / width_, (j + fy) / height_};
}

double Distribution2D::pdf(SquareCoord c) const {
  const int i = std::clamp(static_cast<int>(c.s * width_), 0, width_ - 1);
  const int j = std::clamp(static_cast<int>(c.t * height_), 0, height_ - 1);
  return weights_[static_cast<std::size_t>(j) * width_ + i] / total_ * width_ * height_;
}

// ---------------------------------------------------------------------------
// Environment

EnvironmentLight EnvironmentLight::constant(const Rgb& radiance) {
  EnvironmentLight e;
  e.constant_ = radiance;
  return e;
}

EnvironmentLight EnvironmentLight::from_image(Image image, double scale) {
  if (image.width <= 0 || image.height <= 0) throw ContractError("environment image is empty");
  EnvironmentLight e;
  e.scale_ = scale;
  std::vector<double> w(image.pixels.size());
  for (int y = 0; y < image.height; ++y) {
    const double sin_theta = std::sin(kPi * (y + 0.5) / image.height);
    for (int x = 0; x < image.width; ++x) {
      const Rgb& c = image.at(x, y);
      if (!c.is_finite() || c.r < 0 || c.g < 0 || c.b < 0)
        throw ContractError("environment image has negative or non-finite pixels");
      w[static_cast<std::size_t>(y) * image.width + x] = std::max(c.luminance(), 0.0) * sin_theta;
    }
  }
  e.distribution_ = Distribution2D(std::move(w), image.width, image.height);
  e.image_ = std::move(image);
  return e;
}

namespace {

SquareCoord direction_to_equirect(const Vec3& d) {
  const double theta = std::acos(std::clamp(d.z, -1.0, 1.0));
  double phi = std::atan2(d.y, d.x);
  if (phi < 0) phi += kTwoPi;
  return {phi / kTwoPi, theta / kPi};
}

Vec3 equirect_to_direction(SquareCoord c) {
  const double theta = c.t * kPi, phi = c.s * kTwoPi;
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

}  // namespace

Rgb EnvironmentLight::radiance(const Vec3& dir) const {
  if (is_constant()) return constant_;
  const SquareCoord c = direction_to_equirect(dir);
  const int x = std::clamp(static_cast<int>(c.s * image_.width), 0, image_.width - 1);
  const int y = std::clamp(static_cast<int>(c.t * image_.height), 0, image_.height - 1);
  return image_.at(x, y) * scale_;
}

Rgb EnvironmentLight::sample(SquareCoord xi, Vec3* dir, double* pdf) const {
  if (is_constant()) {
    const double z = 1.0 - 2.0 * xi.s;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = kTwoPi * xi.t;
    *dir = {r * std::cos(phi), r * std::sin(phi), z};
    *pdf = 1.0 / kFourPi;
    return constant_;
  }
  double p_uv = 0.0;
  const SquareCoord c = distribution_.sample(xi, &p_uv);
  *dir = equirect_to_direction(c);
  const double sin_theta = std::sin(c.t * kPi);
  *pdf = sin_theta > 0 ? p_uv / (2.0 * kPi * kPi * sin_theta) : 0.0;
  return radiance(*dir);
}

double EnvironmentLight::pdf(const Vec3& dir) const {
  if (is_constant()) return 1.0 / kFourPi;
  const SquareCoord c = direction_to_equirect(dir);
  const double sin_theta = std::sin(c.t * kPi);
  return sin_theta > 0 ? distribution_.pdf(c) / (2.0 * kPi * kPi * sin_theta) : 0.0;
}

Rgb EnvironmentLight::max_radiance() const {
  if (is_constant()) return constant_;
  Rgb m;
  for (const Rgb& c : image_.pixels) m = Rgb(std::max(m.r, c.r), std::max(m.g, c.g), std::max(m.b, c.b));
  return m * scale_;
}

Image ProceduralSky::render() const {
  Image img(width, height);
  const Vec3 sun = normalize(sun_direction);
  const double cos_sun = std::cos(sun_radius_deg * kPi / 180.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Vec3 d = equirect_to_direction({(x + 0.5) / width, (y + 0.5) / height});
      Rgb c;
      if (d.z >= 0) {
        const double t = std::pow(d.z, 0.5);
        c = horizon * (1 - t) + zenith * t;
      } else {
        c = ground;
      }
      if (dot(d, sun) >= cos_sun) c = sun_radiance;
      img.at(x, y) = c;
    }
  return img;
}

// ---------------------------------------------------------------------------
// Scene

void Scene::add_quad(const Vec3& corner, const Vec3& u, const Vec3& v, int material, const Vec3& tangent) {
  triangles.push_back({corner, corner + u, corner + u + v, tangent, material});
  triangles.push_back({corner, corner + u + v, corner + v, tangent, material});
}

void Scene::validate() const {
  if (light_count() == 0) throw ContractError("scene has no lights");
  if (camera.width <= 0 || camera.height <= 0) throw ContractError("camera resolution must be positive");
  if (max_depth < 1) throw ContractError("max_depth must be at least 1");
  for (const Material& m : materials) {
    m.params.validate();
    if (m.sampler == SamplerKind::BakedMap) {
      if (!m.baked || m.baked->maps.empty())
        throw ContractError("material '" + m.name + "' uses baked_map but has no baked maps");
      for (const ImportanceMap& map : m.baked->maps) {
        if (map.density.empty())
          throw ContractError("material '" + m.name + "': baked map without density (attach the slice)");
        if (map.domain != m.params.domain())
          throw ContractError("material '" + m.name + "': baked map domain does not match the material");
      }
    }
    if (m.sampler == SamplerKind::Neural) {
      if (!m.neural) throw ContractError("material '" + m.name + "' uses neural but has no networks");
      for (const MlpWeights* w : {&m.neural->sample, &m.neural->eval, &m.neural->pdf})
        if (w->material != m.params.kind)
          throw ContractError("material '" + m.name + "': networks were trained for another material kind");
    }
  }
  const int n_mat = static_cast<int>(materials.size());
  for (const Sphere& s : spheres)
    if (s.material < 0 || s.material >= n_mat || !(s.radius > 0)) throw ContractError("invalid sphere");
  for (const Triangle& t : triangles)
    if (t.material < 0 || t.material >= n_mat) throw ContractError("triangle references a missing material");
}

// ---------------------------------------------------------------------------
// Rendering

double power_heuristic(double a, double b) {
  const double a2 = a * a, b2 = b * b;
  return a2 + b2 > 0 ? a2 / (a2 + b2) : 0.0;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRayEps = 1e-6;

struct Hit {
  double t = kInf;
  Vec3 point, normal, tangent;
  int material = -1;
  int light = -1;
};

bool intersect_sphere(const Sphere& s, const Ray& r, double t_max, Hit* hit) {
  const Vec3 oc = r.origin - s.center;
  const double b = dot(oc, r.dir);
  const double c = dot(oc, oc) - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= kRayEps * std::max(1.0, s.radius)) t = -b + sq;
  if (t <= kRayEps * std::max(1.0, s.radius) || t >= t_max) return false;
  hit->t = t;
  hit->point = r.origin + r.dir * t;
  hit->normal = (hit->point - s.center) / s.radius;
  Vec3 tangent = cross(Vec3{0, 0, 1}, hit->normal);
  if (length(tangent) < 1e-8) tangent = {1, 0, 0};
  hit->tangent = tangent;
  hit->material = s.material;
  hit->light = -1;
  return true;
}

bool intersect_triangle(const Triangle& tri, const Ray& r, double t_max, Hit* hit) {
  const Vec3 e1 = tri.p1 - tri.p0, e2 = tri.p2 - tri.p0;
  const Vec3 p = cross(r.dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3 s = r.origin - tri.p0;
  const double u = dot(s, p) * inv;
  if (u < 0 || u > 1) return false;
  const Vec3 q = cross(s, e1);
  const double v = dot(r.dir, q) * inv;
  if (v < 0 || u + v > 1) return false;
  const double t = dot(e2, q) * inv;
  if (t <= kRayEps || t >= t_max) return false;
  hit->t = t;
  hit->point = r.origin + r.dir * t;
  hit->normal = normalize(cross(e1, e2));
  hit->tangent = tri.tangent;
  hit->material = tri.material;
  hit->light = -1;
  return true;
}

bool intersect_rect(const RectLight& l, int index, const Ray& r, double t_max, Hit* hit) {
  const Vec3 n = cross(l.u, l.v);
  const double denom = dot(n, r.dir);
  if (std::abs(denom) < 1e-14) return false;
  const double t = dot(l.corner - r.origin, n) / denom;
  if (t <= kRayEps || t >= t_max) return false;
  const Vec3 p = r.origin + r.dir * t - l.corner;
  const double uu = dot(l.u, l.u), vv = dot(l.v, l.v), uv = dot(l.u, l.v);
  const double pu = dot(p, l.u), pv = dot(p, l.v);
  const double det = uu * vv - uv * uv;
  const double s = (pu * vv - pv * uv) / det, q = (pv * uu - pu * uv) / det;
  if (s < 0 || s > 1 || q < 0 || q > 1) return false;
  hit->t = t;
  hit->point = r.origin + r.dir * t;
  hit->normal = normalize(n);
  hit->material = -1;
  hit->light = index;
  return true;
}

bool intersect(const Scene& scene, const Ray& r, Hit* hit, double t_max = kInf) {
  bool found = false;
  Hit h;
  for (const Sphere& s : scene.spheres)
    if (intersect_sphere(s, r, t_max, &h)) {
      *hit = h;
      t_max = h.t;
      found = true;
    }
  for (const Triangle& t : scene.triangles)
    if (intersect_triangle(t, r, t_max, &h)) {
      *hit = h;
      t_max = h.t;
      found = true;
    }
  for (std::size_t i = 0; i < scene.rect_lights.size(); ++i)
    if (intersect_rect(scene.rect_lights[i], static_cast<int>(i), r, t_max, &h)) {
      *hit = h;
      t_max = h.t;
      found = true;
    }
  return found;
}

bool occluded(const Scene& scene, const Vec3& origin, const Vec3& dir, double dist) {
  Hit h;
  return intersect(scene, {origin, dir}, &h, dist * (1.0 - 1e-7));
}

Vec3 offset_origin(const Vec3& p, const Vec3& n, const Vec3& dir) {
  const double scale = std::max({1.0, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
  return p + n * ((dot(dir, n) > 0 ? 1.0 : -1.0) * 1e-7 * scale);
}

// Emitted radiance arriving along `dir` from `hit` (or from the environment
// when nothing was hit), and the light-sampling pdf of that direction.
Rgb emitted(const Scene& scene, const Vec3& from, const Vec3& dir, bool did_hit, const Hit& hit, double* light_pdf) {
  const double select = 1.0 / scene.light_count();
  if (!did_hit) {
    if (!scene.environment) return {};
    *light_pdf = scene.environment->pdf(dir) * select;
    return scene.environment->radiance(dir);
  }
  if (hit.light < 0) return {};
  const RectLight& l = scene.rect_lights[hit.light];
  const double cos_l = -dot(dir, hit.normal);
  if (cos_l <= 0) return {};
  const double area = length(cross(l.u, l.v));
  const Vec3 d = hit.point - from;
  *light_pdf = dot(d, d) / (cos_l * area) * select;
  return l.radiance;
}

struct LightSample {
  Vec3 dir;
  double dist = kInf;
  Rgb radiance;
  double pdf = 0.0;
};

LightSample sample_light(const Scene& scene, const Vec3& p, Rng& rng) {
  const int n = scene.light_count();
  const int pick = std::min(n - 1, static_cast<int>(rng.uniform() * n));
  const SquareCoord xi = rng.uniform2();
  LightSample ls;
  if (pick < static_cast<int>(scene.rect_lights.size())) {
    const RectLight& l = scene.rect_lights[pick];
    const Vec3 q = l.corner + l.u * xi.s + l.v * xi.t;
    const Vec3 d = q - p;
    const double dist2 = dot(d, d);
    ls.dist = std::sqrt(dist2);
    ls.dir = d / ls.dist;
    const Vec3 n_l = cross(l.u, l.v);
    const double area = length(n_l);
    const double cos_l = -dot(ls.dir, n_l) / area;
    if (cos_l <= 0) return ls;
    ls.pdf = dist2 / (cos_l * area) / n;
    ls.radiance = l.radiance;
  } else {
    ls.radiance = scene.environment->sample(xi, &ls.dir, &ls.pdf);
    ls.pdf /= n;
  }
  return ls;
}

// The BSDF at one shading point, seen from the side wi arrives on.
struct Shading {
  const Material* material = nullptr;
  BsdfParams params;
  SamplerKind sampler = SamplerKind::VNDF;
  Frame frame;
  Direction wi;
  bool inside = false;  // dielectric hit from the interior
};

Shading make_shading(const Scene& scene, const Hit& hit, const Vec3& ray_dir) {
  Shading s;
  s.material = &scene.materials[hit.material];
  s.params = s.material->params;
  s.sampler = s.material->sampler;
  Vec3 n = hit.normal;
  if (dot(n, ray_dir) > 0) {
    n = -n;
    if (s.params.kind == Kind::Dielectric) {
      s.inside = true;
      s.params.eta = 1.0 / s.params.eta;
      // The baked maps and networks only cover incidence from outside.
      if (s.sampler == SamplerKind::BakedMap || s.sampler == SamplerKind::Neural) s.sampler = SamplerKind::VNDF;
    }
  }
  s.frame = Frame::from_normal_tangent(n, hit.tangent);
  s.wi = s.frame.to_local(-ray_dir);
  s.wi.z = std::max(s.wi.z, 0.0);
  s.wi = normalize(s.wi);
  return s;
}

Rgb eval_at(const Shading& s, const Direction& wo, Rng& rng) {
  if (s.sampler == SamplerKind::Neural) return neural_eval(s.material->neural->eval, s.params, s.wi, wo);
  return eval_bsdf(s.params, s.wi, wo, rng, 1);
}

std::optional<double> pdf_at(const Shading& s, const Direction& wo) {
  switch (s.sampler) {
    case SamplerKind::NDF: return pdf_ndf(s.params, s.wi, wo);
    case SamplerKind::VNDF: return pdf_vndf(s.params, s.wi, wo);
    case SamplerKind::RandomWalk: return std::nullopt;
    case SamplerKind::BakedMap: {
      const ImportanceMap& map = s.material->baked->nearest(s.wi);
      if (map.domain == Domain::Hemisphere && wo.z <= 0) return 0.0;
      return map_pdf(map, direction_to_square(normalize(wo), map.domain));
    }
    case SamplerKind::Neural: return neural_pdf(s.material->neural->pdf, s.params, s.wi, wo);
  }
  return std::nullopt;
}

BsdfSample sample_at(const Shading& s, Rng& rng, bool need_pdf) {
  switch (s.sampler) {
    case SamplerKind::NDF:
    case SamplerKind::VNDF: {
      BsdfSample b = s.sampler == SamplerKind::NDF ? sample_ndf(s.params, s.wi, rng) : sample_vndf(s.params, s.wi, rng);
      // The closed-form samplers weight by the single-scattering lobe.
      if (s.params.model == Model::MultiBounce && !b.absorbed() && b.pdf && *b.pdf > 0)
        b.weight = eval_multi(s.params, s.wi, b.wo, rng) / *b.pdf;
      return b;
    }
    case SamplerKind::RandomWalk: return sample_multi(s.params, s.wi, rng);
    case SamplerKind::BakedMap: {
      const ImportanceMap& map = s.material->baked->nearest(s.wi);
      const MapQuery q = query(map, rng.uniform2());
      BsdfSample b;
      b.wo = square_to_direction(q.uv, map.domain);
      b.weight = q.sw;
      if (need_pdf) b.pdf = map_pdf(map, q.uv);
      return b;
    }
    case SamplerKind::Neural: return neural_sample(*s.material->neural, s.params, s.wi, rng.uniform2(), need_pdf);
  }
  return {};
}

Ray camera_ray(const Camera& cam, double px, double py) {
  const Vec3 forward = normalize(cam.look_at - cam.position);
  const Vec3 right = normalize(cross(forward, cam.up));
  const Vec3 up = cross(right, forward);
  const double aspect = static_cast<double>(cam.width) / cam.height;
  const double x = 2.0 * px / cam.width - 1.0;
  const double y = 1.0 - 2.0 * py / cam.height;
  if (cam.type == CameraType::Orthographic) {
    const double h = 0.5 * cam.ortho_height;
    return {cam.position + right * (x * h * aspect) + up * (y * h), forward};
  }
  const double t = std::tan(0.5 * cam.fov_deg * kPi / 180.0);
  return {cam.position, normalize(forward + right * (x * t * aspect) + up * (y * t))};
}

Rgb trace(const Scene& scene, Ray ray, Integrator integrator, Rng& rng) {
  Hit hit;
  bool did_hit = intersect(scene, ray, &hit);
  if (!did_hit) return scene.environment ? scene.environment->radiance(ray.dir) : Rgb();
  if (hit.light >= 0) return dot(ray.dir, hit.normal) < 0 ? scene.rect_lights[hit.light].radiance : Rgb();

  Rgb radiance, beta(1.0);
  const bool use_mis = integrator == Integrator::MIS;
  for (int depth = 0; depth < scene.max_depth; ++depth) {
    const Shading s = make_shading(scene, hit, ray.dir);
    if (s.wi.z <= 0) break;

    if (integrator != Integrator::BsdfOnly) {
      const LightSample ls = sample_light(scene, hit.point, rng);
      if (ls.pdf > 0 && !ls.radiance.is_black()) {
        const Direction wo = s.frame.to_local(ls.dir);
        const Rgb f = eval_at(s, wo, rng);
        if (!f.is_black() && !occluded(scene, offset_origin(hit.point, s.frame.n, ls.dir), ls.dir, ls.dist)) {
          double w = 1.0;
          if (use_mis) w = power_heuristic(ls.pdf, pdf_at(s, wo).value_or(0.0));
          radiance += beta * f * ls.radiance * (w / ls.pdf);
        }
      }
    }

    const bool last = depth + 1 == scene.max_depth;
    if (last && integrator == Integrator::LightOnly) break;
    const BsdfSample b = sample_at(s, rng, use_mis);
    if (b.absorbed()) break;
    const Vec3 dir = normalize(s.frame.to_world(b.wo));
    const Rgb next_beta = beta * b.weight;
    ray = {offset_origin(hit.point, s.frame.n, dir), dir};
    Hit next;
    did_hit = intersect(scene, ray, &next);
    if (integrator != Integrator::LightOnly) {
      double light_pdf = 0.0;
      const Rgb le = emitted(scene, hit.point, dir, did_hit, next, &light_pdf);
      if (!le.is_black()) {
        double w = 1.0;
        if (use_mis) w = power_heuristic(b.pdf.value_or(0.0), light_pdf);
        radiance += next_beta * le * w;
      }
    }
    if (!did_hit || next.light >= 0) break;
    beta = next_beta;
    hit = next;
  }
  return radiance;
}

}  // namespace

RenderOutput render(const Scene& scene, const RenderOptions& options) {
  scene.validate();
  if (options.spp <= 0) throw ContractError("spp must be positive");
  if (options.integrator == Integrator::MIS)
    for (const Material& m : scene.materials)
      if (m.sampler == SamplerKind::RandomWalk)
        throw ContractError("material '" + m.name +
                            "' uses the random_walk sampler, which has no pdf, so MIS weights cannot be formed; "
                            "use --integrator bsdf, or bind the baked_map or neural sampler");

  const auto start = std::chrono::steady_clock::now();
  const Camera& cam = scene.camera;
  RenderOutput out;
  out.image = Image(cam.width, cam.height);
  out.spp = options.spp;
  std::vector<std::uint64_t> nan_rows(cam.height, 0), neg_rows(cam.height, 0);
  parallel_for(
      cam.height, options.threads,
      [&](std::int64_t y) {
        for (int x = 0; x < cam.width; ++x) {
          const std::uint64_t pixel = static_cast<std::uint64_t>(y) * cam.width + x;
          Rgb sum;
          for (int k = 0; k < options.spp; ++k) {
            Rng rng(options.seed, stream_key(pixel, static_cast<std::uint64_t>(k)));
            const SquareCoord jitter = rng.uniform2();
            const Rgb v = trace(scene, camera_ray(cam, x + jitter.s, y + jitter.t), options.integrator, rng);
            if (!v.is_finite()) {
              ++nan_rows[y];
              continue;
            }
            if (v.r < 0 || v.g < 0 || v.b < 0) ++neg_rows[y];
            sum += v;
          }
          out.image.at(x, static_cast<int>(y)) = sum / options.spp;
        }
      },
      1);
  for (int y = 0; y < cam.height; ++y) {
    out.nan_count += nan_rows[y];
    out.negative_count += neg_rows[y];
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double relmse(const Image& image, const Image& reference) {
  if (image.width != reference.width || image.height != reference.height)
    throw ContractError("relmse: resolution mismatch (" + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " vs " + std::to_string(reference.width) + "x" +
                        std::to_string(reference.height) + ")");
  if (image.pixels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < image.pixels.size(); ++k)
    for (int c = 0; c < 3; ++c) {
      const double x = image.pixels[k][c], r = reference.pixels[k][c];
      sum += (x - r) * (x - r) / (r * r + 0.01);
    }
  return sum / (3.0 * static_cast<double>(image.pixels.size()));
}

std::vector<VarianceRow> variance_report(const Scene& scene, const std::vector<SamplerKind>& samplers,
                                         const VarianceOptions& options, std::vector<Image>* images) {
  std::vector<VarianceRow> rows;
  for (SamplerKind kind : samplers) {
    Scene s = scene;
    for (Material& m : s.materials) m.sampler = kind;
    RenderOptions ro;
    ro.integrator = options.integrator;
    ro.threads = options.threads;
    ro.spp = options.reference_spp;
    ro.seed = options.seed + 0x5eed;
    const RenderOutput ref = render(s, ro);
    ro.spp = options.spp;
    ro.seed = options.seed;
    const RenderOutput test = render(s, ro);
    rows.push_back({kind, options.integrator, options.spp, relmse(test.image, ref.image), test.seconds, ref.seconds});
    if (images) images->push_back(test.image);
  }
  return rows;
}

void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(9);
  out << "sampler,integrator,spp,relmse,seconds,reference_seconds\n";
  for (const VarianceRow& r : rows)
    out << to_string(r.sampler) << ',' << to_string(r.integrator) << ',' << r.spp << ',' << r.relmse << ','
        << r.seconds << ',' << r.reference_seconds << '\n';
}

Image side_by_side(const std::vector<Image>& images) {
  if (images.empty()) return {};
  int width = 0, height = 0;
  for (const Image& im : images) {
    width += im.width;
    height = std::max(height, im.height);
  }
  width += 2 * static_cast<int>(images.size() - 1);
  Image out(width, height);
  int x0 = 0;
  for (const Image& im : images) {
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) out.at(x0 + x, y) = im.at(x, y);
    x0 += im.width + 2;
  }
  return out;
}

Image tonemap_exposure(const Image& image) {
  std::vector<double> lum;
  lum.reserve(image.pixels.size());
  for (const Rgb& c : image.pixels) lum.push_back(c.luminance());
  if (lum.empty()) return image;
  const std::size_t k = static_cast<std::size_t>(0.99 * static_cast<double>(lum.size() - 1));
  std::nth_element(lum.begin(), lum.begin() + static_cast<std::ptrdiff_t>(k), lum.end());
  const double scale = lum[k] > 0 ? 1.0 / lum[k] : 1.0;
  Image out = image;
  for (Rgb& c : out.pixels) c *= scale;
  return out;
}

}  // namespace impbake
