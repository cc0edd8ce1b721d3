#include <cmath>
#include <vector>

#include "doctest.h"
#include "impbake/error.h"
#include "impbake/renderer.h"
#include "test_util.h"

using namespace impbake;

namespace {

// An infinite-looking plane seen by an orthographic camera from `wi`: every
// pixel shades the same incident direction.
Scene plane_scene(const BsdfParams& params, const Direction& wi, SamplerKind sampler, int res = 16) {
  Scene s;
  Material m;
  m.name = "plane";
  m.params = params;
  m.sampler = sampler;
  s.materials.push_back(m);
  s.add_quad({-50, -50, 0}, {100, 0, 0}, {0, 100, 0}, 0);
  s.camera.type = CameraType::Orthographic;
  s.camera.position = wi * 10.0;
  s.camera.look_at = {0, 0, 0};
  s.camera.up = {0, 0, 1};
  s.camera.ortho_height = 1.0;
  s.camera.width = s.camera.height = res;
  s.environment = EnvironmentLight::constant(Rgb(1.0));
  return s;
}

struct Stats {
  double mean = 0, stderr_ = 0;
};

Stats channel_stats(const Image& im, int c) {
  double sum = 0, sum2 = 0;
  for (const Rgb& p : im.pixels) {
    sum += p[c];
    sum2 += p[c] * p[c];
  }
  const double n = static_cast<double>(im.pixels.size());
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum2 / n - mean * mean) / (n - 1))};
}

double image_mean(const Image& im) {
  double sum = 0;
  for (const Rgb& p : im.pixels) sum += p.average();
  return sum / static_cast<double>(im.pixels.size());
}

}  // namespace

TEST_CASE("relmse closed forms") {
  Image ref(4, 3);
  for (Rgb& p : ref.pixels) p = Rgb(1.0);
  CHECK(relmse(ref, ref) == 0.0);
  Image shifted = ref;
  for (Rgb& p : shifted.pixels) p += Rgb(0.3);
  CHECK(relmse(shifted, ref) == doctest::Approx(0.09 / 1.01).epsilon(1e-12));
  CHECK_THROWS_AS(relmse(Image(4, 4), ref), ContractError);
}

TEST_CASE("power heuristic weights sum to one") {
  Rng rng(3, 0);
  for (int k = 0; k < 1000; ++k) {
    const double a = -std::log(1 - rng.uniform()) * 10, b = -std::log(1 - rng.uniform()) * 10;
    CHECK(power_heuristic(a, b) + power_heuristic(b, a) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(power_heuristic(1.0, 0.0) == 1.0);
  CHECK(power_heuristic(0.0, 0.0) == 0.0);
}

TEST_CASE("Distribution2D samples its weights") {
  const int w = 8, h = 4;
  std::vector<double> weights(w * h);
  for (int k = 0; k < w * h; ++k) weights[k] = (k % 5 == 0) ? 0.0 : 1.0 + k % 7;
  const Distribution2D dist(weights, w, h);
  double total = 0;
  for (double v : weights) total += v;

  const int n = 200000;
  std::vector<double> observed(w * h, 0.0), expected(w * h);
  Rng rng(1, 2);
  for (int k = 0; k < n; ++k) {
    double pdf = 0;
    const SquareCoord c = dist.sample(rng.uniform2(), &pdf);
    const int i = static_cast<int>(c.s * w), j = static_cast<int>(c.t * h);
    REQUIRE(weights[j * w + i] > 0);
    CHECK(pdf == doctest::Approx(dist.pdf(c)));
    observed[j * w + i] += 1;
  }
  for (int k = 0; k < w * h; ++k) expected[k] = n * weights[k] / total;
  std::vector<double> obs, exp;
  for (int k = 0; k < w * h; ++k)
    if (expected[k] > 0) {
      obs.push_back(observed[k]);
      exp.push_back(expected[k]);
    }
  CHECK(testutil::chi_square(obs, exp).p_value > 0.01);
  CHECK_THROWS_AS(Distribution2D(std::vector<double>(4, 0.0), 2, 2), ContractError);
}

TEST_CASE("environment pdf integrates to one and matches its sampler") {
  ProceduralSky sky;
  sky.width = 64;
  sky.height = 32;
  const EnvironmentLight env = EnvironmentLight::from_image(sky.render());
  const double integral =
      testutil::integrate_directions([&](const Direction& d) { return env.pdf(d); }, 512, 1024, 0.0, kPi);
  CHECK(integral == doctest::Approx(1.0).epsilon(0.01));

  Rng rng(5, 5);
  for (int k = 0; k < 1000; ++k) {
    Vec3 dir;
    double pdf = 0;
    const Rgb le = env.sample(rng.uniform2(), &dir, &pdf);
    CHECK(length(dir) == doctest::Approx(1.0));
    CHECK(pdf == doctest::Approx(env.pdf(dir)).epsilon(1e-6));
    CHECK(le == env.radiance(dir));
  }
  const EnvironmentLight c = EnvironmentLight::constant(Rgb(2.0));
  CHECK(c.pdf({0, 0, 1}) == doctest::Approx(1.0 / kFourPi));
}

TEST_CASE("white furnace: multi-bounce conductor with R0 = 1") {
  for (double alpha : {0.3, 0.6, 1.0}) {
    BsdfParams p;
    p.model = Model::MultiBounce;
    p.alpha_x = p.alpha_y = alpha;
    const Direction wi = testutil::spherical(0.9, 0.4);
    RenderOptions o;
    o.integrator = Integrator::BsdfOnly;
    o.spp = 1024;
    o.seed = 11;

    const RenderOutput walk = render(plane_scene(p, wi, SamplerKind::RandomWalk, 8), o);
    for (const Rgb& px : walk.image.pixels) CHECK(px.r == doctest::Approx(1.0).epsilon(0.02));

    // Stochastic eval over the VNDF sampler is noisier per pixel; the image
    // mean must still be 1.
    const RenderOutput vndf = render(plane_scene(p, wi, SamplerKind::VNDF, 8), o);
    CHECK(image_mean(vndf.image) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(walk.nan_count == 0);
    CHECK(vndf.nan_count == 0);
  }
}

TEST_CASE("rough conductor plane under a constant sky equals its albedo") {
  BsdfParams p;
  p.r0 = Rgb(0.8, 0.5, 0.2);
  p.alpha_x = 1.0;
  p.alpha_y = 0.7;
  const Direction wi = testutil::spherical(0.7, 1.1);
  double albedo[3];
  for (int c = 0; c < 3; ++c)
    albedo[c] = testutil::integrate_directions([&](const Direction& wo) { return eval_single(p, wi, wo)[c]; }, 256, 512);

  for (Integrator integ : {Integrator::LightOnly, Integrator::BsdfOnly, Integrator::MIS})
    for (SamplerKind s : {SamplerKind::NDF, SamplerKind::VNDF}) {
      RenderOptions o;
      o.integrator = integ;
      o.spp = 64;
      o.seed = 2;
      const RenderOutput out = render(plane_scene(p, wi, s), o);
      for (int c = 0; c < 3; ++c) {
        const Stats st = channel_stats(out.image, c);
        INFO(to_string(integ), " ", to_string(s), " channel ", c);
        CHECK(std::abs(st.mean - albedo[c]) < 4 * st.stderr_ + 1e-4);
      }
    }
}

TEST_CASE("baked-map sampler renders the same plane") {
  BsdfParams p;
  p.r0 = Rgb(0.9, 0.6, 0.3);
  p.alpha_x = 0.4;
  p.alpha_y = 0.2;
  const Direction wi = testutil::spherical(1.0, 0.3);
  BakeConfig cfg;
  cfg.tabulate.resolution = 32;
  cfg.points = 1024;
  auto set = std::make_shared<BakedSet>();
  set->maps.push_back(bake(p, wi, cfg));

  Scene s = plane_scene(p, wi, SamplerKind::BakedMap);
  s.materials[0].baked = set;
  RenderOptions o;
  o.integrator = Integrator::BsdfOnly;
  o.spp = 64;
  const RenderOutput baked = render(s, o);
  const RenderOutput vndf = render(plane_scene(p, wi, SamplerKind::VNDF), o);
  for (int c = 0; c < 3; ++c) {
    INFO("channel ", c);
    // The map's weights are texel-interpolated, so agreement is within the
    // tabulation error rather than the noise.
    CHECK(channel_stats(baked.image, c).mean == doctest::Approx(channel_stats(vndf.image, c).mean).epsilon(0.02));
  }
  o.integrator = Integrator::MIS;
  const RenderOutput mis = render(s, o);
  CHECK(image_mean(mis.image) == doctest::Approx(image_mean(vndf.image)).epsilon(0.02));
}

TEST_CASE("integrators agree on a rect light and a sky") {
  BsdfParams p;
  p.r0 = Rgb(0.95);
  p.alpha_x = 0.3;
  p.alpha_y = 0.3;
  const Direction wi = testutil::spherical(0.6, 0.0);
  Scene s = plane_scene(p, wi, SamplerKind::VNDF, 12);
  ProceduralSky sky;
  sky.width = 64;
  sky.height = 32;
  s.environment = EnvironmentLight::from_image(sky.render(), 0.2);
  // Light facing down onto the plane, on the mirror side of the camera.
  s.rect_lights.push_back({{-3, -1, 4}, {0, 2, 0}, {2, 0, 0}, Rgb(5.0)});
  REQUIRE(dot(cross(s.rect_lights[0].u, s.rect_lights[0].v), Vec3{0, 0, 1}) < 0);

  std::vector<double> means[3];
  const Integrator integs[3] = {Integrator::LightOnly, Integrator::BsdfOnly, Integrator::MIS};
  for (int i = 0; i < 3; ++i)
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      RenderOptions o;
      o.integrator = integs[i];
      o.spp = 32;
      o.seed = seed;
      means[i].push_back(image_mean(render(s, o).image));
    }
  auto summary = [](const std::vector<double>& v) {
    double m = 0, m2 = 0;
    for (double x : v) {
      m += x;
      m2 += x * x;
    }
    m /= v.size();
    return Stats{m, std::sqrt(std::max(0.0, m2 / v.size() - m * m) / (v.size() - 1))};
  };
  const Stats ref = summary(means[2]);
  for (int i = 0; i < 2; ++i) {
    const Stats st = summary(means[i]);
    INFO(to_string(integs[i]), " ", st.mean, " vs mis ", ref.mean);
    CHECK(std::abs(st.mean - ref.mean) < 3 * std::hypot(st.stderr_, ref.stderr_) + 1e-4);
  }
}

TEST_CASE("direct lighting never exceeds the environment bound") {
  BsdfParams p;
  p.r0 = Rgb(1.0);
  p.alpha_x = 0.2;
  p.alpha_y = 0.05;
  RenderOptions o;
  o.integrator = Integrator::BsdfOnly;
  o.spp = 4;
  const RenderOutput out = render(plane_scene(p, testutil::spherical(1.3, 0.2), SamplerKind::VNDF), o);
  for (const Rgb& px : out.image.pixels) CHECK(px.max_component() <= 1.0 + 1e-12);
}

TEST_CASE("rendering is deterministic and thread independent") {
  BsdfParams p;
  p.model = Model::MultiBounce;
  p.alpha_x = 0.5;
  p.alpha_y = 0.1;
  Scene s = plane_scene(p, testutil::spherical(0.8, 0.5), SamplerKind::RandomWalk, 12);
  s.spheres.push_back({{0, 0, 0.2}, 0.2, 0});
  s.max_depth = 3;
  RenderOptions o;
  o.integrator = Integrator::BsdfOnly;
  o.spp = 8;
  o.seed = 9;
  o.threads = 1;
  const Image a = render(s, o).image;
  o.threads = 3;
  const Image b = render(s, o).image;
  CHECK(a.pixels == b.pixels);
  o.seed = 10;
  CHECK(render(s, o).image.pixels != a.pixels);
}

TEST_CASE("MIS with the random walk sampler is rejected") {
  BsdfParams p;
  p.model = Model::MultiBounce;
  Scene s = plane_scene(p, {0, 0, 1}, SamplerKind::RandomWalk, 2);
  RenderOptions o;
  o.integrator = Integrator::MIS;
  CHECK_THROWS_AS(render(s, o), ContractError);
  o.integrator = Integrator::BsdfOnly;
  CHECK_NOTHROW(render(s, o));
}

TEST_CASE("scene validation") {
  BsdfParams p;
  Scene s = plane_scene(p, {0, 0, 1}, SamplerKind::VNDF, 2);
  s.environment.reset();
  CHECK_THROWS_AS(s.validate(), ContractError);
  s = plane_scene(p, {0, 0, 1}, SamplerKind::BakedMap, 2);
  CHECK_THROWS_AS(s.validate(), ContractError);
  s = plane_scene(p, {0, 0, 1}, SamplerKind::VNDF, 2);
  s.materials[0].params.alpha_x = -1;
  CHECK_THROWS_AS(s.validate(), ContractError);
}

TEST_CASE("scene JSON") {
  const char* text = R"({
    // comments are allowed
    "camera": {"type": "orthographic", "position": [0, 0, 5], "look_at": [0, 0, 0], "up": [0, 1, 0],
               "ortho_height": 2, "width": 8, "height": 6},
    "materials": [
      {"name": "gold", "kind": "conductor", "model": "multi", "r0": [1, 0.8, 0.4], "alpha": [0.3, 0.1],
       "sampler": "random_walk"},
      {"name": "glass", "kind": "dielectric", "eta": 1.33, "alpha": 0.2}
    ],
    "objects": [
      {"type": "sphere", "center": [0, 0, 0.5], "radius": 0.5, "material": "glass"},
      {"type": "quad", "corner": [-2, -2, 0], "u": [4, 0, 0], "v": [0, 4, 0], "material": "gold"}
    ],
    "lights": [
      {"type": "environment", "constant": 0.5},
      {"type": "rect", "corner": [-1, -1, 3], "u": [0, 2, 0], "v": [2, 0, 0], "radiance": [4, 4, 4]}
    ],
    "max_depth": 2,
    "render": {"integrator": "bsdf", "spp": 3, "seed": 7}
  })";
  const SceneFile f = parse_scene(text);
  CHECK(f.scene.camera.type == CameraType::Orthographic);
  CHECK(f.scene.camera.width == 8);
  REQUIRE(f.scene.materials.size() == 2);
  CHECK(f.scene.materials[0].params.alpha_y == 0.1);
  CHECK(f.scene.materials[0].params.model == Model::MultiBounce);
  CHECK(f.scene.materials[0].sampler == SamplerKind::RandomWalk);
  CHECK(f.scene.materials[1].params.kind == Kind::Dielectric);
  CHECK(f.scene.materials[1].params.eta == 1.33);
  CHECK(f.scene.spheres.size() == 1);
  CHECK(f.scene.triangles.size() == 2);
  CHECK(f.scene.light_count() == 2);
  CHECK(f.scene.max_depth == 2);
  CHECK(f.options.integrator == Integrator::BsdfOnly);
  CHECK(f.options.spp == 3);
  CHECK(f.options.seed == 7);
  const RenderOutput out = render(f.scene, f.options);
  CHECK(out.nan_count == 0);

  CHECK_THROWS_AS(parse_scene("{"), ContractError);
  CHECK_THROWS_AS(parse_scene(R"({"materials": [{"name": "a"}], "lights": [{"type": "environment", "constant": 1}],
                                  "objects": [{"type": "sphere", "center": [0,0,0], "radius": 1, "material": "b"}]})"),
                  ContractError);
  CHECK_THROWS_AS(parse_scene(R"({"materials": [{"name": "a", "sampler": "magic"}]})"), ContractError);
}

TEST_CASE("dielectric sphere renders without NaN from both sides") {
  BsdfParams p;
  p.kind = Kind::Dielectric;
  p.alpha_x = p.alpha_y = 0.15;
  for (double eta : {1.33, 1.5, 2.0}) {
    p.eta = eta;
    Scene s;
    s.materials.push_back({"glass", p, SamplerKind::VNDF, nullptr, nullptr});
    s.spheres.push_back({{0, 0, 0}, 1.0, 0});
    s.camera.position = {0, -4, 0.5};
    s.camera.width = s.camera.height = 12;
    s.environment = EnvironmentLight::from_image(ProceduralSky{}.render());
    s.max_depth = 5;
    RenderOptions o;
    o.spp = 8;
    const RenderOutput out = render(s, o);
    CHECK(out.nan_count == 0);
    CHECK(out.negative_count == 0);
    CHECK(image_mean(out.image) > 0);
  }
}
