#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>

#include "impbake/error.h"
#include "impbake/renderer.h"

namespace impbake {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ContractError("scene: " + where + ": " + what);
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(where, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Rgb rgb(const json& j, const std::string& where) {
  if (j.is_number()) return Rgb(j.get<double>());
  if (!j.is_array() || j.size() != 3) fail(where, "expected a number or [r, g, b]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Camera parse_camera(const json& j) {
  Camera c;
  const std::string type = get_or<std::string>(j, "type", "pinhole");
  if (type == "pinhole") c.type = CameraType::Pinhole;
  else if (type == "orthographic") c.type = CameraType::Orthographic;
  else fail("camera.type", "expected pinhole or orthographic, got '" + type + "'");
  if (j.contains("position")) c.position = vec3(j["position"], "camera.position");
  if (j.contains("look_at")) c.look_at = vec3(j["look_at"], "camera.look_at");
  if (j.contains("up")) c.up = vec3(j["up"], "camera.up");
  c.fov_deg = get_or(j, "fov", c.fov_deg);
  c.ortho_height = get_or(j, "ortho_height", c.ortho_height);
  c.width = get_or(j, "width", c.width);
  c.height = get_or(j, "height", c.height);
  if (length(c.look_at - c.position) <= 0) fail("camera", "look_at equals position");
  return c;
}

std::shared_ptr<const BakedSet> parse_baked(const json& j, const BsdfParams& params, const fs::path& base,
                                            const std::string& where) {
  auto set = std::make_shared<BakedSet>();
  if (j.contains("files")) {
    // [{"map": "a.ibm", "slice": "a.ibs"}, ...]
    for (const json& f : j["files"]) {
      ImportanceMap map = read_map(resolve(base, f.at("map").get<std::string>()));
      attach_density(map, read_slice(resolve(base, f.at("slice").get<std::string>())));
      set->maps.push_back(std::move(map));
    }
  }
  if (j.contains("bake")) {
    // Bake at load time for the listed incident directions.
    const json& b = j["bake"];
    BakeConfig cfg;
    cfg.points = get_or(b, "points", 1024);
    cfg.tabulate.resolution = get_or(b, "resolution", 32);
    cfg.tabulate.noise_target = get_or(b, "noise_target", cfg.tabulate.noise_target);
    cfg.tabulate.seed = get_or<std::uint64_t>(b, "seed", 0);
    cfg.tabulate.threads = get_or(b, "threads", 0);
    for (const json& w : b.at("wi")) {
      const Direction wi = normalize(vec3(w, where + ".bake.wi"));
      ImportanceMap map = bake(params, wi, cfg);
      set->maps.push_back(std::move(map));
    }
  }
  if (set->maps.empty()) fail(where, "baked needs 'files' or 'bake' entries");
  return set;
}

Material parse_material(const json& j, const fs::path& base, int index) {
  Material m;
  m.name = get_or<std::string>(j, "name", "material" + std::to_string(index));
  const std::string where = "material '" + m.name + "'";
  const std::string kind = get_or<std::string>(j, "kind", "conductor");
  if (kind == "conductor") m.params.kind = Kind::Conductor;
  else if (kind == "dielectric") m.params.kind = Kind::Dielectric;
  else fail(where, "kind must be conductor or dielectric");
  const std::string model = get_or<std::string>(j, "model", "single");
  if (model == "single") m.params.model = Model::SingleBounce;
  else if (model == "multi") m.params.model = Model::MultiBounce;
  else fail(where, "model must be single or multi");
  if (j.contains("r0")) m.params.r0 = rgb(j["r0"], where + ".r0");
  if (j.contains("alpha")) {
    const json& a = j["alpha"];
    if (a.is_number()) {
      m.params.alpha_x = m.params.alpha_y = a.get<double>();
    } else {
      if (!a.is_array() || a.size() != 2) fail(where, "alpha must be a number or [alpha_x, alpha_y]");
      m.params.alpha_x = a[0].get<double>();
      m.params.alpha_y = a[1].get<double>();
    }
  }
  m.params.eta = get_or(j, "eta", m.params.eta);
  try {
    m.params.validate();
  } catch (const ContractError& e) {
    fail(where, e.what());
  }
  m.sampler = sampler_from_string(get_or<std::string>(j, "sampler", "vndf"));
  if (j.contains("baked")) m.baked = parse_baked(j["baked"], m.params, base, where + ".baked");
  if (j.contains("neural")) {
    const json& n = j["neural"];
    auto nets = std::make_shared<NeuralBsdf>();
    nets->sample = load_weights(resolve(base, n.at("sample").get<std::string>()));
    nets->eval = load_weights(resolve(base, n.at("eval").get<std::string>()));
    nets->pdf = load_weights(resolve(base, n.at("pdf").get<std::string>()));
    m.neural = std::move(nets);
  }
  return m;
}

EnvironmentLight parse_environment(const json& j, const fs::path& base) {
  const double scale = get_or(j, "scale", 1.0);
  if (j.contains("constant")) return EnvironmentLight::constant(rgb(j["constant"], "environment.constant") * scale);
  if (j.contains("pfm")) return EnvironmentLight::from_image(read_pfm(resolve(base, j["pfm"].get<std::string>())), scale);
  if (j.contains("sky")) {
    const json& s = j["sky"];
    ProceduralSky sky;
    sky.width = get_or(s, "width", sky.width);
    sky.height = get_or(s, "height", sky.height);
    if (s.contains("zenith")) sky.zenith = rgb(s["zenith"], "sky.zenith");
    if (s.contains("horizon")) sky.horizon = rgb(s["horizon"], "sky.horizon");
    if (s.contains("ground")) sky.ground = rgb(s["ground"], "sky.ground");
    if (s.contains("sun_direction")) sky.sun_direction = vec3(s["sun_direction"], "sky.sun_direction");
    sky.sun_radius_deg = get_or(s, "sun_radius_deg", sky.sun_radius_deg);
    if (s.contains("sun_radiance")) sky.sun_radiance = rgb(s["sun_radiance"], "sky.sun_radiance");
    return EnvironmentLight::from_image(sky.render(), scale);
  }
  fail("environment", "expected one of 'constant', 'pfm' or 'sky'");
}

}  // namespace

SceneFile parse_scene(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("scene: invalid JSON: ") + e.what());
  }
  SceneFile out;
  Scene& scene = out.scene;
  try {
    if (root.contains("camera")) scene.camera = parse_camera(root["camera"]);

    std::map<std::string, int> by_name;
    for (const json& m : root.value("materials", json::array())) {
      scene.materials.push_back(parse_material(m, base_dir, static_cast<int>(scene.materials.size())));
      if (!by_name.emplace(scene.materials.back().name, static_cast<int>(scene.materials.size()) - 1).second)
        fail("materials", "duplicate name '" + scene.materials.back().name + "'");
    }
    auto material_ref = [&](const json& j, const std::string& where) {
      if (j.is_number_integer()) return j.get<int>();
      const auto it = by_name.find(j.get<std::string>());
      if (it == by_name.end()) fail(where, "unknown material '" + j.get<std::string>() + "'");
      return it->second;
    };

    for (const json& o : root.value("objects", json::array())) {
      const std::string type = o.at("type").get<std::string>();
      const int mat = material_ref(o.at("material"), type);
      const Vec3 tangent = o.contains("tangent") ? vec3(o["tangent"], type + ".tangent") : Vec3{1, 0, 0};
      if (type == "sphere") {
        scene.spheres.push_back({vec3(o.at("center"), "sphere.center"), o.at("radius").get<double>(), mat});
      } else if (type == "quad") {
        scene.add_quad(vec3(o.at("corner"), "quad.corner"), vec3(o.at("u"), "quad.u"), vec3(o.at("v"), "quad.v"), mat,
                       tangent);
      } else if (type == "triangle") {
        const json& p = o.at("points");
        if (!p.is_array() || p.size() != 3) fail("triangle", "expected three points");
        scene.triangles.push_back({vec3(p[0], "triangle"), vec3(p[1], "triangle"), vec3(p[2], "triangle"), tangent, mat});
      } else {
        fail("objects", "unknown type '" + type + "' (sphere, quad or triangle)");
      }
    }

    for (const json& l : root.value("lights", json::array())) {
      const std::string type = l.at("type").get<std::string>();
      if (type == "rect") {
        scene.rect_lights.push_back({vec3(l.at("corner"), "rect.corner"), vec3(l.at("u"), "rect.u"),
                                     vec3(l.at("v"), "rect.v"), rgb(l.at("radiance"), "rect.radiance")});
      } else if (type == "environment") {
        if (scene.environment) fail("lights", "only one environment light is supported");
        scene.environment = parse_environment(l, base_dir);
      } else {
        fail("lights", "unknown type '" + type + "' (rect or environment)");
      }
    }

    scene.max_depth = root.value("max_depth", scene.max_depth);
    if (root.contains("render")) {
      const json& r = root["render"];
      if (r.contains("integrator")) out.options.integrator = integrator_from_string(r["integrator"].get<std::string>());
      out.options.spp = r.value("spp", out.options.spp);
      out.options.seed = r.value("seed", out.options.seed);
    }
  } catch (const json::exception& e) {
    throw ContractError(std::string("scene: ") + e.what());
  }
  scene.validate();
  return out;
}

SceneFile load_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

}  // namespace impbake
