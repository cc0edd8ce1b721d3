#include "impbake/pipeline.h"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "impbake/io.h"
#include "impbake/parallel.h"

namespace impbake {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Kind kind_from(const std::string& s) {
  if (s == "conductor") return Kind::Conductor;
  if (s == "dielectric") return Kind::Dielectric;
  throw ContractError("unknown material kind '" + s + "' (conductor or dielectric)");
}

Model model_from(const std::string& s) {
  if (s == "single") return Model::SingleBounce;
  if (s == "multi") return Model::MultiBounce;
  throw ContractError("unknown model '" + s + "' (single or multi)");
}

std::string hex(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

json job_json(const BakeJob& job) {
  const LatticeSpec& l = job.lattice;
  return {{"kind", to_string(l.kind)},
          {"model", to_string(l.model)},
          {"r0", {l.r0.r, l.r0.g, l.r0.b}},
          {"alpha_x", l.alpha_x},
          {"alpha_y", l.alpha_y},
          {"cos_theta", l.cos_theta},
          {"phi", l.phi},
          {"eta", l.eta},
          {"resolution", job.resolution},
          {"points", job.points},
          {"noise_target", job.noise_target},
          {"cost", to_string(job.cost)},
          {"seed", job.seed}};
}

json params_json(const BsdfParams& p) {
  return {{"kind", to_string(p.kind)}, {"model", to_string(p.model)}, {"r0", {p.r0.r, p.r0.g, p.r0.b}},
          {"alpha_x", p.alpha_x},     {"alpha_y", p.alpha_y},         {"eta", p.eta}};
}

std::string entry_name(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", prefix, index, ext);
  return buf;
}

bool same_direction(const Direction& a, const Direction& b) {
  return std::abs(a.x - b.x) < 1e-12 && std::abs(a.y - b.y) < 1e-12 && std::abs(a.z - b.z) < 1e-12;
}

// A previously written entry is reusable when both files pass their
// checksum and describe the expected lattice point.
bool entry_valid(const fs::path& dir, const ManifestEntry& e, const BakeJob& job) {
  if (!verify_file(dir / e.slice_file) || !verify_file(dir / e.map_file)) return false;
  try {
    const ImportanceMap map = read_map(dir / e.map_file);
    const SliceImage slice = read_slice(dir / e.slice_file);
    return map.params == e.params && slice.params == e.params && same_direction(map.wi, e.wi) &&
           same_direction(slice.wi, e.wi) && slice.resolution == job.resolution &&
           map.texel_count() == job.points;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

std::string BakeJob::to_json() const { return job_json(*this).dump(2); }

BakeJob BakeJob::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("bake config: invalid JSON: ") + e.what());
  }
  BakeJob job;
  try {
    LatticeSpec& l = job.lattice;
    if (j.contains("kind")) l.kind = kind_from(j["kind"].get<std::string>());
    if (j.contains("model")) l.model = model_from(j["model"].get<std::string>());
    if (j.contains("r0")) {
      const json& r = j["r0"];
      l.r0 = r.is_number() ? Rgb(r.get<double>()) : Rgb(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
    }
    if (j.contains("alpha_x")) l.alpha_x = j["alpha_x"].get<std::vector<double>>();
    if (j.contains("alpha_y")) l.alpha_y = j["alpha_y"].get<std::vector<double>>();
    if (j.contains("cos_theta")) l.cos_theta = j["cos_theta"].get<std::vector<double>>();
    if (j.contains("phi")) l.phi = j["phi"].get<std::vector<double>>();
    if (j.contains("eta")) l.eta = j["eta"].get<std::vector<double>>();
    job.resolution = j.value("resolution", job.resolution);
    job.points = j.value("points", job.points);
    job.noise_target = j.value("noise_target", job.noise_target);
    if (j.contains("cost")) job.cost = ground_cost_from_string(j["cost"].get<std::string>());
    job.seed = j.value("seed", job.seed);
  } catch (const json::exception& e) {
    throw ContractError(std::string("bake config: ") + e.what());
  }
  return job;
}

BakeReport bake_lattice(const BakeJob& job, const fs::path& dir, const LogFn& log) {
  const std::vector<LatticePoint> lattice = make_lattice(job.lattice);
  if (lattice.empty()) throw ContractError("bake: the lattice is empty (every axis needs at least one value)");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(job.points))));
  if (job.points <= 0 || side * side != job.points) throw ContractError("bake: points must be a perfect square");
  if (job.resolution <= 0) throw ContractError("bake: resolution must be positive");

  fs::create_directories(dir);
  if (fs::exists(dir / kManifestName)) {
    const Manifest old = read_manifest(dir);
    if (job_json(old.job) != job_json(job))
      throw ContractError("bake: " + dir.string() +
                          " already holds a bake of a different lattice or configuration; choose another output "
                          "directory");
  }

  BakeReport report;
  report.manifest.job = job;
  report.manifest.entries.resize(lattice.size());
  std::vector<std::uint8_t> status(lattice.size(), 0);  // 0 skipped, 1 baked, 2 rebaked
  std::mutex log_mutex;
  parallel_for(
      static_cast<std::int64_t>(lattice.size()), job.threads,
      [&](std::int64_t k) {
        const int i = static_cast<int>(k);
        ManifestEntry& e = report.manifest.entries[i];
        e.index = i;
        e.params = lattice[i].params;
        e.wi = lattice[i].wi;
        e.slice_file = entry_name("slice", i, "ibs");
        e.map_file = entry_name("map", i, "ibm");
        const bool present = fs::exists(dir / e.map_file) || fs::exists(dir / e.slice_file);
        if (!present || !entry_valid(dir, e, job)) {
          if (present && log) {
            std::lock_guard lock(log_mutex);
            log("entry " + std::to_string(i) + ": checksum or header mismatch, rebaking");
          }
          TabulateOptions t;
          t.resolution = job.resolution;
          t.noise_target = job.noise_target;
          t.seed = stream_key(job.seed, static_cast<std::uint64_t>(i));
          t.threads = 1;
          const SliceImage slice = tabulate_slice(e.params, e.wi, t);
          const ImportanceMap map = bake_slice(slice, job.points, job.cost);
          write_slice(dir / e.slice_file, slice);
          write_map(dir / e.map_file, map);
          if (job.preview) {
            write_png(dir / entry_name("map", i, "png"), map_preview(map), false);
            write_png(dir / entry_name("slice", i, "png"), slice_preview(slice), false);
          }
          status[i] = present ? 2 : 1;
          if (log) {
            std::lock_guard lock(log_mutex);
            log("baked " + std::to_string(i + 1) + "/" + std::to_string(lattice.size()) + ": " + e.params.describe());
          }
        } else if (job.preview && !fs::exists(dir / entry_name("map", i, "png"))) {
          const ImportanceMap map = read_map(dir / e.map_file);
          write_png(dir / entry_name("map", i, "png"), map_preview(map), false);
          write_png(dir / entry_name("slice", i, "png"), slice_preview(read_slice(dir / e.slice_file)), false);
        }
        e.slice_crc = crc32_file(dir / e.slice_file);
        e.map_crc = crc32_file(dir / e.map_file);
      },
      1);
  for (std::uint8_t s : status) (s == 0 ? report.skipped : s == 1 ? report.baked : report.rebaked)++;

  json m;
  m["format"] = "impbake-bake";
  m["version"] = 1;
  m["job"] = job_json(job);
  m["entries"] = json::array();
  for (const ManifestEntry& e : report.manifest.entries)
    m["entries"].push_back({{"index", e.index},
                            {"params", params_json(e.params)},
                            {"wi", {e.wi.x, e.wi.y, e.wi.z}},
                            {"slice", e.slice_file},
                            {"map", e.map_file},
                            {"slice_crc32", hex(e.slice_crc)},
                            {"map_crc32", hex(e.map_crc)}});
  const fs::path tmp = dir / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << m.dump(2) << '\n';
  }
  fs::rename(tmp, dir / kManifestName);
  return report;
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in)
    throw Error("no " + std::string(kManifestName) + " in " + dir.string() + "; run 'impbake bake --out " +
                dir.string() + "' first");
  Manifest out;
  try {
    const json m = json::parse(in);
    if (m.value("format", "") != "impbake-bake") throw FormatError(path.string() + ": not a bake manifest");
    out.job = BakeJob::from_json(m.at("job").dump());
    for (const json& e : m.at("entries")) {
      ManifestEntry me;
      me.index = e.at("index").get<int>();
      const json& p = e.at("params");
      me.params.kind = kind_from(p.at("kind").get<std::string>());
      me.params.model = model_from(p.at("model").get<std::string>());
      me.params.r0 = Rgb(p.at("r0").at(0).get<double>(), p.at("r0").at(1).get<double>(), p.at("r0").at(2).get<double>());
      me.params.alpha_x = p.at("alpha_x").get<double>();
      me.params.alpha_y = p.at("alpha_y").get<double>();
      me.params.eta = p.at("eta").get<double>();
      const json& w = e.at("wi");
      me.wi = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()};
      me.slice_file = e.at("slice").get<std::string>();
      me.map_file = e.at("map").get<std::string>();
      me.slice_crc = static_cast<std::uint32_t>(std::stoul(e.at("slice_crc32").get<std::string>(), nullptr, 16));
      me.map_crc = static_cast<std::uint32_t>(std::stoul(e.at("map_crc32").get<std::string>(), nullptr, 16));
      out.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

std::vector<BakedEntry> load_bake(const fs::path& dir) {
  const Manifest m = read_manifest(dir);
  if (m.entries.empty()) throw Error(dir.string() + ": the bake has no entries");
  std::vector<BakedEntry> out;
  out.reserve(m.entries.size());
  for (const ManifestEntry& e : m.entries) {
    for (const auto& [file, crc] : {std::pair{e.slice_file, e.slice_crc}, std::pair{e.map_file, e.map_crc}})
      if (!fs::exists(dir / file) || crc32_file(dir / file) != crc)
        throw FormatError(dir.string() + "/" + file + ": missing or checksum differs from the manifest; rerun bake " +
                          "on this directory to repair it");
    BakedEntry b;
    b.slice = read_slice(dir / e.slice_file);
    b.map = read_map(dir / e.map_file);
    attach_density(b.map, b.slice);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<TrainedNet> train_networks(const std::vector<BakedEntry>& entries, const TrainJob& job, const LogFn& log) {
  if (entries.empty()) throw ContractError("train: no baked entries");
  const Kind material = entries.front().map.params.kind;
  const Model model = entries.front().map.params.model;
  for (const BakedEntry& e : entries)
    if (e.map.params.kind != material || e.map.params.model != model)
      throw ContractError("train: the bake mixes material families; train one family at a time");
  std::vector<TrainedNet> out;
  for (NetKind kind : job.nets) {
    const TrainingSet data = generate_dataset(entries, kind, job.data);
    TrainConfig cfg = job.config;
    if (log) {
      log(std::string("training ") + to_string(kind) + " on " + std::to_string(data.size()) + " records");
      cfg.on_epoch = [&, kind](int epoch, double train_loss, double val_loss) {
        std::ostringstream s;
        s << to_string(kind) << " epoch " << epoch << " train " << train_loss << " validation " << val_loss;
        log(s.str());
      };
    }
    TrainResult r = train(data, material, model, cfg);
    out.push_back({kind, std::move(r.weights), std::move(r.curve)});
  }
  return out;
}

void save_trained(const fs::path& dir, const std::vector<TrainedNet>& nets) {
  fs::create_directories(dir);
  for (const TrainedNet& n : nets) {
    save_weights(dir / (std::string(to_string(n.kind)) + ".mlp"), n.weights);
    write_loss_csv(dir / ("loss_" + std::string(to_string(n.kind)) + ".csv"), n.curve);
  }
}

NeuralBsdf load_neural(const fs::path& dir) {
  NeuralBsdf nets;
  auto load = [&](NetKind k, MlpWeights& w) {
    const fs::path p = dir / (std::string(to_string(k)) + ".mlp");
    if (!fs::exists(p)) throw Error(p.string() + " not found; run 'impbake train' first");
    w = load_weights(p);
    if (w.kind != k) throw FormatError(p.string() + ": holds a " + to_string(w.kind) + " network");
  };
  load(NetKind::Sample, nets.sample);
  load(NetKind::Eval, nets.eval);
  load(NetKind::Pdf, nets.pdf);
  if (nets.eval.material != nets.sample.material || nets.pdf.material != nets.sample.material)
    throw FormatError(dir.string() + ": the three networks were trained for different materials");
  return nets;
}

}  // namespace impbake
