// impbake: bake importance maps, train the networks, render scenes and run
// the acceptance suite.
//
// Exit codes: 0 success, 1 validation failure or runtime error, 2 usage
// error (bad flags, invalid configuration, missing inputs).

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "impbake/acceptance.h"
#include "impbake/io.h"
#include "impbake/pipeline.h"
#include "impbake/renderer.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace impbake;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

void echo_config(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

// ---------------------------------------------------------------------------
// bake

struct BakeArgs {
  std::string config, out, kind, model, cost;
  std::vector<double> r0, alpha_x, alpha_y, cos_theta, phi, eta;
  int resolution = 0, points = 0, threads = 0;
  double noise_target = 0;
  std::int64_t seed = -1;
  bool preview = false;
};

int cmd_bake(const BakeArgs& a) {
  BakeJob job = a.config.empty() ? BakeJob{} : BakeJob::from_json(slurp(a.config));
  LatticeSpec& l = job.lattice;
  if (!a.kind.empty()) {
    if (a.kind != "conductor" && a.kind != "dielectric") throw UsageError("--kind must be conductor or dielectric");
    l.kind = a.kind == "conductor" ? Kind::Conductor : Kind::Dielectric;
  }
  if (!a.model.empty()) {
    if (a.model != "single" && a.model != "multi") throw UsageError("--model must be single or multi");
    l.model = a.model == "single" ? Model::SingleBounce : Model::MultiBounce;
  }
  if (!a.r0.empty()) {
    if (a.r0.size() != 1 && a.r0.size() != 3) throw UsageError("--r0 takes one or three values");
    l.r0 = a.r0.size() == 1 ? Rgb(a.r0[0]) : Rgb(a.r0[0], a.r0[1], a.r0[2]);
  }
  if (!a.alpha_x.empty()) l.alpha_x = a.alpha_x;
  if (!a.alpha_y.empty()) l.alpha_y = a.alpha_y;
  if (!a.cos_theta.empty()) l.cos_theta = a.cos_theta;
  if (!a.phi.empty()) l.phi = a.phi;
  if (!a.eta.empty()) l.eta = a.eta;
  if (a.resolution > 0) job.resolution = a.resolution;
  if (a.points > 0) job.points = a.points;
  if (a.noise_target > 0) job.noise_target = a.noise_target;
  if (!a.cost.empty()) job.cost = ground_cost_from_string(a.cost);
  if (a.seed >= 0) job.seed = static_cast<std::uint64_t>(a.seed);
  job.threads = a.threads;
  job.preview = a.preview;

  const fs::path out(a.out);
  json echo = json::parse(job.to_json());
  echo["threads"] = a.threads;
  echo["preview"] = a.preview;
  const BakeReport r = bake_lattice(job, out, log_line);
  echo_config(out / "bake_config.json", echo);
  std::cout << "bake: " << r.manifest.entries.size() << " lattice points in " << out.string() << " (" << r.baked
            << " baked, " << r.rebaked << " rebaked, " << r.skipped << " reused)" << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string bake, out;
  std::vector<std::string> nets{"sample", "eval", "pdf"};
  std::vector<int> hidden;
  int epochs = 0, batch = 0, threads = 0, jitter = -1;
  double lr = 0, final_lr = 0, hold = -1, validation_fraction = -1;
  std::int64_t seed = -1;
};

int cmd_train(const TrainArgs& a) {
  require_exists(fs::path(a.bake) / kManifestName, "bake manifest (run 'impbake bake --out " + a.bake + "' first)");
  TrainJob job;
  job.nets.clear();
  for (const std::string& n : a.nets) job.nets.push_back(net_kind_from_string(n));
  if (!a.hidden.empty()) job.config.hidden = a.hidden;
  if (a.epochs > 0) job.config.epochs = a.epochs;
  if (a.batch > 0) job.config.batch_size = a.batch;
  if (a.lr > 0) job.config.learning_rate = a.lr;
  if (a.final_lr > 0) job.config.final_learning_rate = a.final_lr;
  if (a.hold >= 0) job.config.hold_fraction = a.hold;
  if (a.seed >= 0) job.config.seed = job.data.seed = static_cast<std::uint64_t>(a.seed);
  if (a.jitter >= 0) job.data.jitter_per_texel = a.jitter;
  if (a.validation_fraction >= 0) job.data.validation_fraction = a.validation_fraction;
  job.config.threads = a.threads;

  const fs::path out(a.out);
  json echo = {{"bake", fs::absolute(a.bake).string()},
               {"nets", a.nets},
               {"hidden", job.config.hidden},
               {"epochs", job.config.epochs},
               {"batch", job.config.batch_size},
               {"lr", job.config.learning_rate},
               {"final_lr", job.config.final_learning_rate},
               {"hold", job.config.hold_fraction},
               {"seed", job.config.seed},
               {"jitter", job.data.jitter_per_texel},
               {"validation_fraction", job.data.validation_fraction},
               {"threads", a.threads}};
  echo_config(out / "train_config.json", echo);

  const std::vector<BakedEntry> entries = load_bake(a.bake);
  const std::vector<TrainedNet> nets = train_networks(entries, job, log_line);
  save_trained(out, nets);
  for (const TrainedNet& n : nets)
    std::cout << to_string(n.kind) << ": final train loss " << n.curve.back().train_loss << ", validation loss "
              << n.curve.back().validation_loss << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string scene, out, name = "render", integrator, sampler, reference;
  int spp = 0, max_depth = 0, threads = 0;
  std::int64_t seed = -1;
  double exposure = 0.0;
  bool auto_exposure = false;
};

Image exposed(const Image& im, double stops, bool automatic) {
  Image out = automatic ? tonemap_exposure(im) : im;
  const double scale = std::exp2(stops);
  for (Rgb& p : out.pixels) p *= scale;
  return out;
}

int cmd_render(const RenderArgs& a) {
  require_exists(a.scene, "scene file");
  if (!a.reference.empty()) require_exists(a.reference, "reference image");
  SceneFile sf = load_scene(a.scene);
  if (!a.integrator.empty()) sf.options.integrator = integrator_from_string(a.integrator);
  if (!a.sampler.empty()) {
    const SamplerKind k = sampler_from_string(a.sampler);
    for (Material& m : sf.scene.materials) m.sampler = k;
  }
  if (a.spp > 0) sf.options.spp = a.spp;
  if (a.seed >= 0) sf.options.seed = static_cast<std::uint64_t>(a.seed);
  if (a.max_depth > 0) sf.scene.max_depth = a.max_depth;
  sf.options.threads = a.threads;

  std::vector<std::string> samplers;
  for (const Material& m : sf.scene.materials) samplers.push_back(to_string(m.sampler));
  const fs::path out(a.out);
  echo_config(out / (a.name + "_config.json"), {{"scene", fs::absolute(a.scene).string()},
                                                {"integrator", to_string(sf.options.integrator)},
                                                {"samplers", samplers},
                                                {"spp", sf.options.spp},
                                                {"seed", sf.options.seed},
                                                {"max_depth", sf.scene.max_depth},
                                                {"reference", a.reference},
                                                {"exposure", a.exposure},
                                                {"auto_exposure", a.auto_exposure},
                                                {"threads", a.threads}});

  const RenderOutput r = render(sf.scene, sf.options);
  write_pfm(out / (a.name + ".pfm"), r.image);
  write_png(out / (a.name + ".png"), exposed(r.image, a.exposure, a.auto_exposure));
  std::string rel;
  if (!a.reference.empty()) {
    std::ostringstream s;
    s.precision(9);
    s << relmse(r.image, read_pfm(a.reference));
    rel = s.str();
  }
  std::string joined;
  for (const std::string& s : samplers) joined += (joined.empty() ? "" : ";") + s;
  std::ofstream csv(out / (a.name + "_metrics.csv"));
  csv.precision(9);
  csv << "scene,integrator,samplers,spp,seed,seconds,nan_count,negative_count,relmse\n";
  csv << fs::path(a.scene).filename().string() << ',' << to_string(sf.options.integrator) << ',' << joined << ','
      << r.spp << ',' << sf.options.seed << ',' << r.seconds << ',' << r.nan_count << ',' << r.negative_count << ','
      << rel << '\n';
  std::cout << "render: " << r.image.width << "x" << r.image.height << " at " << r.spp << " spp in " << r.seconds
            << " s, " << r.nan_count << " NaN samples" << (rel.empty() ? "" : ", relMSE " + rel) << std::endl;
  return r.nan_count == 0 ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------
// variance

struct VarianceArgs {
  std::string scene, out, integrator = "bsdf";
  std::vector<std::string> samplers{"ndf", "vndf"};
  int spp = 64, reference_spp = 4096, threads = 0;
  std::int64_t seed = 1;
};

int cmd_variance(const VarianceArgs& a) {
  require_exists(a.scene, "scene file");
  const SceneFile sf = load_scene(a.scene);
  VarianceOptions vo;
  vo.integrator = integrator_from_string(a.integrator);
  vo.spp = a.spp;
  vo.reference_spp = a.reference_spp;
  vo.seed = static_cast<std::uint64_t>(a.seed);
  vo.threads = a.threads;
  std::vector<SamplerKind> kinds;
  for (const std::string& s : a.samplers) kinds.push_back(sampler_from_string(s));
  const fs::path out(a.out);
  echo_config(out / "variance_config.json", {{"scene", fs::absolute(a.scene).string()},
                                             {"samplers", a.samplers},
                                             {"integrator", a.integrator},
                                             {"spp", a.spp},
                                             {"reference_spp", a.reference_spp},
                                             {"seed", a.seed},
                                             {"threads", a.threads}});
  std::vector<Image> images;
  const std::vector<VarianceRow> rows = variance_report(sf.scene, kinds, vo, &images);
  write_variance_csv(out / "variance.csv", rows);
  for (Image& im : images) im = tonemap_exposure(im);
  write_png(out / "comparison.png", side_by_side(images));
  for (const VarianceRow& r : rows)
    std::cout << to_string(r.sampler) << ": relMSE " << r.relmse << " (" << r.seconds << " s)" << std::endl;
  return 0;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  std::string work = "acceptance_work", photo, report, conductor_nets, dielectric_nets;
  std::vector<int> only;
  int threads = 0;
  bool quiet = false;
};

int cmd_validate(const ValidateArgs& a) {
  AcceptanceOptions o;
  o.work_dir = a.work;
  o.photo = a.photo;
  o.conductor_nets = a.conductor_nets;
  o.dielectric_nets = a.dielectric_nets;
  o.only = a.only;
  o.threads = a.threads;
  if (!a.photo.empty()) require_exists(a.photo, "photo");
  for (const std::string& d : {a.conductor_nets, a.dielectric_nets})
    if (!d.empty()) require_exists(d, "network directory");
  const bool needs_photo = a.only.empty() || std::any_of(a.only.begin(), a.only.end(), [](int c) {
                             return c >= 1 && c <= 4;
                           }) || std::count(a.only.begin(), a.only.end(), 9);
  if (needs_photo && a.photo.empty()) throw UsageError("--photo is required for criteria 1-4 and 9");
  if (!a.quiet) o.log = log_line;
  echo_config(fs::path(a.work) / "validate_config.json", {{"photo", a.photo},
                                                          {"only", a.only},
                                                          {"conductor_nets", a.conductor_nets},
                                                          {"dielectric_nets", a.dielectric_nets},
                                                          {"threads", a.threads}});
  const std::vector<CriterionResult> results = run_acceptance(o);
  bool all = true;
  for (const CriterionResult& r : results) {
    std::cout << format_result_line(r) << std::endl;
    all = all && r.pass;
  }
  const fs::path report = a.report.empty() ? fs::path(a.work) / "report.json" : fs::path(a.report);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  std::ofstream(report) << acceptance_report_json(results) << '\n';
  return all ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"impbake: importance maps for parametric BSDFs"};
  app.require_subcommand(1);

  BakeArgs bake;
  auto* b = app.add_subcommand("bake", "tabulate and bake a lattice of BSDF slices");
  b->add_option("--config", bake.config, "JSON lattice/bake configuration")->check(CLI::ExistingFile);
  b->add_option("--out", bake.out, "output directory")->required();
  b->add_option("--kind", bake.kind, "conductor or dielectric");
  b->add_option("--model", bake.model, "single or multi");
  b->add_option("--r0", bake.r0, "normal-incidence reflectance (1 or 3 values)")->delimiter(',');
  b->add_option("--alpha-x", bake.alpha_x, "roughness values along x")->delimiter(',');
  b->add_option("--alpha-y", bake.alpha_y, "roughness values along y")->delimiter(',');
  b->add_option("--cos-theta", bake.cos_theta, "incident cos(theta) values")->delimiter(',');
  b->add_option("--phi", bake.phi, "incident azimuths in [0, pi/2]")->delimiter(',');
  b->add_option("--eta", bake.eta, "dielectric IORs")->delimiter(',');
  b->add_option("--resolution", bake.resolution, "slice resolution");
  b->add_option("--points", bake.points, "transported points (perfect square)");
  b->add_option("--noise-target", bake.noise_target, "relative error target of multi-bounce texels");
  b->add_option("--cost", bake.cost, "ground cost: squared_euclidean or euclidean");
  b->add_option("--seed", bake.seed, "seed");
  b->add_option("--threads", bake.threads, "worker threads (0 = all cores)");
  b->add_flag("--preview", bake.preview, "also write map (r=u, g=v) and slice PNG previews");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train the sample, eval and pdf networks on a bake");
  t->add_option("--bake", train.bake, "bake directory")->required();
  t->add_option("--out", train.out, "output directory for weights and loss curves")->required();
  t->add_option("--nets", train.nets, "networks to train")->delimiter(',');
  t->add_option("--hidden", train.hidden, "hidden layer widths")->delimiter(',');
  t->add_option("--epochs", train.epochs, "epochs");
  t->add_option("--batch", train.batch, "batch size");
  t->add_option("--lr", train.lr, "initial learning rate");
  t->add_option("--final-lr", train.final_lr, "learning rate at the last step");
  t->add_option("--hold", train.hold, "fraction of steps at the initial rate");
  t->add_option("--jitter", train.jitter, "extra jittered sample records per texel");
  t->add_option("--validation-fraction", train.validation_fraction, "held-out record fraction");
  t->add_option("--seed", train.seed, "seed");
  t->add_option("--threads", train.threads, "worker threads (0 = all cores)");

  RenderArgs rend;
  auto* r = app.add_subcommand("render", "render a scene file");
  r->add_option("scene", rend.scene, "scene JSON")->required();
  r->add_option("--out", rend.out, "output directory")->required();
  r->add_option("--name", rend.name, "output file stem");
  r->add_option("--integrator", rend.integrator, "light, bsdf or mis");
  r->add_option("--sampler", rend.sampler, "override every material's sampler");
  r->add_option("--spp", rend.spp, "samples per pixel");
  r->add_option("--seed", rend.seed, "seed");
  r->add_option("--max-depth", rend.max_depth, "path depth (1 = direct lighting)");
  r->add_option("--reference", rend.reference, "PFM reference for relMSE");
  r->add_option("--exposure", rend.exposure, "PNG exposure in stops");
  r->add_flag("--auto-exposure", rend.auto_exposure, "map the 99th-percentile luminance to 1 in the PNG");
  r->add_option("--threads", rend.threads, "worker threads (0 = all cores)");

  VarianceArgs var;
  auto* v = app.add_subcommand("variance", "relMSE of several samplers at equal spp");
  v->add_option("scene", var.scene, "scene JSON")->required();
  v->add_option("--out", var.out, "output directory")->required();
  v->add_option("--samplers", var.samplers, "samplers to compare")->delimiter(',');
  v->add_option("--integrator", var.integrator, "light, bsdf or mis");
  v->add_option("--spp", var.spp, "samples per pixel");
  v->add_option("--reference-spp", var.reference_spp, "samples per pixel of each reference");
  v->add_option("--seed", var.seed, "seed");
  v->add_option("--threads", var.threads, "worker threads (0 = all cores)");

  ValidateArgs val;
  auto* va = app.add_subcommand("validate", "run the acceptance criteria and write a JSON report");
  va->add_option("--work", val.work, "cache directory");
  va->add_option("--photo", val.photo, "grayscale photo (PGM/PFM) for the natural-image density");
  va->add_option("--only", val.only, "criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
  va->add_option("--conductor-nets", val.conductor_nets, "use these conductor networks instead of training");
  va->add_option("--dielectric-nets", val.dielectric_nets, "use these dielectric networks instead of training");
  va->add_option("--report", val.report, "JSON report path (default <work>/report.json)");
  va->add_option("--threads", val.threads, "worker threads (0 = all cores)");
  va->add_flag("--quiet", val.quiet, "only print the result lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*b) return cmd_bake(bake);
    if (*t) return cmd_train(train);
    if (*r) return cmd_render(rend);
    if (*v) return cmd_variance(var);
    if (*va) return cmd_validate(val);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitUsage;
}
