#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "impbake/assignment.h"
#include "impbake/neural.h"

namespace impbake {

using LogFn = std::function<void(const std::string&)>;

/// Everything that determines the contents of a bake directory.
struct BakeJob {
  LatticeSpec lattice;
  int resolution = 32;  ///< slice resolution
  int points = 1024;    ///< transported points (map is sqrt(points) square)
  double noise_target = 0.01;
  GroundCost cost = GroundCost::SquaredEuclidean;
  std::uint64_t seed = 0;
  int threads = 0;  ///< not part of the job identity
  bool preview = false;

  /// JSON text of the identity-relevant fields (used for the manifest and
  /// the config echo).
  std::string to_json() const;
  static BakeJob from_json(const std::string& text);
};

struct ManifestEntry {
  int index = 0;
  BsdfParams params;
  Direction wi;
  std::string slice_file, map_file;
  std::uint32_t slice_crc = 0, map_crc = 0;
};

struct Manifest {
  BakeJob job;
  std::vector<ManifestEntry> entries;
};

struct BakeReport {
  int baked = 0;    ///< newly baked
  int skipped = 0;  ///< already present and valid
  int rebaked = 0;  ///< present but corrupt or stale
  Manifest manifest;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Bake every lattice point into `dir` (slice_NNNN.ibs + map_NNNN.ibm) and
/// write manifest.json. Existing files whose checksum and header match are
/// kept. Throws ContractError for an empty lattice or when `dir` holds a
/// bake of a different job.
BakeReport bake_lattice(const BakeJob& job, const std::filesystem::path& dir, const LogFn& log = {});

Manifest read_manifest(const std::filesystem::path& dir);

/// Load slices and maps listed by the manifest (densities attached). Throws
/// Error with a hint when the directory is not a bake or a file is corrupt.
std::vector<BakedEntry> load_bake(const std::filesystem::path& dir);

struct TrainJob {
  std::vector<NetKind> nets{NetKind::Sample, NetKind::Eval, NetKind::Pdf};
  TrainConfig config;
  DatasetOptions data;
};

struct TrainedNet {
  NetKind kind;
  MlpWeights weights;
  std::vector<LossPoint> curve;
};

std::vector<TrainedNet> train_networks(const std::vector<BakedEntry>& entries, const TrainJob& job,
                                       const LogFn& log = {});

/// <dir>/<kind>.mlp and <dir>/loss_<kind>.csv.
void save_trained(const std::filesystem::path& dir, const std::vector<TrainedNet>& nets);
/// Reads sample.mlp, eval.mlp and pdf.mlp from `dir`.
NeuralBsdf load_neural(const std::filesystem::path& dir);

}  // namespace impbake
