#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "impbake/bsdf.h"
#include "impbake/error.h"
#include "impbake/importance_map.h"

namespace impbake {

enum class NetKind : std::uint8_t { Sample = 0, Eval = 1, Pdf = 2 };

const char* to_string(NetKind k);
NetKind net_kind_from_string(const std::string& s);

/// Per-layer activation. SampleHead squashes the first two outputs with a
/// sigmoid (u, v in [0,1]) and applies softplus to the rest (sw >= 0).
enum class Activation : std::uint8_t { Identity = 0, Relu = 1, Sigmoid = 2, Softplus = 3, SampleHead = 4 };

const char* to_string(Activation a);

/// Number of features and outputs per network kind.
constexpr int input_size(NetKind k) { return k == NetKind::Sample ? 11 : 12; }
constexpr int output_size(NetKind k) { return k == NetKind::Sample ? 5 : (k == NetKind::Eval ? 3 : 1); }

template <typename Scalar>
struct MlpLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Relu;

  bool operator==(const MlpLayer&) const = default;
};

/// Dense feed-forward network. The material family it was trained for
/// (kind, model) fixes the output domain of the sample network.
template <typename Scalar>
struct BasicMlp {
  NetKind kind = NetKind::Sample;
  Kind material = Kind::Conductor;
  Model model = Model::SingleBounce;
  std::vector<MlpLayer<Scalar>> layers;

  Domain domain() const { return material == Kind::Dielectric ? Domain::Sphere : Domain::Hemisphere; }
  int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_size() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;

  /// Throws ContractError when layer dimensions do not chain or a value is
  /// not finite.
  void validate() const;

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out;
    out.kind = kind;
    out.material = material;
    out.model = model;
    for (const auto& l : layers)
      out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
    return out;
  }

  bool operator==(const BasicMlp&) const = default;
};

/// Inference weights (float32, the serialized form).
using MlpWeights = BasicMlp<float>;
/// Training copy.
using MlpTrainable = BasicMlp<double>;

/// Hidden layers use ReLU; the output activation follows the kind (SampleHead
/// for Sample, Softplus for Eval and Pdf). He-uniform initialization.
MlpTrainable init_mlp(NetKind kind, Kind material, Model model, const std::vector<int>& hidden, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Features

/// Extra argument of the encoding: the two random numbers for Sample, the
/// outgoing direction for Eval and Pdf.
struct NetQuery {
  SquareCoord xi;
  Direction wo;
};

/// (R0 rgb, alpha_x, alpha_y, eta, wi xyz) followed by (xi0, xi1) for Sample
/// or wo xyz for Eval and Pdf. Validates params.
std::vector<double> encode_input(const BsdfParams& params, const Direction& wi, const NetQuery& extra, NetKind which);

struct DecodedInput {
  Rgb r0;
  double alpha_x, alpha_y, eta;
  Direction wi;
  NetQuery extra;
};
DecodedInput decode_input(std::span<const double> features, NetKind which);

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> forward(const BasicMlp<Scalar>& net,
                                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& features);

/// Columns are records.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward_batch(
    const BasicMlp<Scalar>& net, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& features);

/// L1: mean absolute error over outputs. RelativeL2: mean over outputs of
/// ((y - t) / (t + 0.01))^2.
enum class Loss : std::uint8_t { L1 = 0, RelativeL2 = 1 };
constexpr Loss default_loss(NetKind k) { return k == NetKind::Sample ? Loss::L1 : Loss::RelativeL2; }

/// Gradient with the same shape as the network parameters.
struct Gradient {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  double loss = 0.0;  ///< mean loss over the batch

  static Gradient zeros_like(const MlpTrainable& net);
  Gradient& operator+=(const Gradient& o);
};

/// Loss and exact gradient over a batch (columns of `features` / `targets`),
/// averaged over records.
Gradient backward(const MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, Loss loss);

double evaluate_loss(const MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                     Loss loss);

// ---------------------------------------------------------------------------
// Datasets

struct LatticePoint {
  BsdfParams params;
  Direction wi;
};

/// Cartesian lattice over roughness, incident direction and (dielectric) IOR.
/// wi azimuths lie in [0, pi/2]; the networks rely on the mirror symmetry
/// of the axis-aligned GGX lobe for the other quadrants.
struct LatticeSpec {
  Kind kind = Kind::Conductor;
  Model model = Model::MultiBounce;
  Rgb r0{1.0, 1.0, 1.0};
  std::vector<double> alpha_x{0.05, 0.1, 0.2, 0.35, 0.55, 0.8, 1.0};
  std::vector<double> alpha_y{0.05, 0.1, 0.2, 0.35, 0.55, 0.8, 1.0};
  std::vector<double> cos_theta{0.0625, 0.1875, 0.3125, 0.4375, 0.5625, 0.6875, 0.8125, 0.9375};
  std::vector<double> phi{0.0, 0.7853981633974483, 1.5707963267948966};
  std::vector<double> eta{1.33, 1.5, 2.0};  ///< ignored for conductors
};

std::vector<LatticePoint> make_lattice(const LatticeSpec& spec);

/// One baked lattice point.
struct BakedEntry {
  SliceImage slice;
  ImportanceMap map;
};

struct DatasetOptions {
  /// Extra uniformly jittered records per texel for Sample datasets.
  int jitter_per_texel = 1;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainingSet {
  NetKind kind = NetKind::Sample;
  Eigen::MatrixXd features;      // input_size x n
  Eigen::MatrixXd targets;       // output_size x n
  std::vector<int> source;       // lattice index per record
  std::vector<std::uint8_t> validation;  // 1 = held out for validation

  int size() const { return static_cast<int>(features.cols()); }
};

/// Sample: (eps, wi, xi) -> query(map, xi) at texel centers and jittered
/// points. Eval: (eps, wi, wo) -> f cos per steradian at slice texel
/// centers. Pdf: (eps, wi, wo) -> map_pdf at density texel centers.
TrainingSet generate_dataset(const std::vector<BakedEntry>& entries, NetKind which, const DatasetOptions& options = {});

/// Records per lattice point generate_dataset produces for this entry.
int records_per_entry(const BakedEntry& entry, NetKind which, const DatasetOptions& options);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::vector<int> hidden{64, 64, 64, 64};
  int epochs = 30;
  int batch_size = 256;
  double learning_rate = 1e-3;
  /// Learning rate at the final step. The rate holds for the first
  /// `hold_fraction` of the steps, then decays geometrically.
  double final_learning_rate = 1e-5;
  double hold_fraction = 0.5;
  double beta1 = 0.9, beta2 = 0.999, adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Worker threads for the gradient (0 = all cores). Results do not depend
  /// on it: every batch is split into a fixed number of shards whose
  /// gradients are summed in shard order.
  int threads = 1;
  /// Evaluate the validation loss every this many epochs (always at the end).
  int validate_every = 1;
  std::function<void(int epoch, double train_loss, double validation_loss)> on_epoch;
};

struct LossPoint {
  int epoch;
  long step;
  double train_loss;
  double validation_loss;
};

struct TrainResult {
  MlpWeights weights;
  std::vector<LossPoint> curve;
};

/// Raised when the loss becomes non-finite; carries the weights from the
/// last finite epoch.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, MlpWeights last_good) : Error(what), last_good(std::move(last_good)) {}
  MlpWeights last_good;
};

/// Mini-batch Adam with geometric learning-rate decay. Material family and
/// architecture come from `material`, `model` and the config.
TrainResult train(const TrainingSet& data, Kind material, Model model, const TrainConfig& config = {});

/// Lower-level loop on an existing network (used by train and by tests).
/// Returns the final training-set loss.
double fit(MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, Loss loss,
           const TrainConfig& config, std::vector<LossPoint>* curve = nullptr,
           const Eigen::MatrixXd* val_features = nullptr, const Eigen::MatrixXd* val_targets = nullptr);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

// ---------------------------------------------------------------------------
// Inference

/// The three networks of one material family.
struct NeuralBsdf {
  MlpWeights sample, eval, pdf;
};

/// Draw wo from the sample network. The weight is the predicted sampling
/// weight; the pdf comes from the pdf network when `with_pdf` is set.
BsdfSample neural_sample(const NeuralBsdf& nets, const BsdfParams& params, const Direction& wi, SquareCoord xi,
                         bool with_pdf = true);
/// f cos per steradian.
Rgb neural_eval(const MlpWeights& eval_net, const BsdfParams& params, const Direction& wi, const Direction& wo);
/// Density per steradian.
double neural_pdf(const MlpWeights& pdf_net, const BsdfParams& params, const Direction& wi, const Direction& wo);

// ---------------------------------------------------------------------------
// Serialization
//
// Little-endian binary: magic "IBMLP001", u8 net kind, u8 material kind,
// u8 model, u8 reserved, u32 layer count, per layer (u32 in, u32 out,
// u32 activation), then per layer the float32 weight matrix (row-major)
// followed by the bias, and finally the crc32 of everything before it.

void save_weights(const std::filesystem::path& path, const MlpWeights& weights);
MlpWeights load_weights(const std::filesystem::path& path);

}  // namespace impbake
