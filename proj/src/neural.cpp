#include "impbake/neural.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "impbake/io.h"
#include "impbake/parallel.h"

namespace impbake {

const char* to_string(NetKind k) {
  switch (k) {
    case NetKind::Sample: return "sample";
    case NetKind::Eval: return "eval";
    case NetKind::Pdf: return "pdf";
  }
  return "?";
}

NetKind net_kind_from_string(const std::string& s) {
  if (s == "sample") return NetKind::Sample;
  if (s == "eval") return NetKind::Eval;
  if (s == "pdf") return NetKind::Pdf;
  throw ContractError("unknown network kind '" + s + "' (expected sample, eval or pdf)");
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus: return "softplus";
    case Activation::SampleHead: return "sample_head";
  }
  return "?";
}

template <typename Scalar>
std::size_t BasicMlp<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename Scalar>
void BasicMlp<Scalar>::validate() const {
  if (layers.empty()) throw ContractError("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows())
      throw ContractError("layer " + std::to_string(i) + ": bias size does not match weight rows");
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows())
      throw ContractError("layer " + std::to_string(i) + ": input size does not match previous layer");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw ContractError("layer " + std::to_string(i) + ": non-finite parameter");
  }
  if (input_size() != impbake::input_size(kind) || output_size() != impbake::output_size(kind))
    throw ContractError(std::string("network shape does not match kind ") + to_string(kind));
}

template struct BasicMlp<float>;
template struct BasicMlp<double>;

MlpTrainable init_mlp(NetKind kind, Kind material, Model model, const std::vector<int>& hidden, std::uint64_t seed) {
  MlpTrainable net;
  net.kind = kind;
  net.material = material;
  net.model = model;
  std::vector<int> sizes{input_size(kind)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_size(kind));
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i + 1] <= 0) throw ContractError("hidden layer sizes must be positive");
    Rng rng(seed, stream_key(0x4d4c50, i));
    const bool last = i + 2 == sizes.size();
    const double bound = std::sqrt(6.0 / sizes[i]);
    MlpLayer<double> l;
    l.weight.resize(sizes[i + 1], sizes[i]);
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    l.bias = Eigen::VectorXd::Zero(sizes[i + 1]);
    if (last) {
      l.weight *= 0.1;
      l.activation = kind == NetKind::Sample ? Activation::SampleHead : Activation::Softplus;
      // Eval and pdf targets are mostly near zero; starting at softplus(-3)
      // keeps the first relative-error gradients moderate.
      if (kind != NetKind::Sample) l.bias.setConstant(-3.0);
    } else {
      l.activation = Activation::Relu;
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Features

std::vector<double> encode_input(const BsdfParams& params, const Direction& wi, const NetQuery& extra, NetKind which) {
  params.validate();
  std::vector<double> f{params.r0.r, params.r0.g, params.r0.b, params.alpha_x, params.alpha_y, params.eta,
                        wi.x,        wi.y,        wi.z};
  if (which == NetKind::Sample) {
    f.push_back(extra.xi.s);
    f.push_back(extra.xi.t);
  } else {
    f.push_back(extra.wo.x);
    f.push_back(extra.wo.y);
    f.push_back(extra.wo.z);
  }
  return f;
}

DecodedInput decode_input(std::span<const double> f, NetKind which) {
  if (static_cast<int>(f.size()) != input_size(which)) throw ContractError("decode_input: wrong feature count");
  DecodedInput d;
  d.r0 = Rgb(f[0], f[1], f[2]);
  d.alpha_x = f[3];
  d.alpha_y = f[4];
  d.eta = f[5];
  d.wi = {f[6], f[7], f[8]};
  if (which == NetKind::Sample) d.extra.xi = {f[9], f[10]};
  else d.extra.wo = {f[9], f[10], f[11]};
  return d;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename Scalar>
Scalar softplus(Scalar z) {
  return z > Scalar(20) ? z : std::log1p(std::exp(z));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

template <typename Derived>
void activate(Eigen::MatrixBase<Derived>& z, Activation a) {
  using Scalar = typename Derived::Scalar;
  switch (a) {
    case Activation::Identity: break;
    case Activation::Relu: z = z.cwiseMax(Scalar(0)); break;
    case Activation::Sigmoid: z = z.unaryExpr([](Scalar v) { return sigmoid(v); }); break;
    case Activation::Softplus: z = z.unaryExpr([](Scalar v) { return softplus(v); }); break;
    case Activation::SampleHead:
      z.topRows(2) = z.topRows(2).unaryExpr([](Scalar v) { return sigmoid(v); });
      z.bottomRows(z.rows() - 2) = z.bottomRows(z.rows() - 2).unaryExpr([](Scalar v) { return softplus(v); });
      break;
  }
}

// d activation / dz evaluated at pre-activation z.
double activation_slope(Activation a, int row, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return z > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = sigmoid(z);
      return s * (1 - s);
    }
    case Activation::Softplus: return sigmoid(z);
    case Activation::SampleHead: {
      const double s = sigmoid(z);
      return row < 2 ? s * (1 - s) : s;
    }
  }
  return 1.0;
}

}  // namespace

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> forward(const BasicMlp<Scalar>& net,
                                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& features) {
  if (features.size() != net.input_size())
    throw ContractError("forward: expected " + std::to_string(net.input_size()) + " features, got " +
                        std::to_string(features.size()));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = features;
  for (const auto& l : net.layers) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = l.weight * a + l.bias;
    activate(z, l.activation);
    a.swap(z);
  }
  return a;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward_batch(
    const BasicMlp<Scalar>& net, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& features) {
  if (features.rows() != net.input_size()) throw ContractError("forward_batch: feature dimension mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a = features;
  for (const auto& l : net.layers) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> z = l.weight * a;
    z.colwise() += l.bias;
    activate(z, l.activation);
    a.swap(z);
  }
  return a;
}

template Eigen::VectorXf forward(const MlpWeights&, const Eigen::VectorXf&);
template Eigen::VectorXd forward(const MlpTrainable&, const Eigen::VectorXd&);
template Eigen::MatrixXf forward_batch(const MlpWeights&, const Eigen::MatrixXf&);
template Eigen::MatrixXd forward_batch(const MlpTrainable&, const Eigen::MatrixXd&);

Gradient Gradient::zeros_like(const MlpTrainable& net) {
  Gradient g;
  for (const auto& l : net.layers) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

Gradient& Gradient::operator+=(const Gradient& o) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += o.weight[i];
    bias[i] += o.bias[i];
  }
  loss += o.loss;
  return *this;
}

namespace {

constexpr double kRelativeFloor = 0.01;

// Loss over a batch and its derivative with respect to the outputs.
double loss_and_slope(const Eigen::MatrixXd& y, const Eigen::MatrixXd& t, Loss loss, Eigen::MatrixXd* dy) {
  const double norm = 1.0 / static_cast<double>(y.size());
  if (loss == Loss::L1) {
    const Eigen::MatrixXd diff = y - t;
    if (dy) *dy = diff.unaryExpr([norm](double v) { return v > 0 ? norm : (v < 0 ? -norm : 0.0); });
    return diff.cwiseAbs().sum() * norm;
  }
  const Eigen::MatrixXd scale = (t.array() + kRelativeFloor).inverse().matrix();
  const Eigen::MatrixXd r = (y - t).cwiseProduct(scale);
  if (dy) *dy = (2.0 * norm) * r.cwiseProduct(scale);
  return r.squaredNorm() * norm;
}

}  // namespace

Gradient backward(const MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                  Loss loss) {
  if (features.rows() != net.input_size() || targets.rows() != net.output_size() ||
      features.cols() != targets.cols())
    throw ContractError("backward: dimension mismatch");
  const std::size_t n_layers = net.layers.size();
  std::vector<Eigen::MatrixXd> inputs(n_layers), pre(n_layers);
  Eigen::MatrixXd a = features;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = net.layers[i];
    inputs[i] = a;
    pre[i] = l.weight * a;
    pre[i].colwise() += l.bias;
    a = pre[i];
    activate(a, l.activation);
  }

  Gradient g;
  g.weight.resize(n_layers);
  g.bias.resize(n_layers);
  Eigen::MatrixXd delta;
  g.loss = loss_and_slope(a, targets, loss, &delta);
  for (std::size_t i = n_layers; i-- > 0;) {
    const auto& l = net.layers[i];
    for (int c = 0; c < delta.cols(); ++c)
      for (int r = 0; r < delta.rows(); ++r) delta(r, c) *= activation_slope(l.activation, r, pre[i](r, c));
    g.weight[i] = delta * inputs[i].transpose();
    g.bias[i] = delta.rowwise().sum();
    if (i > 0) delta = l.weight.transpose() * delta;
  }
  return g;
}

double evaluate_loss(const MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                     Loss loss) {
  if (features.cols() == 0) return 0.0;
  // Chunked so memory stays bounded on large sets.
  constexpr int kChunk = 8192;
  double sum = 0.0;
  for (Eigen::Index begin = 0; begin < features.cols(); begin += kChunk) {
    const Eigen::Index len = std::min<Eigen::Index>(kChunk, features.cols() - begin);
    const Eigen::MatrixXd y = forward_batch(net, Eigen::MatrixXd(features.middleCols(begin, len)));
    sum += loss_and_slope(y, targets.middleCols(begin, len), loss, nullptr) * static_cast<double>(len);
  }
  return sum / static_cast<double>(features.cols());
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<LatticePoint> make_lattice(const LatticeSpec& spec) {
  std::vector<LatticePoint> out;
  const std::vector<double> etas = spec.kind == Kind::Dielectric ? spec.eta : std::vector<double>{1.5};
  for (double eta : etas)
    for (double ax : spec.alpha_x)
      for (double ay : spec.alpha_y)
        for (double c : spec.cos_theta)
          for (double phi : spec.phi) {
            LatticePoint p;
            p.params.kind = spec.kind;
            p.params.model = spec.model;
            p.params.r0 = spec.r0;
            p.params.alpha_x = ax;
            p.params.alpha_y = ay;
            p.params.eta = eta;
            p.params.validate();
            if (!(c > 0 && c <= 1)) throw ContractError("lattice cos_theta must lie in (0, 1]");
            const double s = std::sqrt(std::max(0.0, 1 - c * c));
            p.wi = {s * std::cos(phi), s * std::sin(phi), c};
            out.push_back(p);
          }
  return out;
}

namespace {

// Mirror symmetry of the axis-aligned lobe: the networks only see incident
// directions with non-negative x and y.
struct Mirror {
  bool flip_x = false, flip_y = false;

  explicit Mirror(const Direction& wi) : flip_x(wi.x < 0), flip_y(wi.y < 0) {}
  Direction apply(const Direction& d) const { return {flip_x ? -d.x : d.x, flip_y ? -d.y : d.y, d.z}; }
};

bool is_validation(std::uint64_t seed, std::uint64_t record, double fraction) {
  return static_cast<double>(mix_bits(seed * 0x9E3779B97F4A7C15ull + record) >> 11) * 0x1.0p-53 < fraction;
}

}  // namespace

int records_per_entry(const BakedEntry& entry, NetKind which, const DatasetOptions& options) {
  switch (which) {
    case NetKind::Sample: return entry.map.texel_count() * (1 + options.jitter_per_texel);
    case NetKind::Eval: return entry.slice.texel_count();
    case NetKind::Pdf: return entry.map.density_resolution * entry.map.density_resolution;
  }
  return 0;
}

TrainingSet generate_dataset(const std::vector<BakedEntry>& entries, NetKind which, const DatasetOptions& options) {
  if (entries.empty()) throw ContractError("generate_dataset: no baked entries");
  TrainingSet set;
  set.kind = which;
  long total = 0;
  for (const auto& e : entries) total += records_per_entry(e, which, options);
  set.features.resize(input_size(which), total);
  set.targets.resize(output_size(which), total);
  set.source.resize(total);
  set.validation.resize(total);

  long r = 0;
  auto push = [&](int entry, const std::vector<double>& f, std::span<const double> t) {
    for (int k = 0; k < set.features.rows(); ++k) set.features(k, r) = f[k];
    for (int k = 0; k < set.targets.rows(); ++k) {
      if (!std::isfinite(t[k])) throw Error("generate_dataset: non-finite target");
      set.targets(k, r) = t[k];
    }
    set.source[r] = entry;
    set.validation[r] = is_validation(options.seed, r, options.validation_fraction) ? 1 : 0;
    ++r;
  };

  for (std::size_t e = 0; e < entries.size(); ++e) {
    const SliceImage& slice = entries[e].slice;
    const ImportanceMap& map = entries[e].map;
    const Mirror mirror(map.wi);
    const Direction wi = mirror.apply(map.wi);
    const BsdfParams& params = map.params;
    switch (which) {
      case NetKind::Sample: {
        Rng rng(options.seed, stream_key(0x53414d50, e));
        for (int k = 0; k < map.texel_count(); ++k) {
          for (int j = 0; j <= options.jitter_per_texel; ++j) {
            SquareCoord xi = map.texel_center(k);
            if (j > 0) {
              const SquareCoord u = rng.uniform2();
              xi = {(k % map.resolution + u.s) / map.resolution, (k / map.resolution + u.t) / map.resolution};
            }
            const MapQuery q = query(map, xi);
            SquareCoord uv = q.uv;
            if (mirror.flip_x || mirror.flip_y)
              uv = direction_to_square(mirror.apply(square_to_direction(uv, map.domain)), map.domain);
            const double t[5] = {uv.s, uv.t, q.sw.r, q.sw.g, q.sw.b};
            push(static_cast<int>(e), encode_input(params, wi, {xi, {}}, which), t);
          }
        }
        break;
      }
      case NetKind::Eval: {
        const double omega = domain_solid_angle(slice.domain);
        for (int k = 0; k < slice.texel_count(); ++k) {
          const Direction wo = mirror.apply(square_to_direction(slice.texel_center(k), slice.domain));
          const Rgb v = slice.rgb[k] / omega;
          const double t[3] = {v.r, v.g, v.b};
          push(static_cast<int>(e), encode_input(slice.params, wi, {{}, wo}, which), t);
        }
        break;
      }
      case NetKind::Pdf: {
        const int n = map.density_resolution;
        for (int k = 0; k < n * n; ++k) {
          const SquareCoord c{(k % n + 0.5) / n, (k / n + 0.5) / n};
          const Direction wo = mirror.apply(square_to_direction(c, map.domain));
          const double t[1] = {map_pdf(map, c)};
          push(static_cast<int>(e), encode_input(params, wi, {{}, wo}, which), t);
        }
        break;
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr int kShards = 8;

struct Adam {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  explicit Adam(const MlpTrainable& net) {
    const Gradient z = Gradient::zeros_like(net);
    mw = vw = z.weight;
    mb = vb = z.bias;
  }

  void step(MlpTrainable& net, const Gradient& g, double lr, const TrainConfig& c) {
    ++t;
    const double bc1 = 1 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1 - std::pow(c.beta2, static_cast<double>(t));
    auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
      m = c.beta1 * m + (1 - c.beta1) * grad;
      v = c.beta2 * v + (1 - c.beta2) * grad.cwiseAbs2();
      param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_epsilon);
    };
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      update(net.layers[i].weight, mw[i], vw[i], g.weight[i]);
      update(net.layers[i].bias, mb[i], vb[i], g.bias[i]);
    }
  }
};

// Gradient of a batch as the size-weighted sum of fixed shards, reduced in
// shard order so the result is independent of the thread count.
Gradient batch_gradient(const MlpTrainable& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Loss loss,
                        int threads) {
  const Eigen::Index n = x.cols();
  const int shards = static_cast<int>(std::min<Eigen::Index>(kShards, n));
  std::vector<Gradient> parts(shards);
  parallel_for(
      shards, threads,
      [&](std::int64_t s) {
        const Eigen::Index begin = n * s / shards, end = n * (s + 1) / shards;
        Gradient g = backward(net, x.middleCols(begin, end - begin), y.middleCols(begin, end - begin), loss);
        const double w = static_cast<double>(end - begin) / static_cast<double>(n);
        for (auto& m : g.weight) m *= w;
        for (auto& b : g.bias) b *= w;
        g.loss *= w;
        parts[s] = std::move(g);
      },
      1);
  Gradient total = std::move(parts[0]);
  for (int s = 1; s < shards; ++s) total += parts[s];
  return total;
}

}  // namespace

double fit(MlpTrainable& net, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, Loss loss,
           const TrainConfig& config, std::vector<LossPoint>* curve, const Eigen::MatrixXd* val_features,
           const Eigen::MatrixXd* val_targets) {
  const Eigen::Index n = features.cols();
  if (n == 0) throw ContractError("train: empty dataset");
  if (config.epochs <= 0 || config.batch_size <= 0) throw ContractError("train: epochs and batch size must be positive");
  const int batch = static_cast<int>(std::min<Eigen::Index>(config.batch_size, n));
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.epochs;
  const long hold_steps = static_cast<long>(std::clamp(config.hold_fraction, 0.0, 1.0) * total_steps);
  const long decay_steps = total_steps - hold_steps;
  const double decay = decay_steps > 1
                           ? std::pow(config.final_learning_rate / config.learning_rate, 1.0 / (decay_steps - 1))
                           : 1.0;

  Adam adam(net);
  MlpTrainable last_good = net;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd bx(features.rows(), batch), by(targets.rows(), batch);
  double lr = config.learning_rate;
  double epoch_loss = 0.0;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(config.seed, stream_key(0x45504f43, epoch));
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(i + 1))]);
    double sum = 0.0;
    for (Eigen::Index begin = 0; begin < n; begin += batch) {
      const Eigen::Index len = std::min<Eigen::Index>(batch, n - begin);
      bx.resize(Eigen::NoChange, len);
      by.resize(Eigen::NoChange, len);
      for (Eigen::Index c = 0; c < len; ++c) {
        bx.col(c) = features.col(order[begin + c]);
        by.col(c) = targets.col(order[begin + c]);
      }
      const Gradient g = batch_gradient(net, bx, by, loss, config.threads);
      sum += g.loss * static_cast<double>(len);
      adam.step(net, g, lr, config);
      ++step;
      if (step > hold_steps) lr *= decay;
    }
    epoch_loss = sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + " (loss is not finite)",
                             last_good.cast<float>());
    last_good = net;
    const bool report = (epoch + 1) % std::max(1, config.validate_every) == 0 || epoch + 1 == config.epochs;
    double val = std::nan("");
    if (report && val_features && val_features->cols() > 0)
      val = evaluate_loss(net, *val_features, *val_targets, loss);
    if (curve) curve->push_back({epoch, step, epoch_loss, val});
    if (config.on_epoch) config.on_epoch(epoch, epoch_loss, val);
  }
  return epoch_loss;
}

TrainResult train(const TrainingSet& data, Kind material, Model model, const TrainConfig& config) {
  if (data.size() == 0) throw ContractError("train: empty dataset");
  long n_val = 0;
  for (auto v : data.validation) n_val += v;
  const long n_train = data.size() - n_val;
  if (n_train == 0) throw ContractError("train: every record is in the validation split");
  Eigen::MatrixXd tx(data.features.rows(), n_train), ty(data.targets.rows(), n_train);
  Eigen::MatrixXd vx(data.features.rows(), n_val), vy(data.targets.rows(), n_val);
  for (long i = 0, a = 0, b = 0; i < data.size(); ++i) {
    if (data.validation[i]) {
      vx.col(b) = data.features.col(i);
      vy.col(b++) = data.targets.col(i);
    } else {
      tx.col(a) = data.features.col(i);
      ty.col(a++) = data.targets.col(i);
    }
  }
  MlpTrainable net = init_mlp(data.kind, material, model, config.hidden, config.seed);
  TrainResult result;
  fit(net, tx, ty, default_loss(data.kind), config, &result.curve, &vx, &vy);
  result.weights = net.cast<float>();
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(9);
  out << "epoch,step,train_loss,validation_loss\n";
  for (const auto& p : curve) out << p.epoch << ',' << p.step << ',' << p.train_loss << ',' << p.validation_loss << '\n';
}

// ---------------------------------------------------------------------------
// Inference

namespace {

Eigen::VectorXf run(const MlpWeights& net, const BsdfParams& params, const Direction& wi, const NetQuery& q) {
  const std::vector<double> f = encode_input(params, wi, q, net.kind);
  Eigen::VectorXf x(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) x[k] = static_cast<float>(f[k]);
  return forward(net, x);
}

void check_kind(const MlpWeights& net, NetKind want) {
  if (net.kind != want)
    throw ContractError(std::string("expected a ") + to_string(want) + " network, got " + to_string(net.kind));
}

}  // namespace

BsdfSample neural_sample(const NeuralBsdf& nets, const BsdfParams& params, const Direction& wi, SquareCoord xi,
                         bool with_pdf) {
  check_kind(nets.sample, NetKind::Sample);
  BsdfSample out;
  if (wi.z <= 0) return out;
  const Mirror mirror(wi);
  const Eigen::VectorXf y = run(nets.sample, params, mirror.apply(wi), {xi, {}});
  const SquareCoord uv{std::clamp<double>(y[0], 0.0, 1.0), std::clamp<double>(y[1], 0.0, 1.0)};
  out.wo = mirror.apply(square_to_direction(uv, nets.sample.domain()));
  out.weight = Rgb(y[2], y[3], y[4]);
  if (with_pdf) out.pdf = neural_pdf(nets.pdf, params, wi, out.wo);
  return out;
}

Rgb neural_eval(const MlpWeights& eval_net, const BsdfParams& params, const Direction& wi, const Direction& wo) {
  check_kind(eval_net, NetKind::Eval);
  if (wi.z <= 0 || (eval_net.domain() == Domain::Hemisphere && wo.z <= 0)) return Rgb(0.0);
  const Mirror mirror(wi);
  const Eigen::VectorXf y = run(eval_net, params, mirror.apply(wi), {{}, mirror.apply(wo)});
  return Rgb(y[0], y[1], y[2]);
}

double neural_pdf(const MlpWeights& pdf_net, const BsdfParams& params, const Direction& wi, const Direction& wo) {
  check_kind(pdf_net, NetKind::Pdf);
  if (wi.z <= 0 || (pdf_net.domain() == Domain::Hemisphere && wo.z <= 0)) return 0.0;
  const Mirror mirror(wi);
  return run(pdf_net, params, mirror.apply(wi), {{}, mirror.apply(wo)})[0];
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'I', 'B', 'M', 'L', 'P', '0', '0', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return v;
}

struct Reader {
  const std::vector<unsigned char>& data;
  std::size_t pos = 0;
  const std::filesystem::path& path;

  const unsigned char* take(std::size_t n) {
    if (pos + n > data.size()) throw FormatError(path.string() + ": truncated weight file");
    const unsigned char* p = data.data() + pos;
    pos += n;
    return p;
  }
  std::uint32_t u32() { return get_u32(take(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace

void save_weights(const std::filesystem::path& path, const MlpWeights& w) {
  w.validate();
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  out.push_back(static_cast<unsigned char>(w.kind));
  out.push_back(static_cast<unsigned char>(w.material));
  out.push_back(static_cast<unsigned char>(w.model));
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(w.layers.size()));
  for (const auto& l : w.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    put_u32(out, static_cast<std::uint32_t>(l.activation));
  }
  for (const auto& l : w.layers) {
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(l.weight(r, c)));
    for (int r = 0; r < l.bias.size(); ++r) put_u32(out, std::bit_cast<std::uint32_t>(l.bias[r]));
  }
  put_u32(out, crc32_bytes(out));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MlpWeights load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 20 || !std::equal(kMagic, kMagic + 8, data.begin()))
    throw FormatError(path.string() + ": not a weight file");
  if (crc32_bytes({data.data(), data.size() - 4}) != get_u32(data.data() + data.size() - 4))
    throw FormatError(path.string() + ": checksum mismatch");
  Reader in{data, 8, path};
  const unsigned char* tags = in.take(4);
  if (tags[0] > 2 || tags[1] > 1 || tags[2] > 1) throw FormatError(path.string() + ": bad header tags");
  MlpWeights w;
  w.kind = static_cast<NetKind>(tags[0]);
  w.material = static_cast<Kind>(tags[1]);
  w.model = static_cast<Model>(tags[2]);
  const std::uint32_t n_layers = in.u32();
  if (n_layers == 0 || n_layers > 64) throw FormatError(path.string() + ": bad layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const std::uint32_t n_in = in.u32(), n_out = in.u32(), act = in.u32();
    if (n_in == 0 || n_out == 0 || n_in > 1 << 16 || n_out > 1 << 16 || act > 4)
      throw FormatError(path.string() + ": bad layer header");
    MlpLayer<float> l;
    l.weight.resize(n_out, n_in);
    l.bias.resize(n_out);
    l.activation = static_cast<Activation>(act);
    w.layers.push_back(std::move(l));
  }
  for (auto& l : w.layers) {
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = in.f32();
    for (int r = 0; r < l.bias.size(); ++r) l.bias[r] = in.f32();
  }
  if (in.pos + 4 != data.size()) throw FormatError(path.string() + ": trailing bytes");
  try {
    w.validate();
  } catch (const ContractError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return w;
}

}  // namespace impbake
