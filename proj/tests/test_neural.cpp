#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "impbake/error.h"
#include "impbake/neural.h"
#include "test_util.h"

using namespace impbake;

namespace {

BsdfParams conductor(double ax, double ay) {
  BsdfParams p;
  p.r0 = Rgb(0.9, 0.6, 0.3);
  p.alpha_x = ax;
  p.alpha_y = ay;
  return p;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> random_batch(NetKind kind, int n, std::uint64_t seed) {
  Rng rng(seed, 7);
  Eigen::MatrixXd x(input_size(kind), n), y(output_size(kind), n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < x.rows(); ++r) x(r, c) = 2 * rng.uniform() - 1;
    for (int r = 0; r < y.rows(); ++r) y(r, c) = rng.uniform();
  }
  return {x, y};
}

struct Nudge {
  std::size_t layer = ~std::size_t{0};
  bool bias = false;
  int row = 0, col = 0;
  long double delta = 0;
};

// Independent scalar forward pass and loss in long double, with one
// parameter optionally offset.
long double reference_loss(const MlpTrainable& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Loss loss,
                           Nudge nudge = {}) {
  auto softplus = [](long double z) { return z > 40 ? z : std::log1p(std::exp(z)); };
  auto sigmoid = [](long double z) { return 1 / (1 + std::exp(-z)); };
  long double total = 0;
  for (int rec = 0; rec < x.cols(); ++rec) {
    std::vector<long double> a(x.rows());
    for (int k = 0; k < x.rows(); ++k) a[k] = x(k, rec);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      const auto& l = net.layers[li];
      std::vector<long double> z(l.weight.rows());
      for (int r = 0; r < l.weight.rows(); ++r) {
        long double v = l.bias[r];
        if (li == nudge.layer && nudge.bias && r == nudge.row) v += nudge.delta;
        for (int c = 0; c < l.weight.cols(); ++c) {
          long double w = l.weight(r, c);
          if (li == nudge.layer && !nudge.bias && r == nudge.row && c == nudge.col) w += nudge.delta;
          v += w * a[c];
        }
        switch (l.activation) {
          case Activation::Relu: v = v > 0 ? v : 0; break;
          case Activation::Softplus: v = softplus(v); break;
          case Activation::Sigmoid: v = sigmoid(v); break;
          case Activation::SampleHead: v = r < 2 ? sigmoid(v) : softplus(v); break;
          case Activation::Identity: break;
        }
        z[r] = v;
      }
      a = z;
    }
    for (int k = 0; k < y.rows(); ++k) {
      const long double d = a[k] - y(k, rec);
      total += loss == Loss::L1 ? std::abs(d) : (d / (y(k, rec) + 0.01L)) * (d / (y(k, rec) + 0.01L));
    }
  }
  return total / (x.cols() * y.rows());
}

BakedEntry small_entry(double ax, double ay, double theta, double phi, int points = 256) {
  BsdfParams p = conductor(ax, ay);
  TabulateOptions o;
  o.resolution = 16;
  BakedEntry e;
  e.slice = tabulate_slice(p, testutil::spherical(theta, phi), o);
  e.map = bake_slice(e.slice, points);
  return e;
}

}  // namespace

TEST_CASE("feature encoding") {
  const BsdfParams p = conductor(0.3, 0.2);
  const Direction wi = testutil::spherical(0.4, 0.3);
  const auto fs = encode_input(p, wi, {{0.25, 0.75}, {}}, NetKind::Sample);
  CHECK(fs.size() == 11);
  const auto fe = encode_input(p, wi, {{}, {0, 0.6, 0.8}}, NetKind::Eval);
  CHECK(fe.size() == 12);
  CHECK(encode_input(p, wi, {{}, {0, 0.6, 0.8}}, NetKind::Pdf) == fe);

  const DecodedInput d = decode_input(fs, NetKind::Sample);
  CHECK(d.r0 == p.r0);
  CHECK(d.alpha_x == p.alpha_x);
  CHECK(d.alpha_y == p.alpha_y);
  CHECK(d.eta == p.eta);
  CHECK(d.wi == wi);
  CHECK(d.extra.xi == SquareCoord{0.25, 0.75});
  CHECK(decode_input(fe, NetKind::Eval).extra.wo == Direction{0, 0.6, 0.8});

  BsdfParams bad = p;
  bad.alpha_x = -0.1;
  CHECK_THROWS_AS(encode_input(bad, wi, {}, NetKind::Eval), ContractError);
}

TEST_CASE("forward with zero parameters outputs the head activation of zero") {
  MlpTrainable net = init_mlp(NetKind::Sample, Kind::Conductor, Model::SingleBounce, {8, 8}, 1);
  for (auto& l : net.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Eigen::VectorXd y = forward(net, Eigen::VectorXd(Eigen::VectorXd::Ones(11)));
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));
  for (int k = 2; k < 5; ++k) CHECK(y[k] == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(forward(net, Eigen::VectorXd(Eigen::VectorXd::Ones(12))), ContractError);
}

TEST_CASE("identity activations reduce to a matrix product") {
  MlpTrainable net = init_mlp(NetKind::Eval, Kind::Conductor, Model::SingleBounce, {5, 4}, 3);
  for (auto& l : net.layers) {
    l.activation = Activation::Identity;
    l.bias.setRandom();
  }
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(12, -1, 1);
  Eigen::VectorXd want = x;
  for (const auto& l : net.layers) want = l.weight * want + l.bias;
  CHECK((forward(net, x) - want).norm() < 1e-12);
  const Eigen::MatrixXd batch = forward_batch(net, Eigen::MatrixXd(x));
  CHECK((batch.col(0) - want).norm() < 1e-12);
}

TEST_CASE("backprop matches central differences") {
  for (NetKind kind : {NetKind::Sample, NetKind::Eval, NetKind::Pdf}) {
    CAPTURE(std::string(to_string(kind)));
    MlpTrainable net = init_mlp(kind, Kind::Conductor, Model::SingleBounce, {64, 64, 64, 64}, 11);
    for (auto& l : net.layers) l.bias.setConstant(0.05);
    auto [x, y] = random_batch(kind, 16, 5);
    y.array() += 0.1;
    const Loss loss = default_loss(kind);
    const Gradient g = backward(net, x, y, loss);
    CHECK(g.loss == doctest::Approx(evaluate_loss(net, x, y, loss)).epsilon(1e-12));
    CHECK(g.loss == doctest::Approx(static_cast<double>(reference_loss(net, x, y, loss))).epsilon(1e-12));

    Rng rng(42, static_cast<int>(kind));
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t layer = std::min<std::size_t>(net.layers.size() - 1, rng.uniform() * net.layers.size());
      const bool bias = rng.uniform() < 0.2;
      const auto& l = net.layers[layer];
      const int r = static_cast<int>(rng.uniform() * l.weight.rows());
      const int c = bias ? 0 : static_cast<int>(rng.uniform() * l.weight.cols());
      const long double h = 1e-6L;
      const long double up = reference_loss(net, x, y, loss, {layer, bias, r, c, h});
      const long double down = reference_loss(net, x, y, loss, {layer, bias, r, c, -h});
      const double fd = static_cast<double>((up - down) / (2 * h));
      const double an = bias ? g.bias[layer][r] : g.weight[layer](r, c);
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-9});
      worst = std::max(worst, err);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient vanishes at a zero-loss point") {
  MlpTrainable net = init_mlp(NetKind::Pdf, Kind::Conductor, Model::SingleBounce, {16, 16}, 2);
  const auto [x, unused] = random_batch(NetKind::Pdf, 8, 3);
  const Eigen::MatrixXd y = forward_batch(net, x);
  const Gradient g = backward(net, x, y, Loss::RelativeL2);
  CHECK(g.loss == 0.0);
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    CHECK(g.weight[i].cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.bias[i].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a single record is overfit below 1e-8") {
  for (NetKind kind : {NetKind::Sample, NetKind::Eval, NetKind::Pdf}) {
    CAPTURE(to_string(kind));
    MlpTrainable net = init_mlp(kind, Kind::Conductor, Model::SingleBounce, {64, 64, 64, 64}, 9);
    const auto [x, y] = random_batch(kind, 1, 4);
    TrainConfig c;
    c.epochs = 1000;
    c.batch_size = 1;
    c.learning_rate = 1e-3;
    c.final_learning_rate = 1e-9;
    fit(net, x, y, default_loss(kind), c);
    CHECK(evaluate_loss(net, x, y, default_loss(kind)) < 1e-8);
  }
}

TEST_CASE("constant targets are learned exactly") {
  TrainingSet set = generate_dataset({small_entry(0.3, 0.2, 0.5, 0.2), small_entry(0.6, 0.6, 1.1, 0.9)}, NetKind::Eval);
  set.targets.setConstant(0.37);
  TrainConfig c;
  c.hidden = {32, 32};
  c.epochs = 3000;
  c.batch_size = 64;
  c.learning_rate = 1e-2;
  c.final_learning_rate = 1e-7;
  c.validate_every = 3000;
  const TrainResult r = train(set, Kind::Conductor, Model::SingleBounce, c);
  CHECK(r.curve.back().train_loss < 1e-8);
  CHECK(r.curve.back().validation_loss < 1e-8);
}

TEST_CASE("training is deterministic and independent of the thread count") {
  const auto [x, y] = random_batch(NetKind::Pdf, 300, 12);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 64;
  c.hidden = {16, 16};
  MlpTrainable a = init_mlp(NetKind::Pdf, Kind::Conductor, Model::SingleBounce, c.hidden, 1);
  MlpTrainable b = a, d = a;
  fit(a, x, y, Loss::RelativeL2, c);
  fit(b, x, y, Loss::RelativeL2, c);
  c.threads = 4;
  fit(d, x, y, Loss::RelativeL2, c);
  CHECK(a == b);
  CHECK(a == d);
}

TEST_CASE("divergence raises with the last good weights") {
  const auto [x, y] = random_batch(NetKind::Eval, 64, 2);
  TrainingSet set;
  set.kind = NetKind::Eval;
  set.features = x;
  set.targets = y;
  set.source.assign(64, 0);
  set.validation.assign(64, 0);
  TrainConfig c;
  c.hidden = {8};
  c.epochs = 20;
  set.features(3, 17) = std::numeric_limits<double>::quiet_NaN();
  try {
    const TrainResult r = train(set, Kind::Conductor, Model::SingleBounce, c);
    FAIL("expected divergence, final loss " << r.curve.back().train_loss);
  } catch (const TrainingDiverged& e) {
    CHECK(e.last_good.layers.size() == 2);
  }
}

TEST_CASE("weight files round trip bitwise") {
  const MlpWeights w = init_mlp(NetKind::Sample, Kind::Dielectric, Model::MultiBounce, {64, 64, 64, 64}, 5).cast<float>();
  const auto path = std::filesystem::temp_directory_path() / "impbake_test_weights.bin";
  save_weights(path, w);
  const MlpWeights r = load_weights(path);
  CHECK(r == w);
  CHECK(r.domain() == Domain::Sphere);
  const Eigen::VectorXf x = Eigen::VectorXf::LinSpaced(11, 0, 1);
  const Eigen::VectorXf a = forward(w, x), b = forward(r, x);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x55');
  }
  CHECK_THROWS_AS(load_weights(path), FormatError);
}

TEST_CASE("dataset record counts and targets") {
  std::vector<BakedEntry> entries{small_entry(0.3, 0.2, 0.5, 0.2), small_entry(0.5, 0.5, 1.0, 1.2)};
  DatasetOptions o;
  o.jitter_per_texel = 2;
  const TrainingSet s = generate_dataset(entries, NetKind::Sample, o);
  CHECK(s.size() == 2 * 256 * 3);
  CHECK(records_per_entry(entries[0], NetKind::Sample, o) == 768);
  const TrainingSet e = generate_dataset(entries, NetKind::Eval, o);
  CHECK(e.size() == 2 * 256);
  const TrainingSet p = generate_dataset(entries, NetKind::Pdf, o);
  CHECK(p.size() == 2 * 256);
  CHECK(s.source.front() == 0);
  CHECK(s.source.back() == 1);

  // Pdf targets are the map density at the encoded direction.
  for (int r = 0; r < p.size(); r += 37) {
    const ImportanceMap& m = entries[p.source[r]].map;
    const Direction wo{p.features(9, r), p.features(10, r), p.features(11, r)};
    CHECK(p.targets(0, r) == doctest::Approx(map_pdf(m, direction_to_square(wo, m.domain))));
  }
  // Sample targets at texel centers are the stored map values.
  const ImportanceMap& m0 = entries[0].map;
  CHECK(s.targets(0, 0) == doctest::Approx(m0.uv[0].s));
  CHECK(s.targets(3, 0) == doctest::Approx(m0.sw[0].g));

  long held = 0;
  for (auto v : s.validation) held += v;
  CHECK(held > 0.05 * s.size());
  CHECK(held < 0.15 * s.size());
}

TEST_CASE("mirrored incident directions are reduced to the first quadrant") {
  // An entry with wi in the third quadrant produces the same records as
  // its mirror image with wo mirrored.
  const BakedEntry a = small_entry(0.3, 0.15, 0.7, 0.4);
  const BakedEntry b = small_entry(0.3, 0.15, 0.7, 0.4 + kPi);
  const TrainingSet ea = generate_dataset({a}, NetKind::Eval), eb = generate_dataset({b}, NetKind::Eval);
  CHECK(ea.features.row(6).cwiseAbs().maxCoeff() >= 0);
  CHECK(eb.features.row(6).minCoeff() >= 0);
  CHECK(eb.features.row(7).minCoeff() >= 0);
}

TEST_CASE("neural eval below the horizon of a conductor is zero") {
  const MlpWeights w = init_mlp(NetKind::Eval, Kind::Conductor, Model::SingleBounce, {8}, 1).cast<float>();
  CHECK(neural_eval(w, conductor(0.3, 0.3), {0, 0, 1}, {0, 0.6, -0.8}).is_black());
  const MlpWeights s = init_mlp(NetKind::Sample, Kind::Conductor, Model::SingleBounce, {8}, 1).cast<float>();
  CHECK_THROWS_AS(neural_eval(s, conductor(0.3, 0.3), {0, 0, 1}, {0, 0.6, 0.8}), ContractError);
}

TEST_CASE("sample network reproduces a single importance map") {
  const BakedEntry e = small_entry(0.35, 0.25, 0.6, 0.5, 1024);
  DatasetOptions o;
  o.validation_fraction = 0.0;
  const TrainingSet set = generate_dataset({e}, NetKind::Sample, o);
  TrainConfig c;
  c.epochs = 150;
  c.batch_size = 128;
  c.learning_rate = 2e-3;
  c.final_learning_rate = 1e-5;
  const TrainResult r = train(set, Kind::Conductor, Model::SingleBounce, c);
  NeuralBsdf nets;
  nets.sample = r.weights;
  double err = 0.0;
  for (int k = 0; k < e.map.texel_count(); ++k) {
    const BsdfSample s = neural_sample(nets, e.map.params, e.map.wi, e.map.texel_center(k), false);
    const SquareCoord uv = direction_to_square(s.wo, Domain::Hemisphere);
    err += std::hypot(uv.s - e.map.uv[k].s, uv.t - e.map.uv[k].t);
  }
  err /= e.map.texel_count();
  MESSAGE("mean uv error " << err << " vs texel spacing " << 1.0 / e.map.resolution);
  CHECK(err < 1.0 / e.map.resolution);
}

TEST_CASE("halving the hidden width raises the validation loss") {
  std::vector<BakedEntry> entries;
  for (double a : {0.15, 0.25, 0.4, 0.6})
    for (double theta : {0.2, 0.6, 1.0}) entries.push_back(small_entry(a, 0.7 * a, theta, 0.4));
  const TrainingSet set = generate_dataset(entries, NetKind::Eval);
  double previous = 0.0;
  for (int width : {64, 32, 16}) {
    TrainConfig c;
    c.hidden = {width, width, width, width};
    c.epochs = 150;
    c.batch_size = 64;
    c.learning_rate = 3e-3;
    const TrainResult r = train(set, Kind::Conductor, Model::SingleBounce, c);
    const double val = r.curve.back().validation_loss;
    MESSAGE("width " << width << " train " << r.curve.back().train_loss << " validation loss " << val);
    CHECK(val > previous);
    previous = val;
  }
}
