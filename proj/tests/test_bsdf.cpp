#include <cmath>
#include <vector>

#include "doctest.h"
#include "impbake/bsdf.h"
#include "impbake/error.h"
#include "test_util.h"

using namespace impbake;
using testutil::integrate_directions;
using testutil::spherical;

namespace {

// Reference formulas written out independently of the library.
double ref_ndf(double ax, double ay, const Direction& h) {
  if (h.z <= 0) return 0.0;
  const double cos2 = h.z * h.z;
  const double sin2 = 1 - cos2;
  const double phi = std::atan2(h.y, h.x);
  const double e = sin2 / cos2 * (std::cos(phi) * std::cos(phi) / (ax * ax) + std::sin(phi) * std::sin(phi) / (ay * ay));
  return 1.0 / (kPi * ax * ay * cos2 * cos2 * (1 + e) * (1 + e));
}

double ref_lambda(double ax, double ay, const Direction& w) {
  const double a2 = (ax * ax * w.x * w.x + ay * ay * w.y * w.y) / (w.z * w.z);
  return 0.5 * (-1 + std::sqrt(1 + a2));
}

double ref_fresnel(double cos_i, double eta) {
  const double sin_t2 = (1 - cos_i * cos_i) / (eta * eta);
  if (sin_t2 >= 1) return 1.0;
  const double cos_t = std::sqrt(1 - sin_t2);
  const double rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
  const double rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
  return 0.5 * (rs * rs + rp * rp);
}

BsdfParams conductor(double ax, double ay, Rgb r0 = Rgb(0.9, 0.6, 0.3)) {
  BsdfParams p;
  p.r0 = r0;
  p.alpha_x = ax;
  p.alpha_y = ay;
  return p;
}

BsdfParams dielectric(double a, double eta) {
  BsdfParams p;
  p.kind = Kind::Dielectric;
  p.alpha_x = p.alpha_y = a;
  p.eta = eta;
  return p;
}

Direction random_upper(Rng& rng) {
  const double z = 0.05 + 0.95 * rng.uniform();
  const double phi = kTwoPi * rng.uniform();
  const double r = std::sqrt(1 - z * z);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Rgb albedo_single(const BsdfParams& p, const Direction& wi) {
  Rgb out;
  for (int c = 0; c < 3; ++c)
    out[c] = integrate_directions([&](const Direction& wo) { return eval_single(p, wi, wo)[c]; }, 800, 1600, 0.0,
                                  p.kind == Kind::Dielectric ? kPi : kPi / 2);
  return out;
}

}  // namespace

TEST_CASE("ggx ndf closed form at the normal") {
  for (double a : {0.05, 0.3, 1.0}) CHECK(ggx::ndf(a, a, {0, 0, 1}) == doctest::Approx(1.0 / (kPi * a * a)));
  CHECK(ggx::ndf(0.3, 0.3, {1, 0, 0}) == 0.0);
  CHECK(ggx::ndf(0.3, 0.3, {0, 0.6, -0.8}) == 0.0);
}

TEST_CASE("ggx ndf matches the reference and projects to one") {
  Rng rng(1, 1);
  for (int k = 0; k < 1000; ++k) {
    const Direction h = random_upper(rng);
    CHECK(ggx::ndf(0.2, 0.7, h) == doctest::Approx(ref_ndf(0.2, 0.7, h)).epsilon(1e-10));
  }
  for (double ax : {0.1, 0.5})
    for (double ay : {0.1, 0.5}) {
      const double proj =
          integrate_directions([&](const Direction& h) { return ggx::ndf(ax, ay, h) * h.z; }, 3000, 720);
      CHECK(proj == doctest::Approx(1.0).epsilon(5e-3));
    }
}

TEST_CASE("ggx anisotropy swap symmetry") {
  Rng rng(2, 2);
  for (int k = 0; k < 200; ++k) {
    const double theta = 1.4 * rng.uniform(), phi = kTwoPi * rng.uniform();
    const double d1 = ggx::ndf(0.15, 0.6, spherical(theta, phi));
    const double d2 = ggx::ndf(0.6, 0.15, spherical(theta, phi + kPi / 2));
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
  }
}

TEST_CASE("smith lambda and g2") {
  Rng rng(3, 3);
  for (int k = 0; k < 500; ++k) {
    const Direction wi = random_upper(rng), wo = random_upper(rng);
    const double li = ref_lambda(0.3, 0.8, wi), lo = ref_lambda(0.3, 0.8, wo);
    CHECK(ggx::lambda(0.3, 0.8, wi) == doctest::Approx(li).epsilon(1e-10));
    CHECK(ggx::g2_reflection(0.3, 0.8, wi, wo) == doctest::Approx(1.0 / (1 + li + lo)).epsilon(1e-10));
    CHECK(ggx::g1(0.3, 0.8, wi) == doctest::Approx(1.0 / (1 + li)).epsilon(1e-10));
  }
}

TEST_CASE("dielectric fresnel") {
  for (double c : {1.0, 0.8, 0.3, 0.05})
    for (double eta : {1.33, 1.5, 2.0, 1.0 / 1.5}) CHECK(fresnel_dielectric(c, eta) == doctest::Approx(ref_fresnel(c, eta)));
  CHECK(fresnel_dielectric(1.0, 1.5) == doctest::Approx(0.04));
  CHECK(fresnel_dielectric(0.1, 1.0 / 1.5) == 1.0);
}

TEST_CASE("eval_single factorizes into F G D") {
  const BsdfParams p = conductor(0.25, 0.5);
  Rng rng(4, 4);
  for (int k = 0; k < 1000; ++k) {
    const Direction wi = random_upper(rng), wo = random_upper(rng);
    const Direction h = normalize(wi + wo);
    const double g = 1.0 / (1 + ref_lambda(0.25, 0.5, wi) + ref_lambda(0.25, 0.5, wo));
    const double d = ref_ndf(0.25, 0.5, h);
    const double c = dot(wi, h);
    const double m = std::pow(1 - c, 5);
    const Rgb f = p.r0 + (Rgb(1.0) - p.r0) * m;
    const Rgb expected = f * (d * g / (4 * wi.z * wo.z) * wo.z);
    const Rgb got = eval_single(p, wi, wo);
    for (int ch = 0; ch < 3; ++ch) CHECK(got[ch] == doctest::Approx(expected[ch]).epsilon(1e-9));
  }
}

TEST_CASE("eval_single below the horizon and at grazing") {
  const BsdfParams p = conductor(0.3, 0.3);
  CHECK(eval_single(p, {0, 0, 1}, normalize(Vec3{0.3, 0, -1})).is_black());
  bool degenerate = false;
  CHECK(eval_single(p, {1, 0, 0}, {0, 0, 1}, &degenerate).is_black());
  CHECK(degenerate);
}

TEST_CASE("reciprocity") {
  Rng rng(5, 5);
  for (const BsdfParams& p : {conductor(0.1, 0.4), dielectric(0.3, 1.5)}) {
    for (int k = 0; k < 10000; ++k) {
      const Direction wi = random_upper(rng), wo = random_upper(rng);
      const Rgb a = eval_single(p, wi, wo) / wo.z;
      const Rgb b = eval_single(p, wo, wi) / wi.z;
      for (int c = 0; c < 3; ++c) REQUIRE(a[c] == doctest::Approx(b[c]).epsilon(1e-5));
    }
  }
}

TEST_CASE("single scattering loses energy") {
  for (double a : {0.1, 0.5, 1.0})
    for (double theta : {0.0, 0.7, 1.3}) {
      const Rgb alb = albedo_single(conductor(a, a, Rgb(1.0)), spherical(theta, 0.3));
      CHECK(alb.r < 1.0);
      CHECK(alb.r > 0.3);
    }
  const Rgb alb = albedo_single(dielectric(0.5, 1.5), spherical(0.7, 0.0));
  CHECK(alb.r < 1.0);
}

TEST_CASE("ndf sampling chi-square") {
  const BsdfParams p = conductor(0.3, 0.15);
  const Direction wi = spherical(0.9, 0.4);
  const int res = 32, n = 1000000;
  std::vector<double> observed(res * res + 1, 0.0), expected(res * res + 1, 0.0);
  Rng rng(6, 6);
  for (int k = 0; k < n; ++k) {
    const BsdfSample s = sample_ndf(p, wi, rng);
    if (s.wo.z <= 0 || s.absorbed()) {
      observed[res * res] += 1;
      continue;
    }
    const SquareCoord c = direction_to_square(normalize(s.wo), Domain::Hemisphere);
    const int i = std::min(res - 1, static_cast<int>(c.s * res));
    const int j = std::min(res - 1, static_cast<int>(c.t * res));
    observed[j * res + i] += 1;
  }
  // Expected bin masses by sub-cell quadrature of the reported pdf.
  const int sub = 8;
  double total = 0.0;
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) {
      double m = 0.0;
      for (int b = 0; b < sub; ++b)
        for (int a = 0; a < sub; ++a) {
          const SquareCoord c{(i + (a + 0.5) / sub) / res, (j + (b + 0.5) / sub) / res};
          m += pdf_ndf(p, wi, square_to_direction(c, Domain::Hemisphere));
        }
      m *= kTwoPi / (res * res * sub * sub);
      expected[j * res + i] = m * n;
      total += m;
    }
  CHECK(total < 1.0);
  expected[res * res] = (1.0 - total) * n;
  const auto chi = testutil::chi_square(observed, expected);
  INFO("chi2 = " << chi.statistic << " dof = " << chi.dof);
  CHECK(chi.p_value > 0.01);
}

TEST_CASE("vndf at normal incidence equals cosine-weighted ndf") {
  const BsdfParams p = conductor(0.4, 0.2);
  Rng rng(7, 7);
  for (int k = 0; k < 500; ++k) {
    const Direction wo = random_upper(rng);
    CHECK(pdf_vndf(p, {0, 0, 1}, wo) == doctest::Approx(pdf_ndf(p, {0, 0, 1}, wo)).epsilon(1e-9));
  }
}

TEST_CASE("sampler pdfs match their samples") {
  // Sampled directions binned on the square: each bin's hit rate must match
  // the quadrature of the reported pdf.
  for (bool vndf : {false, true}) {
    const BsdfParams p = dielectric(0.3, 1.5);
    const Direction wi = spherical(0.6, 1.0);
    const int res = 16, n = 400000;
    std::vector<double> observed(res * res + 1, 0.0), expected(res * res + 1, 0.0);
    Rng rng(8, vndf);
    for (int k = 0; k < n; ++k) {
      const BsdfSample s = vndf ? sample_vndf(p, wi, rng) : sample_ndf(p, wi, rng);
      if (s.absorbed() || !s.pdf) {
        observed[res * res] += 1;
        continue;
      }
      const SquareCoord c = direction_to_square(normalize(s.wo), Domain::Sphere);
      const int i = std::min(res - 1, static_cast<int>(c.s * res));
      const int j = std::min(res - 1, static_cast<int>(c.t * res));
      observed[j * res + i] += 1;
    }
    const int sub = 12;
    double total = 0.0;
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) {
        double m = 0.0;
        for (int b = 0; b < sub; ++b)
          for (int a = 0; a < sub; ++a) {
            const SquareCoord c{(i + (a + 0.5) / sub) / res, (j + (b + 0.5) / sub) / res};
            const Direction wo = square_to_direction(c, Domain::Sphere);
            m += vndf ? pdf_vndf(p, wi, wo) : pdf_ndf(p, wi, wo);
          }
        m *= kFourPi / (res * res * sub * sub);
        expected[j * res + i] = m * n;
        total += m;
      }
    expected[res * res] = std::max(0.0, 1.0 - total) * n;
    // Mass missing from the pdf is exactly the absorbed fraction.
    CHECK(total == doctest::Approx(1.0 - observed[res * res] / n).epsilon(5e-3));
    const auto chi = testutil::chi_square(observed, expected);
    INFO("vndf = " << vndf << " chi2 = " << chi.statistic << " dof = " << chi.dof);
    CHECK(chi.p_value > 0.01);
  }
}

TEST_CASE("vndf weights average to the albedo") {
  for (const BsdfParams& p : {conductor(0.3, 0.3), conductor(0.6, 0.1), dielectric(0.4, 1.5)}) {
    const Direction wi = spherical(0.8, 0.2);
    const Rgb albedo = albedo_single(p, wi);
    Rng rng(9, 9);
    Rgb sum;
    const int n = 400000;
    for (int k = 0; k < n; ++k) sum += sample_vndf(p, wi, rng).weight;
    for (int c = 0; c < 3; ++c) CHECK(sum[c] / n == doctest::Approx(albedo[c]).epsilon(5e-3));
  }
}

TEST_CASE("white furnace for the multiple-scattering conductor") {
  for (double a : {0.3, 0.6, 1.0}) {
    const BsdfParams p = [&] {
      BsdfParams q = conductor(a, a, Rgb(1.0));
      q.model = Model::MultiBounce;
      return q;
    }();
    const Direction wi = spherical(0.6, 0.0);
    Rng rng(10, static_cast<std::uint64_t>(a * 100));
    // Cosine-weighted wo with eval / pdf.
    double sum = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
      const SquareCoord u = rng.uniform2();
      const double r = std::sqrt(u.s), phi = kTwoPi * u.t;
      const Direction wo{r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(0.0, 1 - u.s))};
      if (wo.z <= 1e-9) continue;
      sum += eval_multi(p, wi, wo, rng).r / (wo.z / kPi);
    }
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));

    double weight = 0.0;
    WalkStats stats;
    const int m = 1000000;
    for (int k = 0; k < m; ++k) weight += sample_multi(p, wi, rng, kDefaultWalkCap, &stats).weight.r;
    CHECK(weight / m == doctest::Approx(1.0).epsilon(5e-3));
    CHECK(stats.walks == static_cast<std::uint64_t>(m));
  }
}

TEST_CASE("multiple scattering adds energy") {
  for (double a : {0.2, 0.7})
    for (Rgb r0 : {Rgb(1.0), Rgb(0.5, 0.7, 0.9)}) {
      BsdfParams single = conductor(a, a, r0);
      BsdfParams multi = single;
      multi.model = Model::MultiBounce;
      const Direction wi = spherical(1.0, 0.0);
      const Rgb a_single = albedo_single(single, wi);
      Rng rng(11, 11);
      Rgb a_multi;
      const int n = 200000;
      for (int k = 0; k < n; ++k) a_multi += sample_multi(multi, wi, rng).weight;
      a_multi = a_multi / n;
      for (int c = 0; c < 3; ++c) CHECK(a_multi[c] >= a_single[c] - 1e-3);
    }
}

TEST_CASE("eval_multi variance scales with walk count") {
  BsdfParams p = conductor(0.5, 0.5, Rgb(1.0));
  p.model = Model::MultiBounce;
  const Direction wi = spherical(0.5, 0.0), wo = spherical(0.7, 2.5);
  auto variance = [&](int walks) {
    Rng rng(12, walks);
    double s1 = 0.0, s2 = 0.0;
    const int n = 40000;
    for (int k = 0; k < n; ++k) {
      const double v = eval_multi(p, wi, wo, rng, walks).r;
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / n;
    return s2 / n - mean * mean;
  };
  CHECK(variance(16) / variance(4) == doctest::Approx(0.25).epsilon(0.2));
  Rng rng(0, 0);
  CHECK_THROWS_AS(eval_multi(p, wi, wo, rng, 0), ContractError);
}

TEST_CASE("random walk at low roughness concentrates at the mirror direction") {
  BsdfParams p = conductor(0.01, 0.01, Rgb(1.0));
  p.model = Model::MultiBounce;
  const Direction wi = spherical(0.5, 0.3);
  const Direction mirror{-wi.x, -wi.y, wi.z};
  // GGX half-vector tails: P(tan theta_h < t) = t^2 / (alpha^2 + t^2), so 99%
  // of half vectors lie within atan(alpha sqrt(99)) and the reflected
  // direction within twice that (plus a small margin for the off-normal wi).
  const double cone = 2.0 * std::atan(0.01 * std::sqrt(99.0)) * 1.1;
  const double two_deg = std::cos(2.0 * kPi / 180);
  Rng rng(13, 13);
  int inside = 0, walk_2deg = 0, vndf_2deg = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const Direction wo = sample_multi(p, wi, rng).wo;
    inside += dot(wo, mirror) >= std::cos(cone);
    walk_2deg += dot(wo, mirror) >= two_deg;
    vndf_2deg += dot(sample_vndf(p, wi, rng).wo, mirror) >= two_deg;
  }
  CHECK(inside >= 0.99 * n);
  // The walk's narrow-cone fraction follows the single-scattering lobe.
  CHECK(static_cast<double>(walk_2deg) / n == doctest::Approx(static_cast<double>(vndf_2deg) / n).epsilon(0.02));
}

TEST_CASE("params validation") {
  BsdfParams p = conductor(0.3, 0.3);
  CHECK_NOTHROW(p.validate());
  p.r0 = Rgb(1.2, 0, 0);
  CHECK_THROWS_AS(p.validate(), ContractError);
  BsdfParams d = dielectric(0.3, 3.0);
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("eta"), ContractError);
  CHECK(conductor(0.001, 2.0).clamped().alpha_x == kAlphaMin);
  CHECK(conductor(0.001, 2.0).clamped().alpha_y == kAlphaMax);
}
