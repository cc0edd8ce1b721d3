#include "impbake/core_math.h"

#include <algorithm>
#include <string>

#include "impbake/error.h"

namespace impbake {

Frame Frame::from_normal_tangent(const Vec3& normal, const Vec3& tangent) {
  const Vec3 n = normalize(normal);
  Vec3 s = tangent - n * dot(n, tangent);
  const double len = length(s);
  if (!(len > 1e-9)) return from_normal(n);
  s = s / len;
  return {s, cross(n, s), n};
}

Frame Frame::from_normal(const Vec3& normal) {
  // Duff et al. 2017, branchless orthonormal basis.
  const Vec3 n = normalize(normal);
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double b = n.x * n.y * a;
  const Vec3 s{1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x};
  const Vec3 t{b, sign + n.y * n.y * a, -n.y};
  return {s, t, n};
}

const char* to_string(Domain d) { return d == Domain::Hemisphere ? "hemisphere" : "sphere"; }

std::array<double, 2> concentric_square_to_disk(double a, double b) {
  if (a == 0 && b == 0) return {0.0, 0.0};
  double r, phi;
  if (std::abs(a) > std::abs(b)) {
    r = a;
    phi = (kPi / 4) * (b / a);
  } else {
    r = b;
    phi = kPi / 2 - (kPi / 4) * (a / b);
  }
  return {r * std::cos(phi), r * std::sin(phi)};
}

std::array<double, 2> concentric_disk_to_square(double x, double y) {
  const double rho = std::hypot(x, y);
  if (rho == 0) return {0.0, 0.0};
  double theta = std::atan2(y, x);
  if (theta < -kPi / 4) theta += kTwoPi;  // theta in [-pi/4, 7pi/4)
  double a, b;
  if (theta <= kPi / 4) {
    a = rho;
    b = rho * theta * (4 / kPi);
  } else if (theta <= 3 * kPi / 4) {
    b = rho;
    a = rho * (kPi / 2 - theta) * (4 / kPi);
  } else if (theta <= 5 * kPi / 4) {
    a = -rho;
    b = a * (theta - kPi) * (4 / kPi);
  } else {
    b = -rho;
    a = b * (kPi / 2 - (theta - kPi)) * (4 / kPi);
  }
  return {a, b};
}

namespace {

Direction square_to_upper_hemisphere(double s, double t) {
  const auto [x, y] = concentric_square_to_disk(2 * s - 1, 2 * t - 1);
  const double r2 = std::min(1.0, x * x + y * y);
  const double scale = std::sqrt(2 - r2);
  return {x * scale, y * scale, 1 - r2};
}

SquareCoord upper_hemisphere_to_square(const Direction& d) {
  const double z = std::clamp(std::abs(d.z), 0.0, 1.0);
  const double k = 1.0 / std::sqrt(1 + z);
  const auto [a, b] = concentric_disk_to_square(d.x * k, d.y * k);
  return {std::clamp(0.5 * (a + 1), 0.0, 1.0), std::clamp(0.5 * (b + 1), 0.0, 1.0)};
}

}  // namespace

Direction square_to_direction(SquareCoord c, Domain domain) {
  if (domain == Domain::Hemisphere) return square_to_upper_hemisphere(c.s, c.t);
  if (c.t < 0.5) return square_to_upper_hemisphere(c.s, 2 * c.t);
  Direction d = square_to_upper_hemisphere(c.s, 2 * c.t - 1);
  d.z = -d.z;
  return d;
}

SquareCoord direction_to_square(const Direction& d, Domain domain) {
  const double len = length(d);
  if (!(std::abs(len - 1) <= 1e-6))
    throw ContractError("direction_to_square: non-unit direction (|d| = " + std::to_string(len) + ")");
  if (domain == Domain::Hemisphere) {
    if (d.z < -1e-9) throw ContractError("direction_to_square: direction below the hemisphere");
    return upper_hemisphere_to_square(d);
  }
  SquareCoord c = upper_hemisphere_to_square(d);
  if (d.z >= 0) {
    c.t *= 0.5;
  } else {
    c.t = 0.5 + 0.5 * c.t;
  }
  return c;
}

// ---------------------------------------------------------------------------

std::uint64_t mix_bits(std::uint64_t v) {
  v ^= v >> 31;
  v *= 0x7fb5d329728ea185ull;
  v ^= v >> 27;
  v *= 0x81dadef4bc2dd44dull;
  v ^= v >> 33;
  return v;
}

namespace {
constexpr std::uint64_t kPcgMult = 0x5851f42d4c957f2dull;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
  state_ = 0u;
  inc_ = (mix_bits(stream_id) << 1u) | 1u;
  next_u32();
  state_ += mix_bits(seed ^ 0xda3e39cb94b95bdbull);
  next_u32();
}

std::uint32_t Rng::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * kPcgMult + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
}

double Rng::uniform() { return next_u32() * 0x1p-32; }

}  // namespace impbake
