#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace impbake {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvPi = 0.31830988618379067154;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kFourPi = 4.0 * kPi;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3& v) { return v / length(v); }

/// Mirror `v` about the unit normal `n`.
inline Vec3 reflect(const Vec3& v, const Vec3& n) { return 2.0 * dot(v, n) * n - v; }

/// Unit vector in the local shading frame (normal = +z). The type itself does
/// not enforce unit length; operations that require it check explicitly.
using Direction = Vec3;

/// Orthonormal frame with `n` as its third axis.
struct Frame {
  Vec3 s, t, n;

  /// Frame whose first axis is `tangent` projected orthogonally to `normal`.
  static Frame from_normal_tangent(const Vec3& normal, const Vec3& tangent);
  /// Arbitrary (but deterministic) frame around `normal`.
  static Frame from_normal(const Vec3& normal);

  Vec3 to_local(const Vec3& v) const { return {dot(v, s), dot(v, t), dot(v, n)}; }
  Vec3 to_world(const Vec3& v) const { return s * v.x + t * v.y + n * v.z; }
};

struct SquareCoord {
  double s = 0, t = 0;
  constexpr bool operator==(const SquareCoord&) const = default;
};

/// Linear RGB triple. Used both for radiance and for BSDF values.
struct Rgb {
  double r = 0, g = 0, b = 0;

  constexpr Rgb() = default;
  constexpr Rgb(double r_, double g_, double b_) : r(r_), g(g_), b(b_) {}
  constexpr explicit Rgb(double v) : r(v), g(v), b(v) {}

  constexpr Rgb operator+(const Rgb& o) const { return {r + o.r, g + o.g, b + o.b}; }
  constexpr Rgb operator-(const Rgb& o) const { return {r - o.r, g - o.g, b - o.b}; }
  constexpr Rgb operator*(const Rgb& o) const { return {r * o.r, g * o.g, b * o.b}; }
  constexpr Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
  constexpr Rgb operator/(double s) const { return {r / s, g / s, b / s}; }
  Rgb& operator+=(const Rgb& o) { r += o.r; g += o.g; b += o.b; return *this; }
  Rgb& operator*=(const Rgb& o) { r *= o.r; g *= o.g; b *= o.b; return *this; }
  Rgb& operator*=(double s) { r *= s; g *= s; b *= s; return *this; }
  constexpr bool operator==(const Rgb&) const = default;

  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
  double& operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }

  constexpr double luminance() const { return 0.2126 * r + 0.7152 * g + 0.0722 * b; }
  constexpr double average() const { return (r + g + b) / 3.0; }
  constexpr double max_component() const {
    return r > g ? (r > b ? r : b) : (g > b ? g : b);
  }
  constexpr bool is_black() const { return r == 0 && g == 0 && b == 0; }
  bool is_finite() const { return std::isfinite(r) && std::isfinite(g) && std::isfinite(b); }
};

constexpr Rgb operator*(double s, const Rgb& c) { return c * s; }

// ---------------------------------------------------------------------------
// Square <-> direction parameterizations

/// Hemisphere: the whole unit square maps onto z >= 0.
/// Sphere: t < 0.5 is the upper (reflection) hemisphere, t >= 0.5 the lower
/// (refraction) hemisphere; each half is the hemisphere map squeezed in t.
enum class Domain : std::uint8_t { Hemisphere = 0, Sphere = 1 };

const char* to_string(Domain d);

/// Solid angle covered by the domain (2 pi or 4 pi).
constexpr double domain_solid_angle(Domain d) { return d == Domain::Hemisphere ? kTwoPi : kFourPi; }

/// Equal-area map from [0,1]^2 onto the domain. The hemisphere part is the
/// concentric square-to-disk map followed by the Lambert azimuthal lift
/// z = 1 - r^2, so every cell keeps its relative area.
Direction square_to_direction(SquareCoord c, Domain domain);

/// Exact inverse of square_to_direction. Throws ContractError when `d` is not
/// unit length (tolerance 1e-6) or lies on the wrong side for a hemisphere.
SquareCoord direction_to_square(const Direction& d, Domain domain);

/// Convert a density per unit square area into a density per steradian.
/// The map is equal-area, so the factor is the constant 1/(2 pi) or 1/(4 pi).
constexpr double pdf_square_to_solid_angle(double p_sq, SquareCoord /*c*/, Domain domain) {
  return p_sq / domain_solid_angle(domain);
}

/// The square coordinate the +z pole maps to.
constexpr SquareCoord pole_coord(Domain d) {
  return d == Domain::Hemisphere ? SquareCoord{0.5, 0.5} : SquareCoord{0.5, 0.25};
}

// Concentric (Shirley-Chiu) map between [-1,1]^2 and the unit disk.
std::array<double, 2> concentric_square_to_disk(double a, double b);
std::array<double, 2> concentric_disk_to_square(double x, double y);

// ---------------------------------------------------------------------------
// Deterministic random numbers

/// PCG32 stream. A stream is fully determined by (seed, stream_id), so work
/// items that own their stream reproduce identically under any scheduling.
class Rng {
 public:
  Rng() : Rng(0, 0) {}
  Rng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint32_t next_u32();
  /// Uniform double in [0, 1).
  double uniform();
  SquareCoord uniform2() {
    const double s = uniform();
    return {s, uniform()};
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
};

/// splitmix64 finalizer; used to derive stream ids from structured keys.
std::uint64_t mix_bits(std::uint64_t v);

/// Stream id for a (job, sub-index) pair.
inline std::uint64_t stream_key(std::uint64_t a, std::uint64_t b) {
  return mix_bits(a * 0x9E3779B97F4A7C15ull + mix_bits(b + 0x632BE59BD9B4E019ull));
}

}  // namespace impbake
