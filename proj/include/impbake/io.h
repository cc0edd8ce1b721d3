#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "impbake/importance_map.h"
#include "impbake/slice.h"

namespace impbake {

// Slice and map files share one layout: eight text header lines
//
//   IBSLICE | IBMAP
//   version 2
//   resolution N
//   domain hemisphere|sphere
//   params <kind> <model> <r0 r g b> <alpha_x> <alpha_y> <eta>
//   wi <x> <y> <z>
//   noise_target <v>
//   checksum <crc32 of the payload, 8 hex digits>
//
// followed by a little-endian float32 payload: (r, g, b, density) per texel
// for slices, (u, v, sw_r, sw_g, sw_b) per texel for maps.

inline constexpr int kFormatVersion = 2;

void write_slice(const std::filesystem::path& path, const SliceImage& slice);
SliceImage read_slice(const std::filesystem::path& path);

void write_map(const std::filesystem::path& path, const ImportanceMap& map);
/// The map file has no density; map_pdf needs attach_density afterwards.
ImportanceMap read_map(const std::filesystem::path& path);
void attach_density(ImportanceMap& map, const SliceImage& slice);

/// True when the file exists, parses and its payload matches the checksum.
bool verify_file(const std::filesystem::path& path);

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes);
std::uint32_t crc32_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Images

struct Image {
  int width = 0, height = 0;
  std::vector<Rgb> pixels;  // row-major, top row first

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h) {}
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// 8-bit sRGB PNG. Values are clamped to [0,1]; `srgb` applies the sRGB
/// transfer curve first (off for data images such as map previews).
void write_png(const std::filesystem::path& path, const Image& image, bool srgb = true);

void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// Binary (P5) or ASCII (P2) graymap, values scaled to [0,1].
Image read_pgm(const std::filesystem::path& path);

/// Map preview with (r, g, b) = (u, v, 0); square row t = 0 at the bottom.
Image map_preview(const ImportanceMap& map);
/// Slice preview: rgb scaled by its maximum, t = 0 at the bottom.
Image slice_preview(const SliceImage& slice);

}  // namespace impbake
