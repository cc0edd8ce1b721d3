#include "impbake/io.h"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "impbake/error.h"

namespace impbake {

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto len = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, len);
    done += len;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return crc32_bytes(data);
}

namespace {

void put_f32(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(bits >> (8 * k)));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

struct Header {
  std::string magic;
  int version = 0;
  int resolution = 0;
  Domain domain = Domain::Hemisphere;
  BsdfParams params;
  Direction wi;
  double noise_target = 0.0;
  std::uint32_t checksum = 0;
};

std::string format_header(const Header& h) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << h.magic << '\n';
  os << "version " << h.version << '\n';
  os << "resolution " << h.resolution << '\n';
  os << "domain " << to_string(h.domain) << '\n';
  const BsdfParams& p = h.params;
  os << "params " << to_string(p.kind) << ' ' << to_string(p.model) << ' ' << p.r0.r << ' ' << p.r0.g << ' ' << p.r0.b
     << ' ' << p.alpha_x << ' ' << p.alpha_y << ' ' << p.eta << '\n';
  os << "wi " << h.wi.x << ' ' << h.wi.y << ' ' << h.wi.z << '\n';
  os << "noise_target " << h.noise_target << '\n';
  os << "checksum " << std::hex << std::setw(8) << std::setfill('0') << h.checksum << '\n';
  return os.str();
}

void write_file(const std::filesystem::path& path, Header h, const std::vector<unsigned char>& payload) {
  h.checksum = crc32_bytes(payload);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename, so an interrupted write never
  // leaves a truncated file under the final name.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    const std::string text = format_header(h);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string expect_line(std::istream& in, const std::string& key, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": truncated header");
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key) throw FormatError(path.string() + ": expected '" + key + "' header line, got '" + line + "'");
  std::string rest;
  std::getline(ls, rest);
  return rest;
}

Model parse_model(const std::string& s) {
  if (s == "single") return Model::SingleBounce;
  if (s == "multi") return Model::MultiBounce;
  throw FormatError("unknown model '" + s + "'");
}

Kind parse_kind(const std::string& s) {
  if (s == "conductor") return Kind::Conductor;
  if (s == "dielectric") return Kind::Dielectric;
  throw FormatError("unknown kind '" + s + "'");
}

Domain parse_domain(const std::string& s) {
  if (s == "hemisphere") return Domain::Hemisphere;
  if (s == "sphere") return Domain::Sphere;
  throw FormatError("unknown domain '" + s + "'");
}

// Reads the header and payload; verifies magic, version, size and checksum.
std::vector<unsigned char> read_file(const std::filesystem::path& path, const std::string& magic, int floats_per_texel,
                                     Header& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != magic) throw FormatError(path.string() + ": bad magic '" + line + "', expected " + magic);
  h.magic = magic;
  h.version = std::stoi(expect_line(in, "version", path));
  if (h.version != kFormatVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(h.version));
  h.resolution = std::stoi(expect_line(in, "resolution", path));
  if (h.resolution <= 0 || h.resolution > 1 << 14) throw FormatError(path.string() + ": bad resolution");
  {
    std::istringstream ls(expect_line(in, "domain", path));
    std::string d;
    ls >> d;
    h.domain = parse_domain(d);
  }
  {
    std::istringstream ls(expect_line(in, "params", path));
    std::string kind, model;
    ls >> kind >> model >> h.params.r0.r >> h.params.r0.g >> h.params.r0.b >> h.params.alpha_x >> h.params.alpha_y >>
        h.params.eta;
    if (!ls) throw FormatError(path.string() + ": malformed params line");
    h.params.kind = parse_kind(kind);
    h.params.model = parse_model(model);
  }
  {
    std::istringstream ls(expect_line(in, "wi", path));
    ls >> h.wi.x >> h.wi.y >> h.wi.z;
    if (!ls) throw FormatError(path.string() + ": malformed wi line");
  }
  h.noise_target = std::stod(expect_line(in, "noise_target", path));
  {
    std::istringstream ls(expect_line(in, "checksum", path));
    std::string hex;
    ls >> hex;
    h.checksum = static_cast<std::uint32_t>(std::stoul(hex, nullptr, 16));
  }
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = static_cast<std::size_t>(h.resolution) * h.resolution * floats_per_texel * 4;
  if (payload.size() != expected)
    throw FormatError(path.string() + ": payload has " + std::to_string(payload.size()) + " bytes, expected " +
                      std::to_string(expected));
  if (crc32_bytes(payload) != h.checksum) throw FormatError(path.string() + ": checksum mismatch");
  return payload;
}

}  // namespace

void write_slice(const std::filesystem::path& path, const SliceImage& slice) {
  std::vector<unsigned char> payload;
  payload.reserve(slice.rgb.size() * 16);
  for (std::size_t k = 0; k < slice.rgb.size(); ++k) {
    put_f32(payload, slice.rgb[k].r);
    put_f32(payload, slice.rgb[k].g);
    put_f32(payload, slice.rgb[k].b);
    put_f32(payload, slice.density[k]);
  }
  write_file(path, {"IBSLICE", kFormatVersion, slice.resolution, slice.domain, slice.params, slice.wi,
                    slice.noise_target, 0},
             payload);
}

SliceImage read_slice(const std::filesystem::path& path) {
  Header h;
  const auto payload = read_file(path, "IBSLICE", 4, h);
  SliceImage s;
  s.resolution = h.resolution;
  s.domain = h.domain;
  s.params = h.params;
  s.wi = h.wi;
  s.noise_target = h.noise_target;
  const int n = s.texel_count();
  s.rgb.resize(n);
  s.density.resize(n);
  for (int k = 0; k < n; ++k) {
    const unsigned char* p = payload.data() + static_cast<std::size_t>(k) * 16;
    s.rgb[k] = Rgb(get_f32(p), get_f32(p + 4), get_f32(p + 8));
    s.density[k] = get_f32(p + 12);
  }
  return s;
}

void write_map(const std::filesystem::path& path, const ImportanceMap& map) {
  std::vector<unsigned char> payload;
  payload.reserve(map.uv.size() * 20);
  for (std::size_t k = 0; k < map.uv.size(); ++k) {
    put_f32(payload, map.uv[k].s);
    put_f32(payload, map.uv[k].t);
    put_f32(payload, map.sw[k].r);
    put_f32(payload, map.sw[k].g);
    put_f32(payload, map.sw[k].b);
  }
  write_file(path, {"IBMAP", kFormatVersion, map.resolution, map.domain, map.params, map.wi, map.noise_target, 0},
             payload);
}

ImportanceMap read_map(const std::filesystem::path& path) {
  Header h;
  const auto payload = read_file(path, "IBMAP", 5, h);
  ImportanceMap m;
  m.resolution = h.resolution;
  m.domain = h.domain;
  m.params = h.params;
  m.wi = h.wi;
  m.noise_target = h.noise_target;
  const int n = m.texel_count();
  m.uv.resize(n);
  m.sw.resize(n);
  for (int k = 0; k < n; ++k) {
    const unsigned char* p = payload.data() + static_cast<std::size_t>(k) * 20;
    m.uv[k] = {get_f32(p), get_f32(p + 4)};
    m.sw[k] = Rgb(get_f32(p + 8), get_f32(p + 12), get_f32(p + 16));
  }
  return m;
}

void attach_density(ImportanceMap& map, const SliceImage& slice) {
  if (slice.domain != map.domain) throw ContractError("attach_density: slice and map domains differ");
  map.density_resolution = slice.resolution;
  map.density = slice.density;
}

bool verify_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return false;
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::getline(in, magic);
  in.close();
  try {
    Header h;
    if (magic == "IBSLICE") read_file(path, magic, 4, h);
    else if (magic == "IBMAP") read_file(path, magic, 5, h);
    else return false;
    return true;
  } catch (const Error&) {
    return false;
  } catch (const std::exception&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

namespace {

double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image, bool srgb) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Rgb& c = image.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = srgb ? linear_to_srgb(c[ch]) : std::clamp(c[ch], 0.0, 1.0);
        row[x * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "PF\n" << image.width << ' ' << image.height << "\n-1\n";
  std::vector<unsigned char> buf;
  buf.reserve(image.pixels.size() * 12);
  // PFM stores the bottom row first.
  for (int y = image.height - 1; y >= 0; --y)
    for (int x = 0; x < image.width; ++x) {
      const Rgb& c = image.at(x, y);
      put_f32(buf, c.r);
      put_f32(buf, c.g);
      put_f32(buf, c.b);
    }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0)
    throw FormatError(path.string() + ": not a PFM file");
  const int channels = magic == "PF" ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw FormatError(path.string() + ": truncated PFM payload");
  const bool little = scale < 0;
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Rgb c;
      for (int ch = 0; ch < channels; ++ch) {
        unsigned char* p = buf.data() + ((static_cast<std::size_t>(y) * w + x) * channels + ch) * 4;
        if (!little) std::reverse(p, p + 4);
        c[ch] = get_f32(p);
      }
      if (channels == 1) c = Rgb(c.r);
      img.at(x, h - 1 - y) = c;
    }
  return img;
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  auto next_token = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw FormatError(path.string() + ": truncated PGM header");
  };
  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM file");
  const int w = std::stoi(next_token()), h = std::stoi(next_token()), maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError(path.string() + ": bad PGM header");
  Image img(w, h);
  if (magic == "P2") {
    for (auto& px : img.pixels) px = Rgb(std::stod(next_token()) / maxval);
    return img;
  }
  in.get();
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw FormatError(path.string() + ": truncated PGM payload");
  for (std::size_t k = 0; k < img.pixels.size(); ++k) {
    const int v = bytes == 1 ? buf[k] : (buf[2 * k] << 8 | buf[2 * k + 1]);
    img.pixels[k] = Rgb(static_cast<double>(v) / maxval);
  }
  return img;
}

Image map_preview(const ImportanceMap& map) {
  const int n = map.resolution;
  Image img(n, n);
  for (int k = 0; k < map.texel_count(); ++k) img.at(k % n, n - 1 - k / n) = Rgb(map.uv[k].s, map.uv[k].t, 0.0);
  return img;
}

Image slice_preview(const SliceImage& slice) {
  const int n = slice.resolution;
  double peak = 0.0;
  for (const Rgb& v : slice.rgb) peak = std::max(peak, v.max_component());
  Image img(n, n);
  for (int k = 0; k < slice.texel_count(); ++k)
    img.at(k % n, n - 1 - k / n) = peak > 0 ? slice.rgb[k] / peak : Rgb(0.0);
  return img;
}

}  // namespace impbake
