#include "ensr/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "ensr/error.hpp"

namespace ensr {
namespace {

constexpr std::array<char, 4> kMagic = {'E', 'N', 'S', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string encode(std::uint32_t rows, std::uint32_t cols, std::uint32_t kind,
                   const double* values, std::size_t count) {
  std::string out;
  out.reserve(16 + count * 8);
  out.append(kMagic.data(), kMagic.size());
  put_u32(out, rows);
  put_u32(out, cols);
  put_u32(out, kind);
  for (std::size_t i = 0; i < count; ++i) put_f64(out, values[i]);
  return out;
}

struct Decoded {
  std::uint32_t rows, cols, kind;
  std::vector<double> values;
};

Decoded decode(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw DataError(path.string() + ": not an ENSR raw container");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Decoded d{get_u32(p + 4), get_u32(p + 8), get_u32(p + 12), {}};
  const std::size_t per = d.kind == kRawComplex ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(d.rows) * d.cols * per;
  if (bytes.size() != 16 + count * 8)
    throw DataError(path.string() + ": payload size does not match header");
  d.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) d.values[i] = get_f64(p + 16 + 8 * i);
  return d;
}

}  // namespace

void write_raw(const std::filesystem::path& path, const Image& img) {
  write_all(path, encode(static_cast<std::uint32_t>(img.height()),
                         static_cast<std::uint32_t>(img.width()), kRawReal, img.values().data(),
                         img.size()));
}

Image read_raw(const std::filesystem::path& path, double intensity_max) {
  Decoded d = decode(path);
  if (d.kind != kRawReal) throw DataError(path.string() + ": expected a real-valued image");
  Image img(d.rows, d.cols, std::move(d.values), intensity_max);
  img.check_finite(path.string());
  return img;
}

void write_raw_matrix(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw DimensionError("write_raw_matrix: size mismatch for " + path.string());
  write_all(path, encode(rows, cols, kRawReal, values.data(), values.size()));
}

RawMatrix read_raw_matrix(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.kind != kRawReal) throw DataError(path.string() + ": expected a real matrix");
  return {d.rows, d.cols, std::move(d.values)};
}

void write_raw_complex(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                       const std::vector<std::complex<double>>& values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw DimensionError("write_raw_complex: size mismatch");
  write_all(path, encode(rows, cols, kRawComplex, reinterpret_cast<const double*>(values.data()),
                         values.size() * 2));
}

std::vector<std::complex<double>> read_raw_complex(const std::filesystem::path& path,
                                                   std::uint32_t& rows, std::uint32_t& cols) {
  Decoded d = decode(path);
  if (d.kind != kRawComplex) throw DataError(path.string() + ": expected a complex grid");
  rows = d.rows;
  cols = d.cols;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {d.values[2 * i], d.values[2 * i + 1]};
  return out;
}

void write_pgm16(const std::filesystem::path& path, const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                    "\n65535\n";
  const double l = img.intensity_max() > 0 ? img.intensity_max() : 1.0;
  for (double v : img.values()) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v / l, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(q >> 8));  // PGM is big-endian
    out.push_back(static_cast<char>(q & 0xff));
  }
  write_all(path, out);
}

Image read_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  std::istringstream hdr(bytes);
  auto next_token = [&]() {
    std::string tok;
    while (hdr >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(hdr, rest);
        continue;
      }
      return tok;
    }
    throw DataError(path.string() + ": truncated PGM header");
  };
  if (next_token() != "P5") throw DataError(path.string() + ": only binary PGM (P5) is supported");
  const std::size_t w = std::stoul(next_token());
  const std::size_t h = std::stoul(next_token());
  const unsigned long maxval = std::stoul(next_token());
  hdr.get();  // single whitespace before the raster
  const auto start = static_cast<std::size_t>(hdr.tellg());
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < start + w * h * bpp) throw DataError(path.string() + ": truncated raster");
  Image img(h, w, 1.0);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bpp == 2 ? (p[2 * i] << 8) | p[2 * i + 1] : p[i];
    img.values()[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm") return read_pgm(path);
  return read_raw(path);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_all(path, text);
}

}  // namespace ensr
