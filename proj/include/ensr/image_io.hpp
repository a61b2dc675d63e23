#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ensr/image.hpp"

namespace ensr {

// Raw container: 16-byte header ("ENSR", u32 height, u32 width, u32 reserved,
// all little-endian) followed by row-major little-endian f64 values. Complex
// grids store interleaved (re, im) pairs and set reserved = 1.

inline constexpr std::uint32_t kRawReal = 0;
inline constexpr std::uint32_t kRawComplex = 1;

void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path, double intensity_max = 1.0);

/// Generic matrix payload in the same container (used for dictionaries and
/// checkpoints).
struct RawMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;
};
void write_raw_matrix(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<double>& values);
RawMatrix read_raw_matrix(const std::filesystem::path& path);

void write_raw_complex(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                       const std::vector<std::complex<double>>& values);
std::vector<std::complex<double>> read_raw_complex(const std::filesystem::path& path,
                                                   std::uint32_t& rows, std::uint32_t& cols);

/// Binary 16-bit PGM; [0, intensity_max] is mapped onto [0, 65535].
void write_pgm16(const std::filesystem::path& path, const Image& img);
/// Reads 8- or 16-bit binary PGM into [0, 1].
Image read_pgm(const std::filesystem::path& path);

/// Picks read_raw or read_pgm from the file extension.
Image read_image(const std::filesystem::path& path);

/// Atomic-ish write: data goes to a temp file that is renamed into place.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ensr
