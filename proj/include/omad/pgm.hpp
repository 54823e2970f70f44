#pragma once

// Binary greymap (PGM "P5") reading and writing.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omad {

struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  // Row-major samples, each in [0, maxval].
  std::vector<std::uint16_t> pixels;
};

// 8-bit P5 with maxval 255.
std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels);
void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> pixels);

// Accepts comments in the header and maxval up to 65535 (two bytes per
// sample, big-endian). Throws FormatError.
GrayImage decode_pgm(std::string_view bytes);

// Throws IoError if the file cannot be read, FormatError if it is malformed.
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace omad
