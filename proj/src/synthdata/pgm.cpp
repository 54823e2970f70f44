#include "omad/pgm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "omad/error.hpp"

namespace omad {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(std::string("PGM ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("PGM header: missing ") + what);
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("PGM header: expected whitespace before raster");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ContractError("encode_pgm: pixel count does not match " + std::to_string(width) + "x" +
                        std::to_string(height));
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> pixels) {
  const std::string bytes = encode_pgm(width, height, pixels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing: " + path.string());
}

GrayImage decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("not a binary PGM (missing P5 magic)");
  }
  HeaderParser parser(bytes);
  parser.advance(2);
  GrayImage img;
  img.width = parser.number("width");
  img.height = parser.number("height");
  img.maxval = parser.number("maxval");
  if (img.width <= 0 || img.height <= 0) throw FormatError("PGM has zero size");
  if (img.maxval <= 0 || img.maxval > 65535) throw FormatError("PGM maxval out of range");
  parser.single_whitespace();

  const std::size_t count = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  const std::size_t bytes_per_sample = img.maxval < 256 ? 1 : 2;
  const std::size_t raster = count * bytes_per_sample;
  if (bytes.size() - parser.pos() < raster) {
    throw FormatError("PGM raster truncated: need " + std::to_string(raster) + " bytes, have " +
                      std::to_string(bytes.size() - parser.pos()));
  }
  img.pixels.resize(count);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + parser.pos());
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = bytes_per_sample == 1 ? data[i] : (unsigned{data[2 * i]} << 8) | data[2 * i + 1];
    if (v > static_cast<unsigned>(img.maxval)) throw FormatError("PGM sample exceeds maxval");
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_pgm(buf.str());
}

}  // namespace omad
