#include "omad/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace omad {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float required");

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, std::uint64_t base) : in_(in), offset_(base) {}

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw FormatError("truncated weight data at offset " + std::to_string(offset_ + got) +
                        " while reading " + what);
    }
    offset_ += n;
  }

  template <typename T>
  T le(const char* what) {
    unsigned char bytes[sizeof(T)];
    read(bytes, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_;
};

}  // namespace

void write_weights(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kWeightMagic, sizeof(kWeightMagic));
  put_le<std::uint32_t>(out, kWeightFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ContractError("tensor name too long: " + t.name.substr(0, 32));
    }
    if (t.tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw ContractError("tensor rank too large: " + t.name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.tensor.data()) put_le<float>(out, v);
  }
  if (!out) throw IoError("failed writing weight data");
}

std::vector<NamedTensor> read_weights(std::istream& in, std::uint64_t base_offset) {
  Reader r(in, base_offset);
  char magic[4];
  const std::uint64_t magic_at = r.offset();
  r.read(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0) {
    throw FormatError("bad magic at offset " + std::to_string(magic_at));
  }
  const std::uint64_t version_at = r.offset();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version) + " at offset " +
                      std::to_string(version_at));
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.le<std::uint16_t>("name length");
    std::string name(name_len, '\0');
    r.read(name.data(), name_len, "name");
    const auto rank = r.le<std::uint8_t>("rank");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& d : shape) {
      d = r.le<std::uint32_t>("dimension");
      elements *= d;
    }
    if (elements > (std::uint64_t{1} << 32)) {
      throw FormatError("implausible tensor size for " + name + " at offset " +
                        std::to_string(r.offset()));
    }
    std::vector<float> values(static_cast<std::size_t>(elements));
    for (float& v : values) v = r.le<float>("tensor elements");
    out.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace omad
