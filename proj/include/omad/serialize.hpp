#pragma once

// Flat binary weight section:
//   "OMAD" | version u32 | count u32 |
//   per tensor: name_len u16, UTF-8 name, rank u8, dims u32[rank], f32[prod(dims)]
// All integers and floats little-endian.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "omad/tensor.hpp"

namespace omad {

inline constexpr char kWeightMagic[4] = {'O', 'M', 'A', 'D'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

void write_weights(std::ostream& out, const std::vector<NamedTensor>& tensors);

// base_offset is added to reported offsets when the section is embedded in a
// larger file. Throws FormatError naming the offset of the first bad byte.
std::vector<NamedTensor> read_weights(std::istream& in, std::uint64_t base_offset = 0);

}  // namespace omad
