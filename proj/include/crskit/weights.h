#pragma once

// weights.bin layout, all integers little-endian:
//
//   "RWZW"            magic, 4 bytes
//   u32 version       = 1
//   u32 count         number of tensors
//   count x {
//     u32 name_len, name bytes (UTF-8)
//     u8  dtype       0 = f32
//     u8  rank
//     u64 dims[rank]
//     f32 data[prod(dims)]   row-major
//   }

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crskit {

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

struct WeightsFile {
  std::vector<Tensor> tensors;

  const Tensor* find(const std::string& name) const;
  // Throws kMalformedWeights when missing.
  const Tensor& at(const std::string& name) const;
  bool operator==(const WeightsFile&) const = default;
};

inline constexpr std::uint32_t kWeightsVersion = 1;

std::string serialize_weights(const WeightsFile& w);
WeightsFile deserialize_weights(std::span<const std::uint8_t> bytes);
WeightsFile deserialize_weights(const std::string& bytes);

}  // namespace crskit
