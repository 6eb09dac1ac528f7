#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protofew/num/tensor.hpp"

namespace protofew::num {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Little-endian layout: "PFT1", then for each record
//   u32 name_length, name bytes, u32 rank, u32 extent[rank], f32 payload.
// Records run to end of file.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& records);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over the encoded bytes, rendered as 16 hex digits.
std::string checkpoint_id(const std::vector<NamedTensor>& records);

}  // namespace protofew::num
