#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace msnet {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

// "MSNW" + u32 version, then per tensor: u32 name length, UTF-8 name,
// u32 rank, u32 dims, raw little-endian f32 payload.
void write_tensor_container(const std::string& path,
                            const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_container(const std::string& path);

}  // namespace msnet
