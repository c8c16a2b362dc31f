#include "msnet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace msnet {

static_assert(std::endian::native == std::endian::little,
              "container IO assumes a little-endian host");

namespace {
void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

void write_tensor_container(const std::string& path,
                            const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("MSNW", 4);
  put_u32(os, 1);
  for (const auto& t : tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) {
      put_u32(os, d);
      count *= d;
    }
    if (count != t.values.size()) {
      throw std::logic_error("tensor dims do not match payload: " + t.name);
    }
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * 4));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<NamedTensor> read_tensor_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MSNW", 4) != 0) {
    throw std::runtime_error("not a model container: " + path);
  }
  const std::uint32_t version = get_u32(is);
  if (version != 1) {
    throw std::runtime_error("unsupported container version in " + path);
  }
  std::vector<NamedTensor> out;
  while (true) {
    std::uint32_t name_len = get_u32(is);
    if (!is || is.eof()) break;
    NamedTensor t;
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    std::size_t count = 1;
    t.dims.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims[i] = get_u32(is);
      count *= t.dims[i];
    }
    t.values.resize(count);
    is.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(count * 4));
    if (!is) throw std::runtime_error("truncated model container: " + path);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace msnet
