#include "mimatch/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mimatch {

static_assert(std::endian::native == std::endian::little,
              "MGCK I/O assumes a little-endian host");

namespace {

void put_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("MGCK: truncated file " + path);
  return v;
}

}  // namespace

void save_mgck(const std::string& path, const std::map<std::string, Tensor>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("MGCK: cannot open for write: " + path);
  out.write("MGCK", 4);
  put_u32(out, kMgckVersion);
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {  // std::map iterates in sorted order
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t.shape();
    put_u32(out, static_cast<uint32_t>(s.size()));
    for (int e : s) put_u32(out, static_cast<uint32_t>(e));
    std::vector<float> payload(t.values().size());
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(t.values()[i]);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("MGCK: write failed: " + path);
}

std::map<std::string, Tensor> load_mgck(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("MGCK: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MGCK", 4) != 0) {
    throw std::runtime_error("MGCK: bad magic in " + path);
  }
  const uint32_t version = get_u32(in, path);
  if (version != kMgckVersion) {
    throw std::runtime_error("MGCK: unsupported version " + std::to_string(version) + " in " + path);
  }
  const uint32_t count = get_u32(in, path);
  std::map<std::string, Tensor> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("MGCK: truncated file " + path);
    const uint32_t rank = get_u32(in, path);
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(get_u32(in, path));
      numel *= shape[d];
    }
    std::vector<float> payload(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) throw std::runtime_error("MGCK: truncated payload for '" + name + "' in " + path);
    std::vector<double> values(payload.begin(), payload.end());
    entries.emplace(name, Tensor::leaf(std::move(shape), std::move(values)));
  }
  return entries;
}

}  // namespace mimatch
