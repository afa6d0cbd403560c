#include "mimatch/fmap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mimatch {

static_assert(std::endian::native == std::endian::little,
              "FMAP I/O assumes a little-endian host");

DenseMap DenseMap::create(int grid_height, int grid_width, int channels, int stride) {
  if (grid_height <= 0 || grid_width <= 0 || channels <= 0 || stride <= 0) {
    throw std::invalid_argument("dense map: bad dimensions");
  }
  DenseMap m;
  m.grid_height = grid_height;
  m.grid_width = grid_width;
  m.channels = channels;
  m.stride = stride;
  m.data.assign(static_cast<size_t>(grid_height) * grid_width * channels, 0.0f);
  return m;
}

namespace {

void put_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("FMAP: truncated file " + path);
  return v;
}

}  // namespace

void save_fmap(const std::string& path, const DenseMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("FMAP: cannot open for write: " + path);
  out.write("FMAP", 4);
  put_u32(out, kFmapVersion);
  put_u32(out, static_cast<uint32_t>(map.grid_height));
  put_u32(out, static_cast<uint32_t>(map.grid_width));
  put_u32(out, static_cast<uint32_t>(map.channels));
  put_u32(out, static_cast<uint32_t>(map.stride));
  out.write(reinterpret_cast<const char*>(map.data.data()),
            static_cast<std::streamsize>(map.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("FMAP: write failed: " + path);
}

DenseMap load_fmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("FMAP: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FMAP", 4) != 0) throw std::runtime_error("FMAP: bad magic in " + path);
  const uint32_t version = get_u32(in, path);
  if (version != kFmapVersion) {
    throw std::runtime_error("FMAP: unsupported version " + std::to_string(version) + " in " + path);
  }
  const int gh = static_cast<int>(get_u32(in, path));
  const int gw = static_cast<int>(get_u32(in, path));
  const int ch = static_cast<int>(get_u32(in, path));
  const int stride = static_cast<int>(get_u32(in, path));
  DenseMap map = DenseMap::create(gh, gw, ch, stride);
  in.read(reinterpret_cast<char*>(map.data.data()),
          static_cast<std::streamsize>(map.data.size() * sizeof(float)));
  if (!in) throw std::runtime_error("FMAP: truncated payload in " + path);
  return map;
}

void validate_map_against_image(const DenseMap& map, int image_width, int image_height,
                                const std::string& what) {
  const int want_w = (image_width + map.stride - 1) / map.stride;
  const int want_h = (image_height + map.stride - 1) / map.stride;
  if (map.grid_width != want_w || map.grid_height != want_h) {
    throw std::invalid_argument(what + ": grid " + std::to_string(map.grid_width) + "x" +
                                std::to_string(map.grid_height) + " at stride " +
                                std::to_string(map.stride) + " does not cover image " +
                                std::to_string(image_width) + "x" + std::to_string(image_height));
  }
}

void sample_bilinear(const DenseMap& map, double px, double py, double* out) {
  const double cx = std::clamp(px / map.stride, 0.0, static_cast<double>(map.grid_width - 1));
  const double cy = std::clamp(py / map.stride, 0.0, static_cast<double>(map.grid_height - 1));
  const int x0 = static_cast<int>(cx);
  const int y0 = static_cast<int>(cy);
  const int x1 = std::min(x0 + 1, map.grid_width - 1);
  const int y1 = std::min(y0 + 1, map.grid_height - 1);
  const double wx = cx - x0;
  const double wy = cy - y0;
  const float* c00 = map.cell(x0, y0);
  const float* c10 = map.cell(x1, y0);
  const float* c01 = map.cell(x0, y1);
  const float* c11 = map.cell(x1, y1);
  for (int c = 0; c < map.channels; ++c) {
    out[c] = (1 - wy) * ((1 - wx) * c00[c] + wx * c10[c]) + wy * ((1 - wx) * c01[c] + wx * c11[c]);
  }
}

FloatMap upsample_to_image(const DenseMap& map, int image_width, int image_height) {
  if (map.channels != 1) throw std::invalid_argument("upsample_to_image: single channel required");
  FloatMap out = FloatMap::create(image_width, image_height);
  double v;
  for (int y = 0; y < image_height; ++y) {
    for (int x = 0; x < image_width; ++x) {
      sample_bilinear(map, x, y, &v);
      out.at(x, y) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace mimatch
