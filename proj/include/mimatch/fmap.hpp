#pragma once

#include <string>
#include <vector>

#include "mimatch/image.hpp"

namespace mimatch {

// Dense feature grid, row-major channel-last. stride is the number of image
// pixels per feature cell; cell (cx, cy) nominally sits at pixel
// (cx * stride, cy * stride).
struct DenseMap {
  int grid_height = 0;
  int grid_width = 0;
  int channels = 0;
  int stride = 1;
  std::vector<float> data;

  static DenseMap create(int grid_height, int grid_width, int channels, int stride);

  const float* cell(int cx, int cy) const {
    return data.data() + (static_cast<size_t>(cy) * grid_width + cx) * channels;
  }
  float* cell(int cx, int cy) {
    return data.data() + (static_cast<size_t>(cy) * grid_width + cx) * channels;
  }
};

// FMAP container: magic "FMAP", version u32 LE, height u32, width u32,
// channels u32, stride u32, payload float32 LE row-major channel-last.
inline constexpr uint32_t kFmapVersion = 1;

void save_fmap(const std::string& path, const DenseMap& map);
DenseMap load_fmap(const std::string& path);

// Throws unless the grid covers the image at this stride
// (grid extent == ceil(image extent / stride)).
void validate_map_against_image(const DenseMap& map, int image_width, int image_height,
                                const std::string& what);

// Bilinear upsampling of a single-channel map to full image resolution,
// sampling in feature-cell coordinates (pixel / stride).
FloatMap upsample_to_image(const DenseMap& map, int image_width, int image_height);

// Bilinear sample of a feature vector at a pixel coordinate; coordinates are
// converted to cell space (pixel / stride) and clamped to the valid range.
void sample_bilinear(const DenseMap& map, double px, double py, double* out);

}  // namespace mimatch
