#pragma once

#include <string>
#include <vector>

#include "mimatch/homography.hpp"

namespace mimatch {

// Row-major, channel-interleaved pixel grid with values in [0, 1].
// channels is 1 (gray) or 3 (RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;

  static Image create(int width, int height, int channels, float fill = 0.0f);

  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// Per-pixel scalar field (gradients, scores, saliency). Not constrained to [0,1].
struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  static FloatMap create(int width, int height, float fill = 0.0f);
  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
};

// 8-bit grayscale or RGB PNG; other bit depths are rejected.
Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

// luma = 0.299 R + 0.587 G + 0.114 B; single-channel input passes through.
Image to_grayscale(const Image& img);

struct SobelResult {
  FloatMap gx, gy, magnitude;
};

// 3x3 Sobel with edge replication at the borders. Input must be single
// channel and at least 3x3.
SobelResult sobel_gradients(const Image& gray);

FloatMap gaussian_blur(const FloatMap& src, double sigma);
Image bilinear_resize(const Image& src, int new_width, int new_height);

struct ResizeResult {
  Image image;
  double scale = 1.0;  // new size / old size along the long side
};

// Downscale so the long side equals `limit` when it exceeds it; otherwise
// identity. The returned scale de-normalizes coordinates (orig = resized / scale).
ResizeResult resize_longside(const Image& img, int limit = 640);

struct WarpResult {
  Image image;
  std::vector<uint8_t> valid;  // 1 where the inverse-mapped sample was in bounds
};

// out(q) = in(H^-1 q) with bilinear interpolation; out-of-source samples are 0.
WarpResult warp(const Image& src, const Homography& h, int out_width, int out_height);

}  // namespace mimatch
