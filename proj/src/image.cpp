#include "mimatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mimatch {

Image Image::create(int width, int height, int channels, float fill) {
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    throw std::invalid_argument("image: bad dimensions " + std::to_string(width) + "x" +
                                std::to_string(height) + "x" + std::to_string(channels));
  }
  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<size_t>(width) * height * channels, fill);
  return img;
}

FloatMap FloatMap::create(int width, int height, float fill) {
  FloatMap m;
  m.width = width;
  m.height = height;
  m.data.assign(static_cast<size_t>(width) * height, fill);
  return m;
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out = Image::create(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
    }
  }
  return out;
}

SobelResult sobel_gradients(const Image& gray) {
  if (gray.channels != 1) throw std::invalid_argument("sobel_gradients: single-channel input required");
  if (gray.width < 3 || gray.height < 3) {
    throw std::invalid_argument("sobel_gradients: image smaller than 3x3");
  }
  const int w = gray.width, h = gray.height;
  SobelResult res;
  res.gx = FloatMap::create(w, h);
  res.gy = FloatMap::create(w, h);
  res.magnitude = FloatMap::create(w, h);
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);  // edge replication
    y = std::clamp(y, 0, h - 1);
    return gray.at(x, y);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = -px(x - 1, y - 1) + px(x + 1, y - 1)      //
                       - 2 * px(x - 1, y) + 2 * px(x + 1, y)     //
                       - px(x - 1, y + 1) + px(x + 1, y + 1);
      const float gy = -px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1)  //
                       + px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1);
      res.gx.at(x, y) = gx;
      res.gy.at(x, y) = gy;
      res.magnitude.at(x, y) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return res;
}

FloatMap gaussian_blur(const FloatMap& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
    norm += v;
  }
  for (float& k : kernel) k = static_cast<float>(k / norm);

  const int w = src.width, h = src.height;
  FloatMap tmp = FloatMap::create(w, h);
  FloatMap out = FloatMap::create(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<size_t>(i + radius)] * src.at(std::clamp(x + i, 0, w - 1), y);
      }
      tmp.at(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<size_t>(i + radius)] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

Image bilinear_resize(const Image& src, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) throw std::invalid_argument("bilinear_resize: bad target size");
  if (new_width == src.width && new_height == src.height) return src;
  Image out = Image::create(new_width, new_height, src.channels);
  const double sx = static_cast<double>(src.width) / new_width;
  const double sy = static_cast<double>(src.height) / new_height;
  for (int y = 0; y < new_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                         wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
        out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

ResizeResult resize_longside(const Image& img, int limit) {
  if (limit <= 0) throw std::invalid_argument("resize_longside: limit must be positive");
  const int longside = std::max(img.width, img.height);
  if (longside <= limit) return {img, 1.0};
  const double scale = static_cast<double>(limit) / longside;
  const int nw = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  const int nh = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  return {bilinear_resize(img, nw, nh), scale};
}

WarpResult warp(const Image& src, const Homography& h, int out_width, int out_height) {
  const Homography inv = h.inverse();  // throws on near-singular input
  WarpResult res;
  res.image = Image::create(out_width, out_height, src.channels);
  res.valid.assign(static_cast<size_t>(out_width) * out_height, 0);
  const auto& m = inv.coeffs();
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const double w = m[6] * x + m[7] * y + m[8];
      if (std::abs(w) < 1e-300) continue;
      const double sxf = (m[0] * x + m[1] * y + m[2]) / w;
      const double syf = (m[3] * x + m[4] * y + m[5]) / w;
      if (sxf < 0.0 || sxf > src.width - 1 || syf < 0.0 || syf > src.height - 1) continue;
      const int x0 = static_cast<int>(sxf);
      const int y0 = static_cast<int>(syf);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double wx = sxf - x0;
      const double wy = syf - y0;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c)) +
                         wy * ((1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c));
        res.image.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      res.valid[static_cast<size_t>(y) * out_width + x] = 1;
    }
  }
  return res;
}

}  // namespace mimatch
