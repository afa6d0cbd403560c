#include "mimatch/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace mimatch {

namespace {

void draw_line(Image& canvas, double x0, double y0, double x1, double y1, float r, float g,
               float b) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || y < 0 || x >= canvas.width || y >= canvas.height) continue;
    canvas.at(x, y, 0) = r;
    canvas.at(x, y, 1) = g;
    canvas.at(x, y, 2) = b;
  }
}

void blit(Image& canvas, const Image& img, int x_off) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        canvas.at(x + x_off, y, c) = img.channels == 3 ? img.at(x, y, c) : img.at(x, y, 0);
      }
    }
  }
}

}  // namespace

Image render_overlay(const Image& src, const Image& ref, const std::vector<MatchedPoint>& matches,
                     const Homography& h_gt, double threshold) {
  Image canvas = Image::create(src.width + ref.width, std::max(src.height, ref.height), 3);
  blit(canvas, src, 0);
  blit(canvas, ref, src.width);
  for (const MatchedPoint& m : matches) {
    double err = std::numeric_limits<double>::infinity();
    try {
      const Vec2 proj = h_gt.apply({m.x_src, m.y_src});
      err = std::hypot(proj.x - m.x_ref, proj.y - m.y_ref);
    } catch (const std::exception&) {
      // projection at infinity stays red
    }
    const bool good = err <= threshold;
    draw_line(canvas, m.x_src, m.y_src, m.x_ref + src.width, m.y_ref,
              good ? 0.0f : 0.9f, good ? 0.8f : 0.1f, 0.1f);
  }
  return canvas;
}

}  // namespace mimatch
