#include "mimatch/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mimatch {

double saliency_gain(double raw, double raw_min, double raw_max, double alpha) {
  const double r = (raw - raw_min) / (raw_max - raw_min + kSaliencyEps);
  return std::pow(r, alpha);
}

SaliencyMap saliency_map(const Image& gray, double alpha) {
  if (gray.channels != 1) throw std::invalid_argument("saliency_map: single-channel input required");
  const SobelResult sob = sobel_gradients(gray);
  float gmin = sob.magnitude.data[0];
  float gmax = sob.magnitude.data[0];
  for (float v : sob.magnitude.data) {
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
  }
  SaliencyMap out;
  out.alpha = alpha;
  out.values = FloatMap::create(gray.width, gray.height);
  for (size_t i = 0; i < sob.magnitude.data.size(); ++i) {
    out.values.data[i] = static_cast<float>(saliency_gain(sob.magnitude.data[i], gmin, gmax, alpha));
  }
  return out;
}

RadiusMap radius_map(const SaliencyMap& sal, double r_min, double r_max) {
  if (r_min > r_max) throw std::invalid_argument("radius_map: r_min > r_max");
  RadiusMap out;
  out.r_min = r_min;
  out.r_max = r_max;
  out.values = FloatMap::create(sal.values.width, sal.values.height);
  for (size_t i = 0; i < sal.values.data.size(); ++i) {
    out.values.data[i] = static_cast<float>(r_min + (1.0 - sal.values.data[i]) * (r_max - r_min));
  }
  return out;
}

namespace {

struct Candidate {
  float score;
  int x, y;
};

// strict local maximum with lexicographic plateau suppression: keep (x,y) iff
// every 8-neighbor is strictly smaller, or equal and lexicographically after
bool is_local_max(const FloatMap& m, int x, int y) {
  const float v = m.at(x, y);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
      const float nv = m.at(nx, ny);
      if (nv > v) return false;
      if (nv == v && (ny < y || (ny == y && nx < x))) return false;
    }
  }
  return true;
}

}  // namespace

KeypointSet anms_detect(const FloatMap& score_map, const RadiusMap& radii, int max_keypoints,
                        double score_floor) {
  if (score_map.width != radii.values.width || score_map.height != radii.values.height) {
    throw std::invalid_argument("anms_detect: score map and radius map sizes differ");
  }
  KeypointSet out;
  out.image_width = score_map.width;
  out.image_height = score_map.height;
  if (max_keypoints <= 0) return out;

  std::vector<Candidate> cands;
  for (int y = 0; y < score_map.height; ++y) {
    for (int x = 0; x < score_map.width; ++x) {
      const float v = score_map.at(x, y);
      if (v > score_floor && is_local_max(score_map, x, y)) cands.push_back({v, x, y});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // coarse grid over accepted points; cells sized by the largest radius
  const double cell = std::max(1.0, radii.r_max);
  const int gw = static_cast<int>(score_map.width / cell) + 1;
  const int gh = static_cast<int>(score_map.height / cell) + 1;
  std::vector<std::vector<int>> grid(static_cast<size_t>(gw) * gh);
  std::vector<Candidate> accepted;

  for (const Candidate& c : cands) {
    const double r = radii.values.at(c.x, c.y);
    const double r2 = r * r;
    const int cx = static_cast<int>(c.x / cell);
    const int cy = static_cast<int>(c.y / cell);
    const int reach = static_cast<int>(std::ceil(r / cell));
    bool ok = true;
    for (int gy = std::max(0, cy - reach); ok && gy <= std::min(gh - 1, cy + reach); ++gy) {
      for (int gx = std::max(0, cx - reach); ok && gx <= std::min(gw - 1, cx + reach); ++gx) {
        for (int idx : grid[static_cast<size_t>(gy) * gw + gx]) {
          const double dx = accepted[static_cast<size_t>(idx)].x - c.x;
          const double dy = accepted[static_cast<size_t>(idx)].y - c.y;
          if (dx * dx + dy * dy < r2) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    grid[static_cast<size_t>(cy) * gw + cx].push_back(static_cast<int>(accepted.size()));
    accepted.push_back(c);
    if (static_cast<int>(accepted.size()) >= max_keypoints) break;
  }

  out.points.reserve(accepted.size());
  for (const Candidate& c : accepted) {
    out.points.push_back({static_cast<float>(c.x), static_cast<float>(c.y), c.score});
  }
  return out;
}

namespace {

FloatMap resize_map(const FloatMap& src, int new_w, int new_h) {
  FloatMap out = FloatMap::create(new_w, new_h);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  for (int y = 0; y < new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      out.at(x, y) = static_cast<float>((1 - wy) * ((1 - wx) * src.at(x0, y0) + wx * src.at(x1, y0)) +
                                        wy * ((1 - wx) * src.at(x0, y1) + wx * src.at(x1, y1)));
    }
  }
  return out;
}

FloatMap downsample_copy(const FloatMap& src, int factor) {
  const int dw = std::max(1, src.width / factor);
  const int dh = std::max(1, src.height / factor);
  return resize_map(resize_map(src, dw, dh), src.width, src.height);
}

FloatMap image_plane(const Image& gray) {
  FloatMap m = FloatMap::create(gray.width, gray.height);
  std::copy(gray.pixels.begin(), gray.pixels.end(), m.data.begin());
  return m;
}

DenseMap bank_from_planes(const std::vector<FloatMap>& base, const std::vector<int>& scales) {
  const int w = base[0].width, h = base[0].height;
  std::vector<FloatMap> planes = base;
  for (int f : scales) {
    for (const FloatMap& b : base) planes.push_back(downsample_copy(b, f));
  }
  DenseMap bank = DenseMap::create(h, w, static_cast<int>(planes.size()), 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float* cellp = bank.cell(x, y);
      double norm2 = 0.0;
      for (size_t c = 0; c < planes.size(); ++c) {
        cellp[c] = planes[c].at(x, y);
        norm2 += static_cast<double>(cellp[c]) * cellp[c];
      }
      const double inv = 1.0 / std::sqrt(norm2 + 1e-12);
      for (size_t c = 0; c < planes.size(); ++c) cellp[c] = static_cast<float>(cellp[c] * inv);
    }
  }
  return bank;
}

}  // namespace

FeatureProvider FeatureProvider::fallback(const Image& image, double alpha) {
  const Image gray = to_grayscale(image);
  FeatureProvider fp;
  fp.mode_ = Mode::kFallback;
  fp.score_full_ = saliency_map(gray, alpha).values;

  const SobelResult sob = sobel_gradients(gray);
  const FloatMap plane = image_plane(gray);

  // structural bank: image, blurs at sigma 1/2/4, Gx, Gy + the same planes
  // rebuilt through 3 down/up-sampled copies (24 channels total)
  std::vector<FloatMap> str_base;
  str_base.push_back(plane);
  str_base.push_back(gaussian_blur(plane, 1.0));
  str_base.push_back(gaussian_blur(plane, 2.0));
  str_base.push_back(gaussian_blur(plane, 4.0));
  str_base.push_back(sob.gx);
  str_base.push_back(sob.gy);
  fp.structural_ = bank_from_planes(str_base, {2, 4, 8});

  // semantic stand-in: coarse context at heavier smoothing scales
  std::vector<FloatMap> sem_base;
  sem_base.push_back(gaussian_blur(plane, 4.0));
  sem_base.push_back(gaussian_blur(plane, 8.0));
  sem_base.push_back(gaussian_blur(plane, 16.0));
  FloatMap absgx = sob.gx;
  for (float& v : absgx.data) v = std::abs(v);
  FloatMap absgy = sob.gy;
  for (float& v : absgy.data) v = std::abs(v);
  sem_base.push_back(gaussian_blur(absgx, 4.0));
  sem_base.push_back(gaussian_blur(absgy, 4.0));
  sem_base.push_back(plane);
  fp.semantic_ = bank_from_planes(sem_base, {4, 8, 16});
  return fp;
}

FeatureProvider FeatureProvider::imported(const Image& image, DenseMap score, DenseMap structural,
                                          DenseMap semantic) {
  if (score.channels != 1) throw std::invalid_argument("imported score map must have 1 channel");
  validate_map_against_image(score, image.width, image.height, "imported score map");
  validate_map_against_image(structural, image.width, image.height, "imported structural map");
  validate_map_against_image(semantic, image.width, image.height, "imported semantic map");
  FeatureProvider fp;
  fp.mode_ = Mode::kImported;
  fp.score_full_ = upsample_to_image(score, image.width, image.height);
  fp.structural_ = std::move(structural);
  fp.semantic_ = std::move(semantic);
  return fp;
}

FeatureProvider FeatureProvider::imported_from_files(const Image& image, const std::string& score_path,
                                                     const std::string& structural_path,
                                                     const std::string& semantic_path) {
  return imported(image, load_fmap(score_path), load_fmap(structural_path), load_fmap(semantic_path));
}

}  // namespace mimatch
