#include "mimatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mimatch/rng.hpp"
#include "mimatch/transforms.hpp"

namespace mimatch {

namespace {

struct Segment {
  double x0, y0, x1, y1, half_width;
};

struct Building {
  double cx, cy, hw, hh, cos_a, sin_a;
  double shade;
};

struct WaterBody {
  std::vector<std::array<double, 2>> poly;
};

struct Scene {
  std::vector<Segment> roads;
  std::vector<Building> buildings;
  std::vector<WaterBody> water;
  uint64_t noise_seed = 0;
};

double dist2_point_segment(double px, double py, const Segment& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return dx * dx + dy * dy;
}

bool inside_building(double px, double py, const Building& b) {
  const double dx = px - b.cx, dy = py - b.cy;
  const double lx = dx * b.cos_a + dy * b.sin_a;
  const double ly = -dx * b.sin_a + dy * b.cos_a;
  return std::abs(lx) <= b.hw && std::abs(ly) <= b.hh;
}

bool inside_polygon(double px, double py, const std::vector<std::array<double, 2>>& poly) {
  bool in = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const bool cross = (poly[i][1] > py) != (poly[j][1] > py);
    if (cross) {
      const double xint =
          (poly[j][0] - poly[i][0]) * (py - poly[i][1]) / (poly[j][1] - poly[i][1]) + poly[i][0];
      if (px < xint) in = !in;
    }
  }
  return in;
}

// lattice value noise anchored to scene coordinates
double lattice(uint64_t seed, int64_t xi, int64_t yi) {
  uint64_t h = seed ^ (static_cast<uint64_t>(xi) * 0x9e3779b97f4a7c15ull) ^
               (static_cast<uint64_t>(yi) * 0xbf58476d1ce4e5b9ull);
  h ^= h >> 30;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t xi = static_cast<int64_t>(fx), yi = static_cast<int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  const double sx = tx * tx * (3 - 2 * tx);
  const double sy = ty * ty * (3 - 2 * ty);
  const double a = lattice(seed, xi, yi), b = lattice(seed, xi + 1, yi);
  const double c = lattice(seed, xi, yi + 1), d = lattice(seed, xi + 1, yi + 1);
  return (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
}

double fbm(uint64_t seed, double x, double y, int octaves, double base_freq) {
  double acc = 0.0, amp = 1.0, norm = 0.0, f = base_freq;
  for (int o = 0; o < octaves; ++o) {
    acc += amp * value_noise(seed + static_cast<uint64_t>(o) * 1013ull, x * f, y * f);
    norm += amp;
    amp *= 0.5;
    f *= 2.0;
  }
  return acc / norm;
}

enum class Coverage { kBackground, kWater, kBuilding, kRoad };

struct Classified {
  Coverage kind;
  int index;  // building index for per-building shading
};

Classified classify(const Scene& scene, double x, double y) {
  for (const Segment& s : scene.roads) {
    if (dist2_point_segment(x, y, s) <= s.half_width * s.half_width) return {Coverage::kRoad, 0};
  }
  for (size_t i = 0; i < scene.buildings.size(); ++i) {
    if (inside_building(x, y, scene.buildings[i])) return {Coverage::kBuilding, static_cast<int>(i)};
  }
  for (const WaterBody& w : scene.water) {
    if (inside_polygon(x, y, w.poly)) return {Coverage::kWater, 0};
  }
  return {Coverage::kBackground, 0};
}

Scene build_scene(uint64_t seed) {
  RngStream rng = RngStream::derive(seed, {0x5C33});
  Scene scene;
  scene.noise_seed = rng.next_u64();
  // geometry extends past the canvas so warped views stay populated
  const double lo = -96.0, hi = kSynthSize + 96.0;

  const int n_roads = rng.uniform_int(4, 7);
  for (int r = 0; r < n_roads; ++r) {
    const double hw = rng.uniform(2.5, 5.5);
    double x = rng.uniform(lo, hi);
    double y = rng.coin() ? lo : rng.uniform(lo, hi);
    double angle = rng.uniform(0.0, 6.2831853);
    const int n_segs = rng.uniform_int(3, 6);
    for (int s = 0; s < n_segs; ++s) {
      const double len = rng.uniform(120.0, 320.0);
      const double nx = x + std::cos(angle) * len;
      const double ny = y + std::sin(angle) * len;
      scene.roads.push_back({x, y, nx, ny, hw});
      x = nx;
      y = ny;
      angle += rng.uniform(-0.6, 0.6);
    }
  }

  const int n_buildings = rng.uniform_int(28, 52);
  for (int b = 0; b < n_buildings; ++b) {
    Building bd;
    bd.cx = rng.uniform(lo, hi);
    bd.cy = rng.uniform(lo, hi);
    bd.hw = rng.uniform(6.0, 22.0);
    bd.hh = rng.uniform(6.0, 22.0);
    const double a = rng.uniform(0.0, 3.1415926);
    bd.cos_a = std::cos(a);
    bd.sin_a = std::sin(a);
    bd.shade = rng.uniform(0.3, 0.65);
    scene.buildings.push_back(bd);
  }

  const int n_water = rng.uniform_int(1, 2);
  for (int w = 0; w < n_water; ++w) {
    WaterBody body;
    const double cx = rng.uniform(lo, hi), cy = rng.uniform(lo, hi);
    const double rad = rng.uniform(60.0, 160.0);
    const int verts = rng.uniform_int(9, 14);
    for (int v = 0; v < verts; ++v) {
      const double a = 6.2831853 * v / verts;
      const double rr = rad * rng.uniform(0.6, 1.25);
      body.poly.push_back({cx + rr * std::cos(a), cy + rr * std::sin(a)});
    }
    scene.water.push_back(std::move(body));
  }
  return scene;
}

void map_style(const Scene& scene, double x, double y, float* rgb) {
  const Classified c = classify(scene, x, y);
  switch (c.kind) {
    case Coverage::kRoad:
      rgb[0] = 1.00f;
      rgb[1] = 0.99f;
      rgb[2] = 0.95f;
      break;
    case Coverage::kBuilding:
      rgb[0] = 0.84f;
      rgb[1] = 0.83f;
      rgb[2] = 0.81f;
      break;
    case Coverage::kWater:
      rgb[0] = 0.64f;
      rgb[1] = 0.83f;
      rgb[2] = 0.95f;
      break;
    case Coverage::kBackground:
      rgb[0] = 0.96f;
      rgb[1] = 0.95f;
      rgb[2] = 0.90f;
      break;
  }
}

void photo_style(const Scene& scene, double x, double y, float* rgb) {
  const Classified c = classify(scene, x, y);
  const uint64_t ns = scene.noise_seed;
  double r, g, b;
  switch (c.kind) {
    case Coverage::kRoad: {
      const double n = fbm(ns + 1, x, y, 3, 1.0 / 6.0);
      r = g = b = 0.20 + 0.12 * n;
      break;
    }
    case Coverage::kBuilding: {
      const Building& bd = scene.buildings[static_cast<size_t>(c.index)];
      const double n = fbm(ns + 2, x, y, 3, 1.0 / 9.0);
      r = bd.shade + 0.10 * n;
      g = bd.shade * 0.92 + 0.10 * n;
      b = bd.shade * 0.85 + 0.08 * n;
      break;
    }
    case Coverage::kWater: {
      const double n = fbm(ns + 3, x, y, 3, 1.0 / 24.0);
      r = 0.05 + 0.05 * n;
      g = 0.13 + 0.07 * n;
      b = 0.18 + 0.08 * n;
      break;
    }
    case Coverage::kBackground: {
      const double n = fbm(ns + 4, x, y, 4, 1.0 / 16.0);
      const double m = fbm(ns + 5, x, y, 3, 1.0 / 48.0);
      r = 0.22 + 0.22 * n + 0.06 * m;
      g = 0.28 + 0.18 * n + 0.05 * m;
      b = 0.16 + 0.14 * n + 0.04 * m;
      break;
    }
  }
  // low-frequency illumination and a nonlinear intensity remap keep the
  // modality visually and statistically far from the flat map colors
  const double illum = 0.82 + 0.33 * fbm(ns + 6, x, y, 2, 1.0 / 160.0);
  r = std::pow(std::clamp(r * illum, 0.0, 1.0), 1.35);
  g = std::pow(std::clamp(g * illum, 0.0, 1.0), 1.35);
  b = std::pow(std::clamp(b * illum, 0.0, 1.0), 1.35);
  rgb[0] = static_cast<float>(r);
  rgb[1] = static_cast<float>(g);
  rgb[2] = static_cast<float>(b);
}

}  // namespace

SynthPair make_synth_pair(uint64_t seed) {
  const Scene scene = build_scene(seed);
  SynthPair out;
  out.seed = seed;
  const uint64_t h_seed = RngStream::derive(seed, {0x40130}).next_u64();
  out.gt = sample_transform(TransformSpec::easy(), kSynthSize, kSynthSize, h_seed);

  out.map_image = Image::create(kSynthSize, kSynthSize, 3);
  out.photo_image = Image::create(kSynthSize, kSynthSize, 3);
  out.road_mask_map = FloatMap::create(kSynthSize, kSynthSize);
  out.road_mask_photo = FloatMap::create(kSynthSize, kSynthSize);

  const auto& hm = out.gt.coeffs();
  for (int y = 0; y < kSynthSize; ++y) {
    for (int x = 0; x < kSynthSize; ++x) {
      map_style(scene, x, y, &out.map_image.at(x, y, 0));
      out.road_mask_map.at(x, y) =
          classify(scene, x, y).kind == Coverage::kRoad ? 1.0f : 0.0f;

      // photo pixel shows the scene at H(p): H maps photo -> map coordinates
      const double w = hm[6] * x + hm[7] * y + hm[8];
      const double sx = (hm[0] * x + hm[1] * y + hm[2]) / w;
      const double sy = (hm[3] * x + hm[4] * y + hm[5]) / w;
      photo_style(scene, sx, sy, &out.photo_image.at(x, y, 0));
      out.road_mask_photo.at(x, y) =
          classify(scene, sx, sy).kind == Coverage::kRoad ? 1.0f : 0.0f;
    }
  }
  // photo-frame sensor noise on top of the scene-anchored texture
  const uint64_t px_seed = RngStream::derive(seed, {0x9E01}).next_u64();
  for (int y = 0; y < kSynthSize; ++y) {
    for (int x = 0; x < kSynthSize; ++x) {
      const double n = (lattice(px_seed, x, y) - 0.5) * 0.035;
      for (int ch = 0; ch < 3; ++ch) {
        out.photo_image.at(x, y, ch) =
            static_cast<float>(std::clamp(out.photo_image.at(x, y, ch) + n, 0.0, 1.0));
      }
    }
  }
  return out;
}

std::vector<SynthPair> synth_pairs(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_pairs: n must be >= 1");
  std::vector<SynthPair> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(make_synth_pair(RngStream::derive(seed, {0x5EED, static_cast<uint64_t>(i)}).next_u64()));
  }
  return out;
}

double histogram_chi_square(const Image& a, const Image& b, int bins) {
  if (bins <= 0) throw std::invalid_argument("histogram_chi_square: bins must be positive");
  const Image ga = to_grayscale(a);
  const Image gb = to_grayscale(b);
  std::vector<double> ha(static_cast<size_t>(bins), 0.0), hb(static_cast<size_t>(bins), 0.0);
  for (float v : ga.pixels) {
    ha[std::min(static_cast<size_t>(v * bins), static_cast<size_t>(bins - 1))] += 1.0;
  }
  for (float v : gb.pixels) {
    hb[std::min(static_cast<size_t>(v * bins), static_cast<size_t>(bins - 1))] += 1.0;
  }
  const double na = static_cast<double>(ga.pixels.size());
  const double nb = static_cast<double>(gb.pixels.size());
  double chi = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double p = ha[static_cast<size_t>(i)] / na;
    const double q = hb[static_cast<size_t>(i)] / nb;
    if (p + q > 0) chi += 0.5 * (p - q) * (p - q) / (p + q);
  }
  return chi;
}

}  // namespace mimatch
