#include "mimatch/transforms.hpp"

#include <cmath>
#include <stdexcept>

#include "mimatch/rng.hpp"

namespace mimatch {

namespace {
constexpr double kDegToRad = 0.017453292519943295;
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kNormal:
      return "normal";
    case Difficulty::kHard:
      return "hard";
  }
  return "?";
}

Difficulty difficulty_from_name(const std::string& name) {
  if (name == "easy") return Difficulty::kEasy;
  if (name == "normal") return Difficulty::kNormal;
  if (name == "hard") return Difficulty::kHard;
  throw std::invalid_argument("unknown difficulty '" + name + "'");
}

TransformSpec TransformSpec::easy() { return {Difficulty::kEasy, 36.0, 0.10, 0.9, 1.1}; }
TransformSpec TransformSpec::normal() { return {Difficulty::kNormal, 72.0, 0.20, 0.8, 1.2}; }
TransformSpec TransformSpec::hard() { return {Difficulty::kHard, 180.0, 0.30, 0.7, 1.3}; }

TransformSpec TransformSpec::for_difficulty(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return easy();
    case Difficulty::kNormal:
      return normal();
    case Difficulty::kHard:
      return hard();
  }
  throw std::invalid_argument("bad difficulty");
}

Homography sample_transform(const TransformSpec& spec, int width, int height, uint64_t seed) {
  RngStream rng(seed);
  const double angle = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * kDegToRad;
  const double scale = rng.uniform(spec.scale_lo, spec.scale_hi);
  const double tx = rng.uniform(-spec.translation_frac, spec.translation_frac) * width;
  const double ty = rng.uniform(-spec.translation_frac, spec.translation_frac) * height;
  const double cx = (width - 1) * 0.5;
  const double cy = (height - 1) * 0.5;
  return Homography::similarity_about(cx, cy, angle, scale, tx, ty);
}

Homography sample_training_augmentation(const AugmentationConfig& cfg, int width, int height,
                                        uint64_t seed) {
  RngStream rng(seed);
  const double angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * kDegToRad;
  const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  // translation magnitude in (0, frac) with random sign per axis
  const double tx = rng.uniform(0.0, cfg.translation_frac) * width * (rng.coin() ? 1.0 : -1.0);
  const double ty = rng.uniform(0.0, cfg.translation_frac) * height * (rng.coin() ? 1.0 : -1.0);
  const double cx = (width - 1) * 0.5;
  const double cy = (height - 1) * 0.5;
  Homography affine = Homography::similarity_about(cx, cy, angle, scale, tx, ty);
  if (!cfg.perspective_jitter) return affine;

  const std::array<Vec2, 4> corners{Vec2{0, 0}, Vec2{static_cast<double>(width - 1), 0},
                                    Vec2{static_cast<double>(width - 1), static_cast<double>(height - 1)},
                                    Vec2{0, static_cast<double>(height - 1)}};
  std::array<Vec2, 4> mapped{};
  for (int i = 0; i < 4; ++i) {
    Vec2 q = affine.apply(corners[static_cast<size_t>(i)]);
    q.x += rng.uniform(-cfg.jitter_frac, cfg.jitter_frac) * width;
    q.y += rng.uniform(-cfg.jitter_frac, cfg.jitter_frac) * height;
    mapped[static_cast<size_t>(i)] = q;
  }
  return Homography::from_four_points(corners, mapped);
}

}  // namespace mimatch
