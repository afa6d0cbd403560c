#include "mimatch/ransac.hpp"

#include <algorithm>
#include <cmath>

namespace mimatch {

double symmetric_transfer_error(const Homography& h, const Homography& h_inv,
                                const MatchedPoint& m) {
  const Vec2 fwd = h.apply({m.x_src, m.y_src});
  const Vec2 bwd = h_inv.apply({m.x_ref, m.y_ref});
  const double ef = std::hypot(fwd.x - m.x_ref, fwd.y - m.y_ref);
  const double eb = std::hypot(bwd.x - m.x_src, bwd.y - m.y_src);
  return 0.5 * (ef + eb);
}

namespace {

bool degenerate_sample(const std::vector<MatchedPoint>& m, const int idx[4]) {
  // any collinear triple on either side makes the 4-point DLT unstable
  auto area2 = [](double ax, double ay, double bx, double by, double cx, double cy) {
    return std::abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax));
  };
  for (int a = 0; a < 2; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      for (int c = b + 1; c < 4; ++c) {
        const auto &p0 = m[static_cast<size_t>(idx[a])], &p1 = m[static_cast<size_t>(idx[b])],
                   &p2 = m[static_cast<size_t>(idx[c])];
        if (area2(p0.x_src, p0.y_src, p1.x_src, p1.y_src, p2.x_src, p2.y_src) < 1e-6) return true;
        if (area2(p0.x_ref, p0.y_ref, p1.x_ref, p1.y_ref, p2.x_ref, p2.y_ref) < 1e-6) return true;
      }
    }
  }
  return false;
}

int count_inliers(const std::vector<MatchedPoint>& matches, const Homography& h, double thr,
                  std::vector<uint8_t>* mask) {
  Homography hinv;
  try {
    hinv = h.inverse();
  } catch (const std::exception&) {
    return 0;
  }
  int count = 0;
  if (mask) mask->assign(matches.size(), 0);
  for (size_t i = 0; i < matches.size(); ++i) {
    double e;
    try {
      e = symmetric_transfer_error(h, hinv, matches[i]);
    } catch (const std::exception&) {
      continue;  // point mapped to infinity
    }
    if (e < thr) {
      ++count;
      if (mask) (*mask)[i] = 1;
    }
  }
  return count;
}

}  // namespace

std::optional<RansacResult> ransac_homography(const std::vector<MatchedPoint>& matches,
                                              const RansacConfig& cfg, RngStream& rng) {
  const int n = static_cast<int>(matches.size());
  if (n < 4) return std::nullopt;

  int best_count = 0;
  Homography best_h;
  double required = cfg.max_iterations;
  int iter = 0;
  for (; iter < cfg.max_iterations && iter < required; ++iter) {
    int idx[4];
    idx[0] = rng.uniform_int(0, n - 1);
    for (int k = 1; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = rng.uniform_int(0, n - 1);
        fresh = true;
        for (int j = 0; j < k; ++j) {
          if (idx[j] == idx[k]) fresh = false;
        }
      }
    }
    if (degenerate_sample(matches, idx)) continue;
    std::vector<Vec2> from(4), to(4);
    for (int k = 0; k < 4; ++k) {
      from[static_cast<size_t>(k)] = {matches[static_cast<size_t>(idx[k])].x_src,
                                      matches[static_cast<size_t>(idx[k])].y_src};
      to[static_cast<size_t>(k)] = {matches[static_cast<size_t>(idx[k])].x_ref,
                                    matches[static_cast<size_t>(idx[k])].y_ref};
    }
    Homography h;
    try {
      h = fit_homography_dlt(from, to);
    } catch (const std::exception&) {
      continue;
    }
    const int count = count_inliers(matches, h, cfg.threshold, nullptr);
    if (count > best_count) {
      best_count = count;
      best_h = h;
      // adaptive iteration bound from the confidence of having drawn one
      // all-inlier sample
      const double w = static_cast<double>(count) / n;
      const double p_sample = std::pow(w, 4.0);
      if (p_sample >= 1.0 - 1e-12) {
        required = iter + 1.0;
      } else if (p_sample > 0.0) {
        required = std::log(1.0 - cfg.confidence) / std::log(1.0 - p_sample);
      }
    }
  }
  if (best_count < 4) return std::nullopt;

  std::vector<uint8_t> mask;
  count_inliers(matches, best_h, cfg.threshold, &mask);
  std::vector<Vec2> from, to;
  for (size_t i = 0; i < matches.size(); ++i) {
    if (mask[i]) {
      from.push_back({matches[i].x_src, matches[i].y_src});
      to.push_back({matches[i].x_ref, matches[i].y_ref});
    }
  }
  RansacResult res;
  try {
    res.h = fit_homography_dlt(from, to);
  } catch (const std::exception&) {
    res.h = best_h;  // keep the minimal model when the refit degenerates
  }
  res.inlier_count = count_inliers(matches, res.h, cfg.threshold, &res.inliers);
  if (res.inlier_count < 4) {
    res.h = best_h;
    res.inlier_count = count_inliers(matches, res.h, cfg.threshold, &res.inliers);
  }
  return res;
}

}  // namespace mimatch
