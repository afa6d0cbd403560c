#include "mimatch/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <thread>

namespace mimatch {

double corner_error(const Homography& h_gt, const Homography& h_pred, int width, int height) {
  const std::array<Vec2, 4> corners{Vec2{0, 0}, Vec2{static_cast<double>(width - 1), 0},
                                    Vec2{static_cast<double>(width - 1), static_cast<double>(height - 1)},
                                    Vec2{0, static_cast<double>(height - 1)}};
  double total = 0.0;
  for (const Vec2& c : corners) {
    const Vec2 a = h_gt.apply(c);
    const Vec2 b = h_pred.apply(c);
    total += std::hypot(a.x - b.x, a.y - b.y);
  }
  return total / 4.0;
}

double auc(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) throw std::invalid_argument("auc: empty error list");
  if (threshold <= 0.0) throw std::invalid_argument("auc: threshold must be positive");
  double acc = 0.0;
  for (double e : errors) {
    if (std::isfinite(e)) acc += std::max(0.0, 1.0 - e / threshold);
  }
  return acc / static_cast<double>(errors.size());
}

MatcherFn real_matcher(const MatcherWeights& weights) {
  return [&weights](const Image& src, const Image& ref, const Homography&, RngStream&) {
    return match_pipeline(src, ref, weights).points;
  };
}

MatcherFn oracle_matcher(double noise_sigma, int count) {
  return [noise_sigma, count](const Image& src, const Image& ref, const Homography& gt,
                              RngStream& rng) {
    std::vector<MatchedPoint> out;
    out.reserve(static_cast<size_t>(count));
    int attempts = 0;
    while (static_cast<int>(out.size()) < count && attempts < count * 20) {
      ++attempts;
      const double x = rng.uniform(0.0, src.width - 1.0);
      const double y = rng.uniform(0.0, src.height - 1.0);
      Vec2 q;
      try {
        q = gt.apply({x, y});
      } catch (const std::exception&) {
        continue;
      }
      if (q.x < 0 || q.y < 0 || q.x > ref.width - 1 || q.y > ref.height - 1) continue;
      out.push_back({x, y, q.x + noise_sigma * rng.normal(), q.y + noise_sigma * rng.normal(), 1.0});
    }
    return out;
  };
}

MatcherFn random_matcher(int count) {
  return [count](const Image& src, const Image& ref, const Homography&, RngStream& rng) {
    std::vector<MatchedPoint> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      out.push_back({rng.uniform(0.0, src.width - 1.0), rng.uniform(0.0, src.height - 1.0),
                     rng.uniform(0.0, ref.width - 1.0), rng.uniform(0.0, ref.height - 1.0), 1.0});
    }
    return out;
  };
}

namespace {

struct Task {
  int pair_index;
  Difficulty difficulty;
  int repeat;
};

EvalRecord run_task(const EvalPair& pair, const Task& task, const MatcherFn& matcher,
                    const EvalOptions& opts) {
  EvalRecord rec;
  rec.pair_id = pair.id;
  rec.difficulty = task.difficulty;
  rec.repeat = task.repeat;
  const uint64_t pair_uid = RngStream::hash_string(pair.id.c_str());
  const uint64_t diff_id = static_cast<uint64_t>(task.difficulty);
  rec.seed = RngStream::derive(opts.seed, {pair_uid, diff_id, static_cast<uint64_t>(task.repeat)})
                 .next_u64();
  rec.error = std::numeric_limits<double>::infinity();

  const TransformSpec spec = TransformSpec::for_difficulty(task.difficulty);
  const Homography warp_h = sample_transform(spec, pair.src.width, pair.src.height, rec.seed);
  const WarpResult warped = warp(pair.src, warp_h, pair.src.width, pair.src.height);
  const Homography gt_warped = pair.gt.compose(warp_h.inverse());  // warped src -> ref

  const ResizeResult src_rs = resize_longside(warped.image, opts.resize_limit);
  const ResizeResult ref_rs = resize_longside(pair.ref, opts.resize_limit);
  const Homography gt_eval = Homography::scaling(ref_rs.scale)
                                 .compose(gt_warped)
                                 .compose(Homography::scaling(1.0 / src_rs.scale));

  RngStream match_rng = RngStream::derive(rec.seed, {1});
  const std::vector<MatchedPoint> matches =
      matcher(src_rs.image, ref_rs.image, gt_eval, match_rng);
  rec.match_count = static_cast<int>(matches.size());
  if (matches.size() < 4) return rec;

  RngStream ransac_rng = RngStream::derive(rec.seed, {2});
  const auto fit = ransac_homography(matches, opts.ransac, ransac_rng);
  if (!fit) return rec;
  rec.inlier_count = fit->inlier_count;
  rec.error = corner_error(gt_eval, fit->h, src_rs.image.width, src_rs.image.height);
  return rec;
}

}  // namespace

Report evaluate(const std::vector<EvalPair>& pairs, const MatcherFn& matcher,
                const EvalOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
  if (opts.repeats < 1) throw std::invalid_argument("evaluate: repeats must be >= 1");

  std::vector<Task> tasks;
  for (int p = 0; p < static_cast<int>(pairs.size()); ++p) {
    for (Difficulty d : opts.difficulties) {
      for (int r = 0; r < opts.repeats; ++r) tasks.push_back({p, d, r});
    }
  }
  std::vector<EvalRecord> records(tasks.size());

  const int workers = std::max(1, opts.threads);
  if (workers == 1) {
    for (size_t t = 0; t < tasks.size(); ++t) {
      records[t] = run_task(pairs[static_cast<size_t>(tasks[t].pair_index)], tasks[t], matcher, opts);
    }
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
          records[t] = run_task(pairs[static_cast<size_t>(tasks[t].pair_index)], tasks[t], matcher, opts);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // deterministic aggregation order regardless of manifest order or threads
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.difficulty != b.difficulty) return static_cast<int>(a.difficulty) < static_cast<int>(b.difficulty);
    if (a.pair_id != b.pair_id) return a.pair_id < b.pair_id;
    return a.repeat < b.repeat;
  });

  Report report;
  report.records = records;
  for (Difficulty d : opts.difficulties) {
    std::vector<double> errors;
    int failures = 0;
    for (const EvalRecord& r : records) {
      if (r.difficulty != d) continue;
      errors.push_back(r.error);
      if (!std::isfinite(r.error)) ++failures;
    }
    DifficultyReport dr;
    dr.difficulty = d;
    dr.pairs = static_cast<int>(pairs.size());
    dr.failures = failures;
    dr.auc3 = 100.0 * auc(errors, 3.0);
    dr.auc5 = 100.0 * auc(errors, 5.0);
    dr.auc10 = 100.0 * auc(errors, 10.0);
    report.per_difficulty.push_back(dr);
  }
  return report;
}

std::string json_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string report_to_json(const Report& report, const std::string& config_echo_json) {
  std::string out = "[";
  for (size_t i = 0; i < report.per_difficulty.size(); ++i) {
    const DifficultyReport& d = report.per_difficulty[i];
    if (i) out += ",";
    out += "\n  {\"difficulty\": \"";
    out += difficulty_name(d.difficulty);
    out += "\", \"auc3\": " + json_double(d.auc3);
    out += ", \"auc5\": " + json_double(d.auc5);
    out += ", \"auc10\": " + json_double(d.auc10);
    out += ", \"pairs\": " + std::to_string(d.pairs);
    out += ", \"failures\": " + std::to_string(d.failures);
    out += ", \"config\": " + (config_echo_json.empty() ? "{}" : config_echo_json);
    out += "}";
  }
  out += "\n]\n";
  return out;
}

std::string report_to_table(const Report& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s %7s %9s\n", "difficulty", "AUC@3px",
                "AUC@5px", "AUC@10px", "pairs", "failures");
  out += line;
  for (const DifficultyReport& d : report.per_difficulty) {
    std::snprintf(line, sizeof(line), "%-10s %8.2f %8.2f %8.2f %7d %9d\n", difficulty_name(d.difficulty),
                  d.auc3, d.auc5, d.auc10, d.pairs, d.failures);
    out += line;
  }
  return out;
}

}  // namespace mimatch
