#include "mimatch/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "mimatch/checkpoint.hpp"
#include "mimatch/rng.hpp"
#include "mimatch/transforms.hpp"

namespace mimatch {

LabelSets make_labels(const std::vector<std::array<double, 2>>& kpts_src,
                      const std::vector<std::array<double, 2>>& kpts_ref, const Homography& h,
                      double th_pos, double th_neg) {
  const Homography hinv = h.inverse();  // throws on degenerate H
  const int ns = static_cast<int>(kpts_src.size());
  const int nr = static_cast<int>(kpts_ref.size());
  LabelSets out;
  out.th_pos = th_pos;
  out.th_neg = th_neg;
  if (ns == 0 || nr == 0) return out;

  std::vector<std::array<double, 2>> fwd(static_cast<size_t>(ns));
  for (int i = 0; i < ns; ++i) {
    const Vec2 q = h.apply({kpts_src[static_cast<size_t>(i)][0], kpts_src[static_cast<size_t>(i)][1]});
    fwd[static_cast<size_t>(i)] = {q.x, q.y};
  }
  std::vector<std::array<double, 2>> bwd(static_cast<size_t>(nr));
  for (int j = 0; j < nr; ++j) {
    const Vec2 q = hinv.apply({kpts_ref[static_cast<size_t>(j)][0], kpts_ref[static_cast<size_t>(j)][1]});
    bwd[static_cast<size_t>(j)] = {q.x, q.y};
  }

  std::vector<double> dsym(static_cast<size_t>(ns) * nr);
  std::vector<int> best_j(static_cast<size_t>(ns), -1);
  std::vector<int> best_i(static_cast<size_t>(nr), -1);
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nr; ++j) {
      const double df = std::hypot(fwd[static_cast<size_t>(i)][0] - kpts_ref[static_cast<size_t>(j)][0],
                                   fwd[static_cast<size_t>(i)][1] - kpts_ref[static_cast<size_t>(j)][1]);
      const double db = std::hypot(bwd[static_cast<size_t>(j)][0] - kpts_src[static_cast<size_t>(i)][0],
                                   bwd[static_cast<size_t>(j)][1] - kpts_src[static_cast<size_t>(i)][1]);
      const double d = std::max(df, db);
      dsym[static_cast<size_t>(i) * nr + j] = d;
      if (best_j[static_cast<size_t>(i)] < 0 || d < dsym[static_cast<size_t>(i) * nr + best_j[static_cast<size_t>(i)]]) {
        best_j[static_cast<size_t>(i)] = j;
      }
      if (best_i[static_cast<size_t>(j)] < 0 || d < dsym[static_cast<size_t>(best_i[static_cast<size_t>(j)]) * nr + j]) {
        best_i[static_cast<size_t>(j)] = i;
      }
    }
  }
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nr; ++j) {
      const double d = dsym[static_cast<size_t>(i) * nr + j];
      if (d < th_pos && best_j[static_cast<size_t>(i)] == j && best_i[static_cast<size_t>(j)] == i) {
        out.pos.emplace_back(i, j);
      } else if (d > th_neg) {
        out.neg.emplace_back(i, j);
      } else {
        out.ignore.emplace_back(i, j);
      }
    }
  }
  return out;
}

namespace {

// -mean(log(clamp(x, 1e-12))) for entries of P selected by `pairs`;
// `complement` flips entries to 1-p first.
Tensor set_loss(const Tensor& p, const std::vector<std::pair<int, int>>& pairs, bool complement) {
  if (pairs.empty()) return Tensor::scalar(0.0);
  Tensor vals = gather(p, pairs);
  if (complement) vals = affine(vals, -1.0, 1.0);
  return affine(mean(log(clamp_min(vals, 1e-12))), -1.0, 0.0);
}

}  // namespace

QuadrupletLoss quadruplet_loss(const Tensor& p, const LabelSets& labels, const MatchSet& predicted) {
  std::unordered_set<int64_t> pos_keys;
  pos_keys.reserve(labels.pos.size() * 2);
  const int64_t cols = p.cols();
  auto key = [cols](int i, int j) { return static_cast<int64_t>(i) * cols + j; };
  for (const auto& [i, j] : labels.pos) pos_keys.insert(key(i, j));

  std::unordered_set<int64_t> predicted_keys;
  predicted_keys.reserve(predicted.matches.size() * 2);
  std::vector<std::pair<int, int>> fp;
  for (const Match& m : predicted.matches) {
    predicted_keys.insert(key(m.src_index, m.ref_index));
    if (!pos_keys.count(key(m.src_index, m.ref_index))) fp.emplace_back(m.src_index, m.ref_index);
  }
  std::vector<std::pair<int, int>> fn;
  for (const auto& pr : labels.pos) {
    if (!predicted_keys.count(key(pr.first, pr.second))) fn.push_back(pr);
  }

  QuadrupletLoss out;
  Tensor l_pos = set_loss(p, labels.pos, false);
  Tensor l_neg = set_loss(p, labels.neg, true);
  Tensor l_fp = set_loss(p, fp, true);
  Tensor l_fn = set_loss(p, fn, false);
  out.total = add(l_pos, affine(add(add(l_neg, l_fp), l_fn), 1.0 / 3.0, 0.0));
  out.breakdown.pos = l_pos.scalar_value();
  out.breakdown.neg = l_neg.scalar_value();
  out.breakdown.fp = l_fp.scalar_value();
  out.breakdown.fn = l_fn.scalar_value();
  out.breakdown.total = out.total.scalar_value();
  out.breakdown.n_pos = static_cast<int>(labels.pos.size());
  out.breakdown.n_neg = static_cast<int>(labels.neg.size());
  out.breakdown.n_fp = static_cast<int>(fp.size());
  out.breakdown.n_fn = static_cast<int>(fn.size());
  return out;
}

// ---- config / dataset --------------------------------------------------------

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("train config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.keypoint_cap = j.value("keypoint_cap", c.keypoint_cap);
  c.tau = j.value("tau", c.tau);
  c.th_pos = j.value("th_pos", c.th_pos);
  c.th_neg = j.value("th_neg", c.th_neg);
  c.eps_min = j.value("eps_min", c.eps_min);
  c.alpha = j.value("alpha", c.alpha);
  c.r_min = j.value("r_min", c.r_min);
  c.r_max = j.value("r_max", c.r_max);
  c.seed = j.value("seed", c.seed);
  c.manifest = j.value("manifest", c.manifest);
  c.synthetic = j.value("synthetic", c.synthetic);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.width = j.value("width", c.width);
  c.use_semantic = j.value("use_semantic", c.use_semantic);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threads = j.value("threads", c.threads);
  c.resume = j.value("resume", c.resume);
  if (c.manifest.empty() && c.synthetic <= 0) {
    throw std::runtime_error("train config: need either 'manifest' or 'synthetic'");
  }
  return c;
}

std::vector<TrainPair> load_pair_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<TrainPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TrainPair p;
    const std::string src_rel = j.at("src").get<std::string>();
    const std::string ref_rel = j.at("ref").get<std::string>();
    p.id = src_rel + "|" + ref_rel;
    p.src = load_png((base / src_rel).string());
    p.ref = load_png((base / ref_rel).string());
    if (j.contains("H")) {
      const auto arr = j.at("H").get<std::vector<double>>();
      if (arr.size() != 9) {
        throw std::runtime_error("manifest line " + std::to_string(line_no) + ": H must have 9 entries");
      }
      std::array<double, 9> h;
      std::copy(arr.begin(), arr.end(), h.begin());
      p.gt = Homography(h);
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw std::runtime_error("manifest is empty: " + path);
  return pairs;
}

// ---- trainer -------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::vector<TrainPair> dataset)
    : cfg_(std::move(cfg)), dataset_(std::move(dataset)), adam_(AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8}) {
  if (dataset_.empty()) throw std::invalid_argument("trainer: empty dataset");
  MatcherConfig mc;
  mc.layers = cfg_.layers;
  mc.heads = cfg_.heads;
  mc.width = cfg_.width;
  mc.tau = cfg_.tau;
  mc.eps_min = cfg_.eps_min;
  mc.alpha = cfg_.alpha;
  mc.r_min = cfg_.r_min;
  mc.r_max = cfg_.r_max;
  mc.max_keypoints = cfg_.keypoint_cap;
  mc.use_semantic = cfg_.use_semantic;
  weights_ = MatcherWeights::init_random(mc, RngStream::derive(cfg_.seed, {0x11}).next_u64(),
                                         /*trainable=*/true);
  if (!cfg_.resume.empty()) restore_checkpoint(cfg_.resume);
}

Trainer::PairLoss Trainer::forward_pair(int dataset_index, uint64_t aug_seed) {
  const TrainPair& pair = dataset_[static_cast<size_t>(dataset_index)];
  const Homography aug =
      sample_training_augmentation({}, pair.src.width, pair.src.height, aug_seed);
  WarpResult warped = warp(pair.src, aug, pair.src.width, pair.src.height);
  const Homography gt = pair.gt.compose(aug.inverse());  // warped src -> ref

  auto cache_it = ref_provider_cache_.find(dataset_index);
  if (cache_it == ref_provider_cache_.end()) {
    auto prov = std::make_shared<FeatureProvider>(
        FeatureProvider::fallback(pair.ref, weights_.config.alpha));
    cache_it = ref_provider_cache_.emplace(dataset_index, std::move(prov)).first;
  }
  FeatureProvider src_provider = FeatureProvider::fallback(warped.image, weights_.config.alpha);

  MatchOptions opts;
  opts.provider_src = &src_provider;
  opts.provider_ref = cache_it->second.get();
  opts.detect_mask_src = &warped.valid;

  ForwardResult fwd = match_forward(warped.image, pair.ref, weights_, opts);
  PairLoss out;
  if (fwd.empty()) {
    out.skipped = true;
    return out;
  }
  // keypoints live in the (possibly resized) matching frame; move the ground
  // truth into that frame
  Homography gt_frame = Homography::scaling(fwd.diag.scale_ref)
                            .compose(gt)
                            .compose(Homography::scaling(1.0 / fwd.diag.scale_src));
  std::vector<std::array<double, 2>> pos_s, pos_r;
  pos_s.reserve(fwd.kpts_src.size());
  for (const Keypoint& kp : fwd.kpts_src.points) pos_s.push_back({kp.x, kp.y});
  pos_r.reserve(fwd.kpts_ref.size());
  for (const Keypoint& kp : fwd.kpts_ref.points) pos_r.push_back({kp.x, kp.y});

  LabelSets labels = make_labels(pos_s, pos_r, gt_frame, cfg_.th_pos, cfg_.th_neg);
  MatchSet predicted = extract_matches(fwd.p, cfg_.tau);
  QuadrupletLoss ql = quadruplet_loss(fwd.p, labels, predicted);
  if (!std::isfinite(ql.breakdown.total)) {
    throw std::runtime_error("trainer: non-finite loss on pair '" + pair.id + "' (aug seed " +
                             std::to_string(aug_seed) + ")");
  }
  out.scaled_total = affine(ql.total, 1.0 / cfg_.batch_size, 0.0);
  out.breakdown = ql.breakdown;
  return out;
}

LossBreakdown Trainer::step() {
  LossBreakdown sum;
  int contributing = 0;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const int idx = static_cast<int>((step_index_ * cfg_.batch_size + b) % dataset_.size());
    const uint64_t aug_seed =
        RngStream::derive(cfg_.seed, {0xA06, static_cast<uint64_t>(step_index_), static_cast<uint64_t>(b)})
            .next_u64();
    PairLoss pl = forward_pair(idx, aug_seed);
    if (pl.skipped) continue;
    backward(pl.scaled_total);
    sum.pos += pl.breakdown.pos;
    sum.neg += pl.breakdown.neg;
    sum.fp += pl.breakdown.fp;
    sum.fn += pl.breakdown.fn;
    sum.total += pl.breakdown.total;
    sum.n_pos += pl.breakdown.n_pos;
    sum.n_neg += pl.breakdown.n_neg;
    sum.n_fp += pl.breakdown.n_fp;
    sum.n_fn += pl.breakdown.n_fn;
    ++contributing;
  }
  if (contributing > 0) {
    const double inv = 1.0 / contributing;
    sum.pos *= inv;
    sum.neg *= inv;
    sum.fp *= inv;
    sum.fn *= inv;
    sum.total *= inv;
  }
  auto params = weights_.named_params();
  adam_.step(params);
  weights_.zero_grads();
  ++step_index_;
  return sum;
}

void Trainer::save_checkpoint(const std::string& path) const {
  std::map<std::string, Tensor> entries = weights_.to_entries();
  entries.emplace("adam.step", Tensor::scalar(static_cast<double>(adam_.step_count())));
  for (const auto& [name, m] : adam_.first_moments()) {
    entries.emplace("adam.m." + name, Tensor::leaf({static_cast<int>(m.size())}, m));
  }
  for (const auto& [name, v] : adam_.second_moments()) {
    entries.emplace("adam.v." + name, Tensor::leaf({static_cast<int>(v.size())}, v));
  }
  save_mgck(path, entries);
}

void Trainer::restore_checkpoint(const std::string& path) {
  std::map<std::string, Tensor> entries = load_mgck(path);
  for (auto& [name, t] : weights_.named_params()) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("checkpoint missing entry '" + name + "': " + path);
    t.set_values(it->second.values());
  }
  auto step_it = entries.find("adam.step");
  if (step_it != entries.end()) {
    std::map<std::string, std::vector<double>> m, v;
    for (const auto& [name, t] : entries) {
      if (name.rfind("adam.m.", 0) == 0) m[name.substr(7)] = t.values();
      if (name.rfind("adam.v.", 0) == 0) v[name.substr(7)] = t.values();
    }
    adam_.restore(static_cast<int64_t>(step_it->second.scalar_value()), std::move(m), std::move(v));
    step_index_ = adam_.step_count();
  }
}

}  // namespace mimatch
