#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mimatch/rng.hpp"
#include "mimatch/synth.hpp"
#include "mimatch/training.hpp"

using namespace mimatch;

namespace {

std::vector<std::array<double, 2>> pts(std::initializer_list<std::array<double, 2>> l) { return l; }

// tiny textured pair for fast training tests
TrainPair tiny_pair(uint64_t seed, int size = 96) {
  RngStream rng(seed);
  Image img = Image::create(size, size, 1);
  // blobs over a gradient background so the detector finds stable corners
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) img.at(x, y) = 0.25f + 0.2f * static_cast<float>(x) / size;
  }
  for (int b = 0; b < 24; ++b) {
    const int cx = rng.uniform_int(6, size - 7);
    const int cy = rng.uniform_int(6, size - 7);
    const int r = rng.uniform_int(2, 5);
    const float v = static_cast<float>(rng.uniform(0.55, 1.0));
    for (int y = std::max(0, cy - r); y <= std::min(size - 1, cy + r); ++y) {
      for (int x = std::max(0, cx - r); x <= std::min(size - 1, cx + r); ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.at(x, y) = v;
      }
    }
  }
  TrainPair pair;
  pair.id = "tiny_" + std::to_string(seed);
  pair.src = img;
  // the reference is a contrast-flipped rendition of the same scene
  pair.ref = img;
  for (float& p : pair.ref.pixels) p = 1.0f - p * 0.8f;
  pair.gt = Homography::identity();
  return pair;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 2;
  cfg.keypoint_cap = 48;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.width = 16;
  cfg.seed = 7;
  cfg.synthetic = 0;
  cfg.manifest = "unused";
  return cfg;
}

}  // namespace

// ---- labels -------------------------------------------------------------------

TEST_CASE("label classification by symmetric distance") {
  const Homography id = Homography::identity();
  {
    // exact correspondence
    LabelSets l = make_labels(pts({{10, 10}}), pts({{10, 10}}), id);
    REQUIRE(l.pos.size() == 1);
    CHECK(l.pos[0] == std::pair<int, int>{0, 0});
    CHECK(l.neg.empty());
    CHECK(l.ignore.empty());
  }
  {
    // 4.5 px apart: between th_pos=3 and th_neg=6
    LabelSets l = make_labels(pts({{10, 10}}), pts({{14.5, 10}}), id);
    CHECK(l.pos.empty());
    CHECK(l.neg.empty());
    REQUIRE(l.ignore.size() == 1);
  }
  {
    // 10 px apart: negative
    LabelSets l = make_labels(pts({{10, 10}}), pts({{20, 10}}), id);
    CHECK(l.pos.empty());
    REQUIRE(l.neg.size() == 1);
  }
}

TEST_CASE("labels partition the candidate grid") {
  RngStream rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int ns = rng.uniform_int(1, 20), nr = rng.uniform_int(1, 20);
    std::vector<std::array<double, 2>> src, ref;
    for (int i = 0; i < ns; ++i) src.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
    for (int j = 0; j < nr; ++j) ref.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
    const Homography h = sample_training_augmentation({}, 100, 100, rng.next_u64());
    LabelSets l = make_labels(src, ref, h);
    CHECK(l.pos.size() + l.neg.size() + l.ignore.size() == static_cast<size_t>(ns) * nr);
  }
}

TEST_CASE("positive labels are one-to-one on both sides") {
  // two sources near the same reference point: only the mutual best pairs up
  LabelSets l = make_labels(pts({{10, 10}, {11, 10}}), pts({{10.2, 10}}), Homography::identity());
  REQUIRE(l.pos.size() == 1);
  CHECK(l.pos[0] == std::pair<int, int>{0, 0});
  // the d < th_pos pair that lost the argmin is ignored, not negative
  bool found_ignore = false;
  for (auto& pr : l.ignore) {
    if (pr == std::pair<int, int>{1, 0}) found_ignore = true;
  }
  CHECK(found_ignore);
}

TEST_CASE("labels are symmetric under (src,ref,H) <-> (ref,src,H^-1)") {
  RngStream rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::array<double, 2>> src, ref;
    for (int i = 0; i < 12; ++i) src.push_back({rng.uniform(0, 80), rng.uniform(0, 80)});
    for (int j = 0; j < 9; ++j) ref.push_back({rng.uniform(0, 80), rng.uniform(0, 80)});
    const Homography h = sample_training_augmentation({}, 80, 80, rng.next_u64());
    LabelSets fwd = make_labels(src, ref, h);
    LabelSets bwd = make_labels(ref, src, h.inverse());
    std::set<std::pair<int, int>> fwd_pos(fwd.pos.begin(), fwd.pos.end());
    std::set<std::pair<int, int>> bwd_pos_t;
    for (auto& [j, i] : bwd.pos) bwd_pos_t.insert({i, j});
    CHECK(fwd_pos == bwd_pos_t);
  }
}

TEST_CASE("degenerate homographies are rejected before labeling") {
  // singular matrices cannot even be constructed
  std::array<double, 9> bad{0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 1};
  CHECK_THROWS_AS(Homography{bad}, std::invalid_argument);
}

// ---- quadruplet loss ------------------------------------------------------------

namespace {

MatchSet match_set(std::initializer_list<std::pair<int, int>> pairs, const Tensor& p) {
  MatchSet ms;
  ms.src_matched.assign(static_cast<size_t>(p.rows()), 0);
  ms.ref_matched.assign(static_cast<size_t>(p.cols()), 0);
  for (auto& [i, j] : pairs) {
    ms.matches.push_back({i, j, p.values()[static_cast<size_t>(i) * p.cols() + j]});
    ms.src_matched[static_cast<size_t>(i)] = 1;
    ms.ref_matched[static_cast<size_t>(j)] = 1;
  }
  return ms;
}

}  // namespace

TEST_CASE("perfect positives with empty other sets give zero loss") {
  Tensor p = Tensor::leaf({2, 2}, {1.0, 0.0, 0.0, 1.0});
  LabelSets labels;
  labels.pos = {{0, 0}, {1, 1}};
  MatchSet predicted = match_set({{0, 0}, {1, 1}}, p);
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  CHECK(ql.breakdown.total == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(ql.breakdown.n_fp == 0);
  CHECK(ql.breakdown.n_fn == 0);
}

TEST_CASE("single positive at 0.5 gives ln 2") {
  Tensor p = Tensor::leaf({1, 1}, {0.5});
  LabelSets labels;
  labels.pos = {{0, 0}};
  MatchSet predicted = match_set({{0, 0}}, p);
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  CHECK(ql.breakdown.pos == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ql.breakdown.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("composite quadruplet case evaluates to 2 ln 2") {
  // Pos, Neg, FP, FN each a single pair at p = 0.5
  Tensor p = Tensor::full({4, 4}, 0.5);
  LabelSets labels;
  labels.pos = {{0, 0}, {3, 3}};           // (3,3) will be missed -> FN
  labels.neg = {{1, 1}};
  labels.ignore = {{2, 2}};
  MatchSet predicted = match_set({{0, 0}, {2, 2}}, p);  // (2,2) not positive -> FP
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  const double ln2 = std::log(2.0);
  CHECK(ql.breakdown.pos == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(ql.breakdown.neg == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(ql.breakdown.fp == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(ql.breakdown.fn == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(ql.breakdown.total == doctest::Approx(2 * ln2).epsilon(1e-9));
  CHECK(ql.breakdown.n_fp == 1);
  CHECK(ql.breakdown.n_fn == 1);
}

TEST_CASE("empty sets contribute zero") {
  Tensor p = Tensor::full({2, 2}, 0.3);
  LabelSets labels;  // everything empty
  MatchSet predicted;
  predicted.src_matched.assign(2, 0);
  predicted.ref_matched.assign(2, 0);
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  CHECK(ql.breakdown.total == 0.0);
}

TEST_CASE("loss gradients have the right signs") {
  // d total / d p_pos < 0 and d total / d p_neg > 0 at interior values
  std::vector<double> vals{0.4, 0.2, 0.3, 0.6};
  Tensor p = Tensor::leaf({2, 2}, vals, true);
  LabelSets labels;
  labels.pos = {{0, 0}};
  labels.neg = {{1, 1}};
  labels.ignore = {{0, 1}, {1, 0}};
  MatchSet predicted = match_set({{0, 0}}, p);
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  backward(ql.total);
  CHECK(p.grad()[0] < 0.0);
  CHECK(p.grad()[3] > 0.0);
  CHECK(p.grad()[1] == 0.0);  // ignored pairs carry no gradient
}

TEST_CASE("set weighting uses means: duplicating negatives keeps the loss") {
  Tensor p = Tensor::leaf({2, 2}, {0.8, 0.3, 0.4, 0.9});
  LabelSets labels1, labels2;
  labels1.pos = {{0, 0}};
  labels1.neg = {{0, 1}, {1, 0}};
  labels2.pos = {{0, 0}};
  labels2.neg = {{0, 1}, {1, 0}, {0, 1}, {1, 0}};  // doubled, same mean
  MatchSet predicted = match_set({{0, 0}}, p);
  QuadrupletLoss a = quadruplet_loss(p, labels1, predicted);
  QuadrupletLoss b = quadruplet_loss(p, labels2, predicted);
  CHECK(a.breakdown.total == doctest::Approx(b.breakdown.total).epsilon(1e-12));
}

TEST_CASE("eq-13 weighting is exact") {
  RngStream rng(12);
  std::vector<double> vals(9);
  for (double& v : vals) v = rng.uniform(0.05, 0.95);
  Tensor p = Tensor::leaf({3, 3}, vals);
  LabelSets labels;
  labels.pos = {{0, 0}};
  labels.neg = {{0, 1}, {1, 0}};
  labels.ignore = {{2, 2}};
  MatchSet predicted = match_set({{0, 0}, {1, 1}}, p);
  QuadrupletLoss ql = quadruplet_loss(p, labels, predicted);
  CHECK(ql.breakdown.total ==
        doctest::Approx(ql.breakdown.pos + (ql.breakdown.neg + ql.breakdown.fp + ql.breakdown.fn) / 3.0)
            .epsilon(1e-12));
}

// ---- synthetic pairs -------------------------------------------------------------

TEST_CASE("synthetic pairs are deterministic per seed") {
  const SynthPair a = make_synth_pair(11);
  const SynthPair b = make_synth_pair(11);
  CHECK(a.map_image.pixels == b.map_image.pixels);
  CHECK(a.photo_image.pixels == b.photo_image.pixels);
  CHECK(a.gt.coeffs() == b.gt.coeffs());
  const SynthPair c = make_synth_pair(12);
  CHECK(a.map_image.pixels != c.map_image.pixels);
}

TEST_CASE("synthetic pair dimensions and value range") {
  const SynthPair p = make_synth_pair(13);
  CHECK(p.map_image.width == 512);
  CHECK(p.map_image.height == 512);
  CHECK(p.photo_image.width == 512);
  for (float v : p.map_image.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  for (float v : p.photo_image.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("road masks align through the ground-truth homography") {
  // warp the photo road mask into the map frame and measure IoU on the
  // region the photo actually covers
  double worst = 1.0;
  for (uint64_t seed : {21, 22, 23}) {
    const SynthPair p = make_synth_pair(seed);
    Image mask_img = Image::create(512, 512, 1);
    for (size_t i = 0; i < mask_img.pixels.size(); ++i) mask_img.pixels[i] = p.road_mask_photo.data[i];
    WarpResult warped = warp(mask_img, p.gt, 512, 512);
    double inter = 0.0, uni = 0.0;
    for (int y = 0; y < 512; ++y) {
      for (int x = 0; x < 512; ++x) {
        if (!warped.valid[static_cast<size_t>(y) * 512 + x]) continue;
        const bool a = warped.image.at(x, y) > 0.5f;
        const bool b = p.road_mask_map.at(x, y) > 0.5f;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
      }
    }
    REQUIRE(uni > 100.0);
    worst = std::min(worst, inter / uni);
  }
  CHECK(worst >= 0.9);
}

TEST_CASE("modalities have distinct intensity histograms") {
  // floor 0.05 calibrated over 100 seeds (min observed 0.229, see
  // docs/calibration.md)
  for (int i = 0; i < 100; ++i) {
    const SynthPair p =
        synth_pairs(1, RngStream::derive(1000, {static_cast<uint64_t>(i)}).next_u64())[0];
    CHECK(histogram_chi_square(p.map_image, p.photo_image) >= 0.05);
  }
}

// ---- trainer ---------------------------------------------------------------------

TEST_CASE("zero learning rate leaves weights bit-identical") {
  TrainConfig cfg = tiny_train_config();
  cfg.lr = 0.0;
  cfg.manifest.clear();
  Trainer trainer(cfg, {tiny_pair(1), tiny_pair(2)});
  std::map<std::string, std::vector<double>> before;
  for (auto& [name, t] : trainer.weights().named_params()) before[name] = t.values();
  trainer.step();
  for (auto& [name, t] : trainer.weights().named_params()) CHECK(before.at(name) == t.values());
}

TEST_CASE("loss descends when overfitting a fixed toy batch") {
  TrainConfig cfg = tiny_train_config();
  cfg.manifest.clear();
  Trainer trainer(cfg, {tiny_pair(3), tiny_pair(4)});
  double first = 0.0, ema = 0.0;
  const double decay = 0.9;
  for (int s = 0; s < 100; ++s) {
    const LossBreakdown loss = trainer.step();
    if (s == 0) {
      first = loss.total;
      ema = loss.total;
    } else {
      ema = decay * ema + (1 - decay) * loss.total;
    }
  }
  CHECK(ema < first);
}

TEST_CASE("checkpoint resume reproduces the interrupted run bit-exactly") {
  const std::string ckpt = (std::filesystem::temp_directory_path() / "resume_test.mgck").string();
  TrainConfig cfg = tiny_train_config();
  cfg.manifest.clear();

  Trainer full(cfg, {tiny_pair(5), tiny_pair(6)});
  std::vector<double> full_losses;
  for (int s = 0; s < 6; ++s) full_losses.push_back(full.step().total);

  Trainer part(cfg, {tiny_pair(5), tiny_pair(6)});
  for (int s = 0; s < 3; ++s) part.step();
  part.save_checkpoint(ckpt);

  TrainConfig cfg2 = cfg;
  cfg2.resume = ckpt;
  Trainer resumed(cfg2, {tiny_pair(5), tiny_pair(6)});
  CHECK(resumed.steps_done() == 3);
  for (int s = 3; s < 6; ++s) {
    const double loss = resumed.step().total;
    CHECK(loss == full_losses[static_cast<size_t>(s)]);
  }
  std::filesystem::remove(ckpt);
}

TEST_CASE("train config parsing applies spec'd field names") {
  const std::string path = (std::filesystem::temp_directory_path() / "train_cfg.json").string();
  {
    std::ofstream out(path);
    out << R"({"lr": 0.001, "batch_size": 8, "steps": 50, "keypoint_cap": 256,
               "tau": 0.2, "th_pos": 3.0, "th_neg": 6.0, "eps_min": 80.0,
               "alpha": 4.0, "r_min": 1.0, "r_max": 7.0, "seed": 42,
               "synthetic": 16})";
  }
  TrainConfig cfg = load_train_config(path);
  CHECK(cfg.lr == doctest::Approx(0.001));
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.steps == 50);
  CHECK(cfg.keypoint_cap == 256);
  CHECK(cfg.tau == doctest::Approx(0.2));
  CHECK(cfg.eps_min == doctest::Approx(80.0));
  CHECK(cfg.seed == 42);
  CHECK(cfg.synthetic == 16);
  std::filesystem::remove(path);

  const std::string bad = (std::filesystem::temp_directory_path() / "train_bad.json").string();
  {
    std::ofstream out(bad);
    out << R"({"lr": 0.001})";
  }
  CHECK_THROWS_AS((void)load_train_config(bad), std::runtime_error);
  std::filesystem::remove(bad);
}
