#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "mimatch/descriptors.hpp"
#include "mimatch/rng.hpp"

using namespace mimatch;
using mimatch::testing::check_gradient;

namespace {

DenseMap ramp_map(int gh, int gw, int channels, int stride) {
  DenseMap m = DenseMap::create(gh, gw, channels, stride);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      for (int c = 0; c < channels; ++c) {
        m.cell(x, y)[c] = static_cast<float>(100 * c + 10 * y + x);
      }
    }
  }
  return m;
}

KeypointSet kpts_at(std::vector<std::pair<float, float>> pts, int w, int h) {
  KeypointSet set;
  set.image_width = w;
  set.image_height = h;
  for (auto& [x, y] : pts) set.points.push_back({x, y, 1.0f});
  return set;
}

FusionWeights random_fusion(int c_in, int dim, uint64_t seed, bool trainable) {
  RngStream rng(seed);
  auto mk = [&](int r, int c) {
    std::vector<double> v(static_cast<size_t>(r) * c);
    for (double& x : v) x = rng.uniform(-0.5, 0.5);
    return Tensor::leaf({r, c}, std::move(v), trainable);
  };
  FusionWeights w;
  w.w1 = mk(c_in, dim);
  w.b1 = Tensor::zeros({dim}, trainable);
  w.w2 = mk(dim, dim);
  w.b2 = Tensor::zeros({dim}, trainable);
  return w;
}

}  // namespace

TEST_CASE("sampling at a cell center returns that cell") {
  DenseMap m = ramp_map(4, 4, 3, 8);  // cells at pixels 0, 8, 16, 24
  KeypointSet kp = kpts_at({{16.0f, 8.0f}}, 32, 32);
  auto v = sample_at_keypoints(m, kp);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(10 * 1 + 2));
  CHECK(v[1] == doctest::Approx(100 + 10 * 1 + 2));
  CHECK(v[2] == doctest::Approx(200 + 10 * 1 + 2));
}

TEST_CASE("sampling midway between two cells averages them") {
  DenseMap m = ramp_map(2, 2, 1, 4);
  KeypointSet kp = kpts_at({{2.0f, 0.0f}}, 8, 8);  // halfway between cells (0,0) and (1,0)
  auto v = sample_at_keypoints(m, kp);
  CHECK(v[0] == doctest::Approx(0.5));
}

TEST_CASE("sampling outside the grid clamps to the corner cell") {
  DenseMap m = ramp_map(3, 3, 1, 8);
  KeypointSet kp = kpts_at({{100.0f, 100.0f}, {0.0f, 0.0f}}, 24, 24);
  auto v = sample_at_keypoints(m, kp);
  CHECK(v[0] == doctest::Approx(10 * 2 + 2));
  CHECK(v[1] == doctest::Approx(0.0));
}

TEST_CASE("zero fusion weights yield the normalized bias") {
  const int c = 4, dim = 6;
  FusionWeights w;
  w.w1 = Tensor::zeros({2 * c, dim});
  w.b1 = Tensor::full({dim}, 0.5);
  w.w2 = Tensor::zeros({dim, dim});
  std::vector<double> b2(dim);
  for (int i = 0; i < dim; ++i) b2[static_cast<size_t>(i)] = i + 1.0;
  w.b2 = Tensor::leaf({dim}, b2);

  Tensor d_str = Tensor::leaf({2, c}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor d_sem = Tensor::leaf({2, c}, {8, 7, 6, 5, 4, 3, 2, 1});
  Tensor fused = fuse_descriptors(d_str, d_sem, w);

  double norm = 0.0;
  for (double v : b2) norm += v * v;
  norm = std::sqrt(norm);
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < dim; ++i) {
      CHECK(fused.values()[static_cast<size_t>(r) * dim + i] ==
            doctest::Approx(b2[static_cast<size_t>(i)] / norm).epsilon(1e-9));
    }
  }
}

TEST_CASE("fused rows are unit length") {
  FusionWeights w = random_fusion(8, 16, 5, false);
  RngStream rng(6);
  std::vector<double> a(3 * 4), b(3 * 4);
  for (double& x : a) x = rng.uniform(-1, 1);
  for (double& x : b) x = rng.uniform(-1, 1);
  Tensor fused = fuse_descriptors(Tensor::leaf({3, 4}, a), Tensor::leaf({3, 4}, b), w);
  for (int r = 0; r < 3; ++r) {
    double norm = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double v = fused.values()[static_cast<size_t>(r) * 16 + i];
      norm += v * v;
    }
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("fusion gradients match finite differences") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    RngStream rng(seed + 500);
    FusionWeights w = random_fusion(6, 8, seed, false);
    std::vector<double> sem(2 * 3);
    for (double& x : sem) x = rng.uniform(-1, 1);
    Tensor d_sem = Tensor::leaf({2, 3}, sem);
    Tensor proj = Tensor::leaf({2, 8}, [&] {
      std::vector<double> v(16);
      for (double& x : v) x = rng.uniform(-1, 1);
      return v;
    }());
    auto fn_str = [&](const Tensor& x) { return inner(fuse_descriptors(x, d_sem, w), proj); };
    auto res = check_gradient(fn_str, {2, 3}, rng, -1.0, 1.0, 1e-5, 1e-4);
    CHECK_MESSAGE(res.ok, "d_str seed ", seed, " max rel err ", res.max_rel_err);

    std::vector<double> str(2 * 3);
    for (double& x : str) x = rng.uniform(-1, 1);
    Tensor d_str = Tensor::leaf({2, 3}, str);
    auto fn_sem = [&](const Tensor& x) { return inner(fuse_descriptors(d_str, x, w), proj); };
    auto res2 = check_gradient(fn_sem, {2, 3}, rng, -1.0, 1.0, 1e-5, 1e-4);
    CHECK_MESSAGE(res2.ok, "d_sem seed ", seed, " max rel err ", res2.max_rel_err);
  }
}

TEST_CASE("fusion is row-wise: permuting rows permutes outputs") {
  FusionWeights w = random_fusion(8, 8, 9, false);
  RngStream rng(10);
  std::vector<double> a(3 * 4), b(3 * 4);
  for (double& x : a) x = rng.uniform(-1, 1);
  for (double& x : b) x = rng.uniform(-1, 1);
  Tensor fused = fuse_descriptors(Tensor::leaf({3, 4}, a), Tensor::leaf({3, 4}, b), w);

  // swap rows 0 and 2 of both inputs
  auto swap_rows = [](std::vector<double> v, int r0, int r1, int c) {
    for (int i = 0; i < c; ++i) std::swap(v[static_cast<size_t>(r0) * c + i], v[static_cast<size_t>(r1) * c + i]);
    return v;
  };
  Tensor fused_sw = fuse_descriptors(Tensor::leaf({3, 4}, swap_rows(a, 0, 2, 4)),
                                     Tensor::leaf({3, 4}, swap_rows(b, 0, 2, 4)), w);
  for (int i = 0; i < 8; ++i) {
    CHECK(fused.values()[i] == fused_sw.values()[static_cast<size_t>(2) * 8 + i]);
    CHECK(fused.values()[static_cast<size_t>(2) * 8 + i] == fused_sw.values()[i]);
    CHECK(fused.values()[static_cast<size_t>(1) * 8 + i] == fused_sw.values()[static_cast<size_t>(1) * 8 + i]);
  }
}

TEST_CASE("row i of the fusion depends only on row i of the inputs") {
  FusionWeights w = random_fusion(8, 8, 12, false);
  RngStream rng(13);
  std::vector<double> a(3 * 4), b(3 * 4);
  for (double& x : a) x = rng.uniform(-1, 1);
  for (double& x : b) x = rng.uniform(-1, 1);
  Tensor fused = fuse_descriptors(Tensor::leaf({3, 4}, a), Tensor::leaf({3, 4}, b), w);
  // zero all other rows; row 1 must not change
  std::vector<double> a2(a), b2(b);
  for (int i = 0; i < 4; ++i) {
    a2[i] = b2[i] = 0.0;
    a2[static_cast<size_t>(2) * 4 + i] = b2[static_cast<size_t>(2) * 4 + i] = 0.0;
  }
  Tensor fused2 = fuse_descriptors(Tensor::leaf({3, 4}, a2), Tensor::leaf({3, 4}, b2), w);
  for (int i = 0; i < 8; ++i) {
    CHECK(fused.values()[static_cast<size_t>(1) * 8 + i] ==
          fused2.values()[static_cast<size_t>(1) * 8 + i]);
  }
}

TEST_CASE("describe_keypoints keeps raw semantic rows in the bundle") {
  Image img = Image::create(32, 32, 1);
  RngStream rng(14);
  for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
  FeatureProvider provider = FeatureProvider::fallback(img);
  KeypointSet kp = kpts_at({{8.0f, 8.0f}, {20.0f, 12.0f}}, 32, 32);
  FusionWeights w = random_fusion(2 * kFallbackChannels, 16, 15, false);
  DescriptorBundle bundle = describe_keypoints(kp, provider, w);
  REQUIRE(bundle.count == 2);
  CHECK(bundle.c_sem == kFallbackChannels);
  const auto direct = sample_at_keypoints(provider.semantic(), kp);
  CHECK(bundle.d_sem == direct);
  CHECK(bundle.positions[0][0] == 8.0);
  CHECK(bundle.fused.rows() == 2);
  CHECK(bundle.fused.cols() == 16);
}

TEST_CASE("fusion rejects mismatched shapes") {
  FusionWeights w = random_fusion(8, 8, 16, false);
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({2, 4});
  CHECK_THROWS_AS((void)fuse_descriptors(a, b, w), std::invalid_argument);
  Tensor c = Tensor::zeros({3, 5});  // width mismatch vs w1
  CHECK_THROWS_AS((void)fuse_descriptors(a, c, w), std::invalid_argument);
}
