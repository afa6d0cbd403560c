#include "mimatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "mimatch/checkpoint.hpp"
#include "mimatch/rng.hpp"

namespace mimatch {

void MatcherConfig::validate() const {
  if (layers <= 0 || heads <= 0 || width <= 0) throw std::invalid_argument("matcher config: bad sizes");
  if (width % (2 * heads) != 0) {
    throw std::invalid_argument("matcher config: width " + std::to_string(width) +
                                " must be divisible by 2*heads = " + std::to_string(2 * heads));
  }
  if (!(eps_min > 0.0)) throw std::invalid_argument("matcher config: eps_min must be positive");
  if (r_min > r_max) throw std::invalid_argument("matcher config: r_min > r_max");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("matcher config: tau outside [0,1]");
}

// ---- weights ----------------------------------------------------------------

namespace {

inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Tensor xavier(int fan_in, int fan_out, RngStream& rng, bool trainable) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> v(static_cast<size_t>(fan_in) * fan_out);
  for (double& x : v) x = snap_f32(rng.uniform(-limit, limit));
  return Tensor::leaf({fan_in, fan_out}, std::move(v), trainable);
}

Tensor zeros_vec(int n, bool trainable) { return Tensor::zeros({n}, trainable); }
Tensor ones_vec(int n, bool trainable) { return Tensor::full({n}, 1.0, trainable); }

MlpWeights init_mlp(int dim, RngStream& rng, bool trainable) {
  MlpWeights w;
  w.w1 = xavier(2 * dim, 2 * dim, rng, trainable);
  w.b1 = zeros_vec(2 * dim, trainable);
  w.ln_gain = ones_vec(2 * dim, trainable);
  w.ln_bias = zeros_vec(2 * dim, trainable);
  w.w2 = xavier(2 * dim, dim, rng, trainable);
  w.b2 = zeros_vec(dim, trainable);
  return w;
}

AttentionWeights init_attn(int dim, RngStream& rng, bool trainable) {
  AttentionWeights w;
  w.wq = xavier(dim, dim, rng, trainable);
  w.wk = xavier(dim, dim, rng, trainable);
  w.wx = xavier(dim, dim, rng, trainable);
  w.mlp = init_mlp(dim, rng, trainable);
  return w;
}

void collect_mlp(const std::string& prefix, const MlpWeights& w,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".w1", w.w1);
  out.emplace_back(prefix + ".b1", w.b1);
  out.emplace_back(prefix + ".g", w.ln_gain);
  out.emplace_back(prefix + ".b", w.ln_bias);
  out.emplace_back(prefix + ".w2", w.w2);
  out.emplace_back(prefix + ".b2", w.b2);
}

void collect_attn(const std::string& prefix, const AttentionWeights& w,
                  std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".q", w.wq);
  out.emplace_back(prefix + ".k", w.wk);
  out.emplace_back(prefix + ".wx", w.wx);
  collect_mlp(prefix + ".mlp", w.mlp, out);
}

constexpr int kManifestLen = 14;

Tensor config_manifest(const MatcherConfig& c) {
  std::vector<double> m{static_cast<double>(c.layers), static_cast<double>(c.heads),
                        static_cast<double>(c.width), c.tau, c.eps_min, c.alpha, c.r_min, c.r_max,
                        static_cast<double>(c.max_keypoints), c.score_floor,
                        static_cast<double>(c.c_str), static_cast<double>(c.c_sem),
                        c.use_semantic ? 1.0 : 0.0, static_cast<double>(c.resize_limit)};
  return Tensor::leaf({kManifestLen}, std::move(m));
}

MatcherConfig config_from_manifest(const Tensor& t) {
  if (t.numel() != kManifestLen) {
    throw std::runtime_error("checkpoint manifest has " + std::to_string(t.numel()) +
                             " fields, expected " + std::to_string(kManifestLen));
  }
  const auto& m = t.values();
  MatcherConfig c;
  c.layers = static_cast<int>(m[0]);
  c.heads = static_cast<int>(m[1]);
  c.width = static_cast<int>(m[2]);
  c.tau = m[3];
  c.eps_min = m[4];
  c.alpha = m[5];
  c.r_min = m[6];
  c.r_max = m[7];
  c.max_keypoints = static_cast<int>(m[8]);
  c.score_floor = m[9];
  c.c_str = static_cast<int>(m[10]);
  c.c_sem = static_cast<int>(m[11]);
  c.use_semantic = m[12] != 0.0;
  c.resize_limit = static_cast<int>(m[13]);
  return c;
}

}  // namespace

MatcherWeights MatcherWeights::init_random(const MatcherConfig& cfg, uint64_t seed, bool trainable) {
  cfg.validate();
  RngStream rng(seed);
  MatcherWeights w;
  w.config = cfg;
  const int d = cfg.width;
  w.fuse.w1 = xavier(cfg.c_str + cfg.c_sem, d, rng, trainable);
  w.fuse.b1 = zeros_vec(d, trainable);
  w.fuse.w2 = xavier(d, d, rng, trainable);
  w.fuse.b2 = zeros_vec(d, trainable);
  w.layers.resize(static_cast<size_t>(cfg.layers));
  for (auto& layer : w.layers) {
    layer.self_attn = init_attn(d, rng, trainable);
    layer.cross_attn = init_attn(d, rng, trainable);
  }
  w.head_src_w = xavier(d, d, rng, trainable);
  w.head_src_b = zeros_vec(d, trainable);
  w.head_ref_w = xavier(d, d, rng, trainable);
  w.head_ref_b = zeros_vec(d, trainable);
  return w;
}

std::vector<std::pair<std::string, Tensor>> MatcherWeights::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("fuse.w1", fuse.w1);
  out.emplace_back("fuse.b1", fuse.b1);
  out.emplace_back("fuse.w2", fuse.w2);
  out.emplace_back("fuse.b2", fuse.b2);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string pfx = "layer" + std::to_string(l);
    collect_attn(pfx + ".self", layers[l].self_attn, out);
    collect_attn(pfx + ".cross", layers[l].cross_attn, out);
  }
  out.emplace_back("head.src.linear", head_src_w);
  out.emplace_back("head.src.bias", head_src_b);
  out.emplace_back("head.ref.linear", head_ref_w);
  out.emplace_back("head.ref.bias", head_ref_b);
  return out;
}

void MatcherWeights::zero_grads() const {
  for (auto& [name, t] : named_params()) t.zero_grad();
}

std::map<std::string, Tensor> MatcherWeights::to_entries() const {
  std::map<std::string, Tensor> entries;
  for (auto& [name, t] : named_params()) entries.emplace(name, t);
  entries.emplace("manifest", config_manifest(config));
  return entries;
}

void MatcherWeights::save(const std::string& path) const { save_mgck(path, to_entries()); }

MatcherWeights MatcherWeights::load(const std::string& path, bool trainable) {
  std::map<std::string, Tensor> entries = load_mgck(path);
  auto mit = entries.find("manifest");
  if (mit == entries.end()) throw std::runtime_error("checkpoint has no manifest entry: " + path);
  MatcherConfig cfg = config_from_manifest(mit->second);
  MatcherWeights w = init_random(cfg, 0, trainable);
  for (auto& [name, t] : w.named_params()) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("checkpoint missing entry '" + name + "': " + path);
    if (it->second.shape() != t.shape()) {
      throw std::runtime_error("checkpoint entry '" + name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
    }
    t.set_values(it->second.values());
  }
  return w;
}

// ---- attention blocks --------------------------------------------------------

Tensor graph_attention(const Tensor& x_query, const Tensor& x_kv,
                       const std::vector<std::array<double, 2>>& pos_query,
                       const std::vector<std::array<double, 2>>& pos_kv,
                       const std::vector<uint8_t>& mask, const AttentionWeights& w, int heads,
                       const RopeBasis* rope) {
  const int nq = x_query.rows();
  const int nk = x_kv.rows();
  const int d = x_query.cols();
  if (d % heads != 0) throw std::invalid_argument("graph_attention: width not divisible by heads");
  const int hd = d / heads;
  if (static_cast<int64_t>(mask.size()) != static_cast<int64_t>(nq) * nk) {
    throw std::invalid_argument("graph_attention: mask size mismatch");
  }

  Tensor q = matmul(x_query, w.wq);
  Tensor k = matmul(x_kv, w.wk);
  Tensor v = matmul(x_kv, w.wx);

  std::vector<double> angles_q, angles_k;
  if (rope) {
    if (rope->head_dim() != hd) throw std::invalid_argument("graph_attention: rope basis head_dim mismatch");
    angles_q.reserve(static_cast<size_t>(nq) * (hd / 2));
    for (int i = 0; i < nq; ++i) {
      const auto a = rope->absolute_angles(pos_query[static_cast<size_t>(i)]);
      angles_q.insert(angles_q.end(), a.begin(), a.end());
    }
    angles_k.reserve(static_cast<size_t>(nk) * (hd / 2));
    for (int j = 0; j < nk; ++j) {
      const auto a = rope->absolute_angles(pos_kv[static_cast<size_t>(j)]);
      angles_k.insert(angles_k.end(), a.begin(), a.end());
    }
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor msg;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, hd);
    Tensor kh = slice_cols(k, h * hd, hd);
    Tensor vh = slice_cols(v, h * hd, hd);
    if (rope) {
      qh = rope_rotate(qh, angles_q);
      kh = rope_rotate(kh, angles_k);
    }
    Tensor scores = affine(matmul(qh, transpose(kh)), scale, 0.0);
    Tensor attn = masked_row_softmax(scores, mask);
    Tensor mh = matmul(attn, vh);
    msg = h == 0 ? mh : concat_last(msg, mh);
  }
  return msg;
}

Tensor residual_update(const Tensor& x, const Tensor& m, const MlpWeights& w) {
  Tensor t = concat_last(x, m);
  Tensor u = relu(layer_norm_rows(linear(t, w.w1, w.b1), w.ln_gain, w.ln_bias));
  return add(x, linear(u, w.w2, w.b2));
}

Tensor score_matrix(const Tensor& x_src, const Tensor& x_ref, const MatcherWeights& w) {
  Tensor a = linear(x_src, w.head_src_w, w.head_src_b);
  Tensor b = w.config.shared_head ? linear(x_ref, w.head_src_w, w.head_src_b)
                                  : linear(x_ref, w.head_ref_w, w.head_ref_b);
  return matmul(a, transpose(b));
}

Tensor dual_softmax(const Tensor& s) { return mul(row_softmax(s), col_softmax(s)); }

MatchSet extract_matches(const Tensor& p, double tau) {
  const int rows = p.rows();
  const int cols = p.cols();
  const auto& v = p.values();
  MatchSet out;
  out.src_matched.assign(static_cast<size_t>(rows), 0);
  out.ref_matched.assign(static_cast<size_t>(cols), 0);
  // argmax per row and per column; ties keep the lowest index
  std::vector<int> row_best(static_cast<size_t>(rows), 0);
  for (int i = 0; i < rows; ++i) {
    const double* ri = v.data() + static_cast<size_t>(i) * cols;
    int best = 0;
    for (int j = 1; j < cols; ++j) {
      if (ri[j] > ri[best]) best = j;
    }
    row_best[static_cast<size_t>(i)] = best;
  }
  std::vector<int> col_best(static_cast<size_t>(cols), 0);
  for (int j = 0; j < cols; ++j) {
    int best = 0;
    for (int i = 1; i < rows; ++i) {
      if (v[static_cast<size_t>(i) * cols + j] > v[static_cast<size_t>(best) * cols + j]) best = i;
    }
    col_best[static_cast<size_t>(j)] = best;
  }
  for (int i = 0; i < rows; ++i) {
    const int j = row_best[static_cast<size_t>(i)];
    const double conf = v[static_cast<size_t>(i) * cols + j];
    if (col_best[static_cast<size_t>(j)] == i && conf >= tau) {
      out.matches.push_back({i, j, conf});
      out.src_matched[static_cast<size_t>(i)] = 1;
      out.ref_matched[static_cast<size_t>(j)] = 1;
    }
  }
  return out;
}

std::vector<uint8_t> intra_mask(const IntraGraph& g) {
  const int n = static_cast<int>(g.neighbors.size());
  std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j : g.neighbors[static_cast<size_t>(i)]) mask[static_cast<size_t>(i) * n + j] = 1;
  }
  return mask;
}

std::vector<uint8_t> inter_mask(const InterGraph& g) {
  const int n = static_cast<int>(g.neighbors.size());
  const int m = g.target_count;
  std::vector<uint8_t> mask(static_cast<size_t>(n) * m, 0);
  for (int i = 0; i < n; ++i) {
    for (int j : g.neighbors[static_cast<size_t>(i)]) mask[static_cast<size_t>(i) * m + j] = 1;
  }
  return mask;
}

// ---- pipeline ----------------------------------------------------------------

namespace {

// zero the detection score wherever the (eroded) mask is off
void apply_detect_mask(FloatMap& score, const std::vector<uint8_t>& mask, int erode_radius) {
  const int w = score.width, h = score.height;
  if (static_cast<int64_t>(mask.size()) != static_cast<int64_t>(w) * h) {
    throw std::invalid_argument("detect mask size does not match image");
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool keep = true;
      for (int dy = -erode_radius; keep && dy <= erode_radius; ++dy) {
        for (int dx = -erode_radius; keep && dx <= erode_radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h ||
              !mask[static_cast<size_t>(ny) * w + nx]) {
            keep = false;
          }
        }
      }
      if (!keep) score.at(x, y) = 0.0f;
    }
  }
}

struct SideFeatures {
  KeypointSet kpts;
  DescriptorBundle bundle;
};

SideFeatures detect_and_describe(const Image& image, const FeatureProvider& provider,
                                 const MatcherWeights& w, const std::vector<uint8_t>* detect_mask) {
  const MatcherConfig& cfg = w.config;
  const Image gray = to_grayscale(image);
  const SaliencyMap sal = saliency_map(gray, cfg.alpha);
  const RadiusMap radii = radius_map(sal, cfg.r_min, cfg.r_max);
  FloatMap score = provider.score_map();
  if (detect_mask) apply_detect_mask(score, *detect_mask, 3);
  SideFeatures side;
  side.kpts = anms_detect(score, radii, cfg.max_keypoints, cfg.score_floor);
  if (!side.kpts.empty()) {
    // semantic branch off: the structural map feeds both inputs
    FeatureProvider const& p = provider;
    DescriptorBundle b;
    b.count = static_cast<int>(side.kpts.size());
    b.c_str = p.structural().channels;
    b.d_str = sample_at_keypoints(p.structural(), side.kpts);
    const DenseMap& sem_map = cfg.use_semantic ? p.semantic() : p.structural();
    b.c_sem = sem_map.channels;
    b.d_sem = sample_at_keypoints(sem_map, side.kpts);
    b.positions.reserve(side.kpts.size());
    for (const Keypoint& kp : side.kpts.points) {
      b.positions.push_back({static_cast<double>(kp.x), static_cast<double>(kp.y)});
    }
    Tensor ts = Tensor::leaf({b.count, b.c_str}, b.d_str);
    Tensor te = Tensor::leaf({b.count, b.c_sem}, b.d_sem);
    b.fused = fuse_descriptors(ts, te, w.fuse);
    side.bundle = std::move(b);
  }
  return side;
}

}  // namespace

ForwardResult match_forward(const Image& src, const Image& ref, const MatcherWeights& weights,
                            const MatchOptions& opts) {
  const MatcherConfig& cfg = weights.config;
  cfg.validate();
  ForwardResult out;

  // imported providers match the native image resolution, so resizing is
  // skipped for them
  Image src_rs = src, ref_rs = ref;
  if (!opts.provider_src && !opts.provider_ref) {
    ResizeResult r1 = resize_longside(src, cfg.resize_limit);
    ResizeResult r2 = resize_longside(ref, cfg.resize_limit);
    src_rs = std::move(r1.image);
    ref_rs = std::move(r2.image);
    out.diag.scale_src = r1.scale;
    out.diag.scale_ref = r2.scale;
  }

  FeatureProvider prov_src =
      opts.provider_src ? *opts.provider_src : FeatureProvider::fallback(src_rs, cfg.alpha);
  FeatureProvider prov_ref =
      opts.provider_ref ? *opts.provider_ref : FeatureProvider::fallback(ref_rs, cfg.alpha);

  SideFeatures fs = detect_and_describe(src_rs, prov_src, weights, opts.detect_mask_src);
  SideFeatures fr = detect_and_describe(ref_rs, prov_ref, weights, nullptr);
  out.kpts_src = fs.kpts;
  out.kpts_ref = fr.kpts;
  out.diag.keypoints_src = static_cast<int>(fs.kpts.size());
  out.diag.keypoints_ref = static_cast<int>(fr.kpts.size());
  if (fs.kpts.empty() || fr.kpts.empty()) {
    out.diag.empty_side = true;
    return out;
  }
  out.d_sem_src = fs.bundle.d_sem;
  out.d_sem_ref = fr.bundle.d_sem;

  const auto& pos_s = fs.bundle.positions;
  const auto& pos_r = fr.bundle.positions;
  const int ns = fs.bundle.count;
  const int nr = fr.bundle.count;

  // inter graphs are built once from the initial semantic descriptors
  std::vector<uint8_t> mask_sr, mask_rs;
  if (cfg.graph_masks) {
    mask_sr = inter_mask(build_inter_graph(fs.bundle.d_sem, ns, fr.bundle.d_sem, nr, fs.bundle.c_sem));
    mask_rs = inter_mask(build_inter_graph(fr.bundle.d_sem, nr, fs.bundle.d_sem, ns, fs.bundle.c_sem));
  } else {
    mask_sr.assign(static_cast<size_t>(ns) * nr, 1);
    mask_rs.assign(static_cast<size_t>(nr) * ns, 1);
  }

  const double eps0_s = std::max(max_pairwise_distance(pos_s), cfg.eps_min);
  const double eps0_r = std::max(max_pairwise_distance(pos_r), cfg.eps_min);
  const int hd = cfg.width / cfg.heads;
  const RopeBasis rope_s(hd, std::hypot(src_rs.width, src_rs.height));
  const RopeBasis rope_r(hd, std::hypot(ref_rs.width, ref_rs.height));

  Tensor xs = fs.bundle.fused;
  Tensor xr = fr.bundle.fused;
  for (int l = 0; l < cfg.layers; ++l) {
    std::vector<uint8_t> self_mask_s, self_mask_r;
    if (cfg.graph_masks) {
      self_mask_s = intra_mask(build_intra_graph(pos_s, epsilon_schedule(l, cfg.layers, eps0_s, cfg.eps_min), l));
      self_mask_r = intra_mask(build_intra_graph(pos_r, epsilon_schedule(l, cfg.layers, eps0_r, cfg.eps_min), l));
    } else {
      self_mask_s.assign(static_cast<size_t>(ns) * ns, 1);
      self_mask_r.assign(static_cast<size_t>(nr) * nr, 1);
    }
    const AttentionWeights& sa = weights.layers[static_cast<size_t>(l)].self_attn;
    Tensor ms = graph_attention(xs, xs, pos_s, pos_s, self_mask_s, sa, cfg.heads, &rope_s);
    Tensor mr = graph_attention(xr, xr, pos_r, pos_r, self_mask_r, sa, cfg.heads, &rope_r);
    xs = residual_update(xs, ms, sa.mlp);
    xr = residual_update(xr, mr, sa.mlp);

    const AttentionWeights& ca = weights.layers[static_cast<size_t>(l)].cross_attn;
    Tensor cs = graph_attention(xs, xr, pos_s, pos_r, mask_sr, ca, cfg.heads, nullptr);
    Tensor cr = graph_attention(xr, xs, pos_r, pos_s, mask_rs, ca, cfg.heads, nullptr);
    xs = residual_update(xs, cs, ca.mlp);
    xr = residual_update(xr, cr, ca.mlp);
  }

  out.s = score_matrix(xs, xr, weights);
  out.p = dual_softmax(out.s);
  return out;
}

PipelineResult match_pipeline(const Image& src, const Image& ref, const MatcherWeights& weights,
                              const MatchOptions& opts) {
  ForwardResult fwd = match_forward(src, ref, weights, opts);
  PipelineResult out;
  out.diag = fwd.diag;
  out.kpts_src = fwd.kpts_src;
  out.kpts_ref = fwd.kpts_ref;
  // back to original resolution
  for (Keypoint& kp : out.kpts_src.points) {
    kp.x = static_cast<float>(kp.x / fwd.diag.scale_src);
    kp.y = static_cast<float>(kp.y / fwd.diag.scale_src);
  }
  for (Keypoint& kp : out.kpts_ref.points) {
    kp.x = static_cast<float>(kp.x / fwd.diag.scale_ref);
    kp.y = static_cast<float>(kp.y / fwd.diag.scale_ref);
  }
  if (fwd.empty()) return out;
  out.set = extract_matches(fwd.p, weights.config.tau);
  out.points.reserve(out.set.matches.size());
  for (const Match& m : out.set.matches) {
    const Keypoint& a = out.kpts_src.points[static_cast<size_t>(m.src_index)];
    const Keypoint& b = out.kpts_ref.points[static_cast<size_t>(m.ref_index)];
    out.points.push_back({a.x, a.y, b.x, b.y, m.confidence});
  }
  return out;
}

}  // namespace mimatch
