#include "mimatch/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <fstream>
#include <iostream>

#include "mimatch/evaluate.hpp"
#include "mimatch/fmap.hpp"
#include "mimatch/overlay.hpp"
#include "mimatch/synth.hpp"
#include "mimatch/training.hpp"

namespace mimatch {

namespace {

MatcherWeights load_or_default_weights(const std::string& path, bool trainable = false) {
  if (!path.empty()) return MatcherWeights::load(path, trainable);
  // deterministic fallback so `match` works without a checkpoint
  return MatcherWeights::init_random(MatcherConfig{}, 0, trainable);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << text;
}

std::string matches_to_json(const PipelineResult& result, bool default_weights) {
  std::string out = "{\n  \"matches\": [";
  for (size_t i = 0; i < result.points.size(); ++i) {
    const MatchedPoint& m = result.points[i];
    if (i) out += ",";
    out += "\n    {\"src\": [" + json_double(m.x_src) + ", " + json_double(m.y_src) + "], \"ref\": [" +
           json_double(m.x_ref) + ", " + json_double(m.y_ref) + "], \"confidence\": " +
           json_double(m.confidence) + "}";
  }
  out += result.points.empty() ? "],\n" : "\n  ],\n";
  out += "  \"diagnostics\": {\"keypoints_src\": " + std::to_string(result.diag.keypoints_src) +
         ", \"keypoints_ref\": " + std::to_string(result.diag.keypoints_ref) +
         ", \"empty_side\": " + (result.diag.empty_side ? std::string("true") : std::string("false")) +
         ", \"default_weights\": " + (default_weights ? std::string("true") : std::string("false")) +
         "}\n}\n";
  return out;
}

int cmd_match(const std::string& src_path, const std::string& ref_path, const std::string& weights_path,
              const std::string& out_json, const std::string& out_png, const std::string& src_fmap,
              const std::string& ref_fmap, double tau_override) {
  MatcherWeights weights = load_or_default_weights(weights_path);
  if (tau_override >= 0.0) weights.config.tau = tau_override;
  const Image src = load_png(src_path);
  const Image ref = load_png(ref_path);

  MatchOptions opts;
  std::optional<FeatureProvider> prov_src, prov_ref;
  if (!src_fmap.empty()) {
    prov_src = FeatureProvider::imported_from_files(src, src_fmap + ".score.fmap",
                                                    src_fmap + ".str.fmap", src_fmap + ".sem.fmap");
    opts.provider_src = &*prov_src;
  }
  if (!ref_fmap.empty()) {
    prov_ref = FeatureProvider::imported_from_files(ref, ref_fmap + ".score.fmap",
                                                    ref_fmap + ".str.fmap", ref_fmap + ".sem.fmap");
    opts.provider_ref = &*prov_ref;
  }

  const PipelineResult result = match_pipeline(src, ref, weights, opts);
  const std::string json = matches_to_json(result, weights_path.empty());
  if (!out_json.empty()) {
    write_text(out_json, json);
  } else {
    std::cout << json;
  }
  if (!out_png.empty()) {
    // without ground truth every line renders against identity; the overlay is
    // for visual inspection, so color all matches green via a permissive gate
    save_png(render_overlay(src, ref, result.points, Homography::identity(),
                            std::numeric_limits<double>::infinity()),
             out_png);
  }
  return 0;
}

std::vector<EvalPair> eval_pairs_from_manifest(const std::string& manifest) {
  std::vector<TrainPair> loaded = load_pair_manifest(manifest);
  std::vector<EvalPair> pairs;
  pairs.reserve(loaded.size());
  for (auto& p : loaded) {
    pairs.push_back({p.id, std::move(p.src), std::move(p.ref), p.gt});
  }
  return pairs;
}

int cmd_eval(const std::string& manifest, const std::string& weights_path, const std::string& difficulty,
             int repeats, uint64_t seed, const std::string& out_path, int threads) {
  const MatcherWeights weights = load_or_default_weights(weights_path);
  const std::vector<EvalPair> pairs = eval_pairs_from_manifest(manifest);

  EvalOptions opts;
  opts.repeats = repeats;
  opts.seed = seed;
  opts.threads = threads;
  if (difficulty != "all") opts.difficulties = {difficulty_from_name(difficulty)};

  const Report report = evaluate(pairs, real_matcher(weights), opts);
  std::string config_echo = "{\"manifest\": \"" + manifest + "\", \"weights\": \"" + weights_path +
                            "\", \"repeats\": " + std::to_string(repeats) +
                            ", \"seed\": " + std::to_string(seed) +
                            ", \"ransac\": {\"threshold\": " + json_double(opts.ransac.threshold) +
                            ", \"iterations\": " + std::to_string(opts.ransac.max_iterations) +
                            ", \"confidence\": " + json_double(opts.ransac.confidence) +
                            "}, \"resize_limit\": " + std::to_string(opts.resize_limit) +
                            ", \"tau\": " + json_double(weights.config.tau) + "}";
  const std::string json = report_to_json(report, config_echo);
  if (!out_path.empty()) {
    write_text(out_path, json);
  } else {
    std::cout << json;
  }
  std::cerr << report_to_table(report);
  return 0;
}

int cmd_train(const std::string& config_path) {
  const TrainConfig cfg = load_train_config(config_path);
  std::vector<TrainPair> dataset;
  if (!cfg.manifest.empty()) {
    dataset = load_pair_manifest(cfg.manifest);
  } else {
    const std::vector<SynthPair> pairs = synth_pairs(cfg.synthetic, cfg.seed);
    for (size_t i = 0; i < pairs.size(); ++i) {
      dataset.push_back({"synth_" + std::to_string(i), pairs[i].photo_image, pairs[i].map_image,
                         pairs[i].gt});
    }
  }
  Trainer trainer(cfg, std::move(dataset));
  const std::filesystem::path out_dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  std::filesystem::create_directories(out_dir);
  for (int s = 0; s < cfg.steps; ++s) {
    const LossBreakdown loss = trainer.step();
    if (s % 10 == 0 || s + 1 == cfg.steps) {
      std::cerr << "step " << trainer.steps_done() << " loss " << loss.total << " (pos " << loss.pos
                << " neg " << loss.neg << " fp " << loss.fp << " fn " << loss.fn << ")\n";
    }
    if (cfg.checkpoint_every > 0 && trainer.steps_done() % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.mgck",
                    static_cast<long long>(trainer.steps_done()));
      trainer.save_checkpoint((out_dir / name).string());
    }
  }
  trainer.save_checkpoint((out_dir / "final.mgck").string());
  std::cout << "{\"steps\": " << trainer.steps_done() << ", \"checkpoint\": \""
            << (out_dir / "final.mgck").string() << "\"}\n";
  return 0;
}

int cmd_synth(int n, uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::vector<SynthPair> pairs = synth_pairs(n, seed);
  std::string manifest;
  for (size_t i = 0; i < pairs.size(); ++i) {
    char photo[64], map[64];
    std::snprintf(photo, sizeof(photo), "photo_%04zu.png", i);
    std::snprintf(map, sizeof(map), "map_%04zu.png", i);
    save_png(pairs[i].photo_image, (std::filesystem::path(out_dir) / photo).string());
    save_png(pairs[i].map_image, (std::filesystem::path(out_dir) / map).string());
    manifest += "{\"src\": \"" + std::string(photo) + "\", \"ref\": \"" + std::string(map) +
                "\", \"H\": [";
    const auto& h = pairs[i].gt.coeffs();
    for (int k = 0; k < 9; ++k) {
      if (k) manifest += ", ";
      manifest += json_double(h[static_cast<size_t>(k)]);
    }
    manifest += "]}\n";
  }
  write_text((std::filesystem::path(out_dir) / "manifest.jsonl").string(), manifest);
  std::cout << "{\"pairs\": " << n << ", \"out_dir\": \"" << out_dir << "\"}\n";
  return 0;
}

int cmd_extract(const std::string& image_path, const std::string& weights_path,
                const std::string& out_prefix) {
  const MatcherWeights weights = load_or_default_weights(weights_path);
  const Image image = load_png(image_path);
  const FeatureProvider provider = FeatureProvider::fallback(image, weights.config.alpha);
  DenseMap score = DenseMap::create(image.height, image.width, 1, 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      *score.cell(x, y) = provider.score_map().at(x, y);
    }
  }
  save_fmap(out_prefix + ".score.fmap", score);
  save_fmap(out_prefix + ".str.fmap", provider.structural());
  save_fmap(out_prefix + ".sem.fmap", provider.semantic());
  std::cout << "{\"image\": \"" << image_path << "\", \"prefix\": \"" << out_prefix << "\"}\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"multimodal image matching toolkit"};
  app.require_subcommand(1);

  // match
  std::string m_src, m_ref, m_weights, m_out_json, m_out_png, m_src_fmap, m_ref_fmap;
  double m_tau = -1.0;
  CLI::App* match_cmd = app.add_subcommand("match", "match two images");
  match_cmd->add_option("src", m_src, "source image (PNG)")->required();
  match_cmd->add_option("ref", m_ref, "reference image (PNG)")->required();
  match_cmd->add_option("--weights", m_weights, "MGCK checkpoint");
  match_cmd->add_option("--out-json", m_out_json, "write matches JSON here instead of stdout");
  match_cmd->add_option("--out-png", m_out_png, "write a side-by-side overlay PNG");
  match_cmd->add_option("--src-fmap", m_src_fmap, "imported feature prefix for the source image");
  match_cmd->add_option("--ref-fmap", m_ref_fmap, "imported feature prefix for the reference image");
  match_cmd->add_option("--tau", m_tau, "match confidence threshold override");

  // eval
  std::string e_manifest, e_weights, e_difficulty = "all", e_out;
  int e_repeats = 5, e_threads = 1;
  uint64_t e_seed = 0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "run the homography evaluation protocol");
  eval_cmd->add_option("--manifest", e_manifest, "JSONL pair manifest")->required();
  eval_cmd->add_option("--weights", e_weights, "MGCK checkpoint");
  eval_cmd->add_option("--difficulty", e_difficulty, "easy|normal|hard|all")
      ->check(CLI::IsMember({"easy", "normal", "hard", "all"}));
  eval_cmd->add_option("--repeats", e_repeats, "repeats per pair and difficulty");
  eval_cmd->add_option("--seed", e_seed, "master seed");
  eval_cmd->add_option("--out", e_out, "write the JSON report here instead of stdout");
  eval_cmd->add_option("--threads", e_threads, "parallel evaluation workers");

  // train
  std::string t_config;
  CLI::App* train_cmd = app.add_subcommand("train", "train the matcher");
  train_cmd->add_option("--config", t_config, "JSON training config")->required();

  // synth
  int s_n = 8;
  uint64_t s_seed = 0;
  std::string s_out_dir;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic cross-modal pairs");
  synth_cmd->add_option("--n", s_n, "number of pairs");
  synth_cmd->add_option("--seed", s_seed, "generator seed");
  synth_cmd->add_option("--out-dir", s_out_dir, "output directory")->required();

  // extract
  std::string x_image, x_weights, x_prefix;
  CLI::App* extract_cmd = app.add_subcommand("extract", "write fallback feature maps as FMAP files");
  extract_cmd->add_option("image", x_image, "input image (PNG)")->required();
  extract_cmd->add_option("--weights", x_weights, "MGCK checkpoint (supplies detector settings)");
  extract_cmd->add_option("--out-fmap", x_prefix, "output path prefix")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (match_cmd->parsed()) {
      return cmd_match(m_src, m_ref, m_weights, m_out_json, m_out_png, m_src_fmap, m_ref_fmap, m_tau);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(e_manifest, e_weights, e_difficulty, e_repeats, e_seed, e_out, e_threads);
    }
    if (train_cmd->parsed()) return cmd_train(t_config);
    if (synth_cmd->parsed()) return cmd_synth(s_n, s_seed, s_out_dir);
    if (extract_cmd->parsed()) return cmd_extract(x_image, x_weights, x_prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mimatch
