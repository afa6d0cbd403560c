#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mimatch/cli.hpp"
#include "mimatch/image.hpp"
#include "mimatch/matcher.hpp"
#include "mimatch/synth.hpp"

using namespace mimatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mimatch_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("unknown flags and missing arguments are usage errors") {
  CHECK(run_cli({"eval"}) == 1);                       // missing --manifest
  CHECK(run_cli({"match", "a.png"}) == 1);             // missing ref
  CHECK(run_cli({"bogus"}) == 1);                      // unknown subcommand
  CHECK(run_cli({"synth", "--wat", "1"}) == 1);        // unknown flag
  CHECK(run_cli({}) == 1);                             // no subcommand
}

TEST_CASE("runtime failures exit with code 2") {
  TempDir dir;
  CHECK(run_cli({"match", dir.file("missing_a.png"), dir.file("missing_b.png"), "--out-json",
                 dir.file("out.json")}) == 2);
}

TEST_CASE("synth is byte-identical across runs and eval consumes its manifest") {
  TempDir dir1, dir2;
  REQUIRE(run_cli({"synth", "--n", "2", "--seed", "7", "--out-dir", dir1.path.string()}) == 0);
  REQUIRE(run_cli({"synth", "--n", "2", "--seed", "7", "--out-dir", dir2.path.string()}) == 0);
  for (const char* name : {"photo_0000.png", "map_0000.png", "photo_0001.png", "map_0001.png",
                           "manifest.jsonl"}) {
    CHECK(slurp(dir1.file(name)) == slurp(dir2.file(name)));
  }
}

TEST_CASE("match on a flat image reports empty matches with exit 0") {
  TempDir dir;
  save_png(Image::create(64, 64, 1, 0.5f), dir.file("flat_a.png"));
  save_png(Image::create(64, 64, 1, 0.5f), dir.file("flat_b.png"));
  const std::string out = dir.file("matches.json");
  REQUIRE(run_cli({"match", dir.file("flat_a.png"), dir.file("flat_b.png"), "--out-json", out}) == 0);
  const std::string json = slurp(out);
  CHECK(json.find("\"matches\": []") != std::string::npos);
  CHECK(json.find("\"empty_side\": true") != std::string::npos);
}

TEST_CASE("match with a checkpoint writes matches and an overlay") {
  TempDir dir;
  const SynthPair pair = make_synth_pair(31);
  save_png(pair.photo_image, dir.file("photo.png"));
  save_png(pair.map_image, dir.file("map.png"));

  MatcherConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.width = 16;
  cfg.max_keypoints = 64;
  cfg.tau = 1e-4;
  MatcherWeights::init_random(cfg, 3).save(dir.file("w.mgck"));

  const std::string out = dir.file("matches.json");
  REQUIRE(run_cli({"match", dir.file("photo.png"), dir.file("map.png"), "--weights",
                   dir.file("w.mgck"), "--out-json", out, "--out-png", dir.file("overlay.png")}) == 0);
  const std::string json = slurp(out);
  CHECK(json.find("\"keypoints_src\"") != std::string::npos);
  CHECK(fs::exists(dir.file("overlay.png")));
  const Image overlay = load_png(dir.file("overlay.png"));
  CHECK(overlay.width == 1024);

  // identical invocations produce identical files
  const std::string out2 = dir.file("matches2.json");
  REQUIRE(run_cli({"match", dir.file("photo.png"), dir.file("map.png"), "--weights",
                   dir.file("w.mgck"), "--out-json", out2}) == 0);
  CHECK(slurp(out) == slurp(out2));
}

TEST_CASE("eval produces byte-identical reports across runs and thread counts") {
  TempDir dir;
  REQUIRE(run_cli({"synth", "--n", "2", "--seed", "5", "--out-dir", dir.path.string()}) == 0);
  MatcherConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.width = 8;
  cfg.max_keypoints = 48;
  MatcherWeights::init_random(cfg, 9).save(dir.file("w.mgck"));

  const std::string r1 = dir.file("report1.json");
  const std::string r2 = dir.file("report2.json");
  const std::string r3 = dir.file("report3.json");
  REQUIRE(run_cli({"eval", "--manifest", dir.file("manifest.jsonl"), "--weights", dir.file("w.mgck"),
                   "--difficulty", "easy", "--repeats", "2", "--seed", "3", "--out", r1}) == 0);
  REQUIRE(run_cli({"eval", "--manifest", dir.file("manifest.jsonl"), "--weights", dir.file("w.mgck"),
                   "--difficulty", "easy", "--repeats", "2", "--seed", "3", "--out", r2}) == 0);
  REQUIRE(run_cli({"eval", "--manifest", dir.file("manifest.jsonl"), "--weights", dir.file("w.mgck"),
                   "--difficulty", "easy", "--repeats", "2", "--seed", "3", "--out", r3,
                   "--threads", "4"}) == 0);
  CHECK(slurp(r1) == slurp(r2));
  CHECK(slurp(r1) == slurp(r3));
  CHECK(slurp(r1).find("\"difficulty\": \"easy\"") != std::string::npos);
}

TEST_CASE("extract writes importable fmap files") {
  TempDir dir;
  const SynthPair pair = make_synth_pair(41);
  save_png(pair.photo_image, dir.file("img.png"));
  const std::string prefix = dir.file("feat");
  REQUIRE(run_cli({"extract", dir.file("img.png"), "--out-fmap", prefix}) == 0);
  CHECK(fs::exists(prefix + ".score.fmap"));
  CHECK(fs::exists(prefix + ".str.fmap"));
  CHECK(fs::exists(prefix + ".sem.fmap"));

  // imported maps drive the matcher through the fmap flags
  save_png(pair.map_image, dir.file("ref.png"));
  REQUIRE(run_cli({"extract", dir.file("ref.png"), "--out-fmap", dir.file("ref_feat")}) == 0);
  const std::string out = dir.file("m.json");
  CHECK(run_cli({"match", dir.file("img.png"), dir.file("ref.png"), "--src-fmap", prefix,
                 "--ref-fmap", dir.file("ref_feat"), "--out-json", out, "--tau", "0.0001"}) == 0);
  CHECK(slurp(out).find("\"keypoints_src\"") != std::string::npos);
}

TEST_CASE("train runs end to end on a tiny synthetic config") {
  TempDir dir;
  {
    std::ofstream cfg(dir.file("train.json"));
    cfg << R"({"synthetic": 2, "steps": 2, "batch_size": 1, "keypoint_cap": 32,
               "layers": 1, "heads": 2, "width": 8, "lr": 0.001, "seed": 11,
               "out_dir": ")" << dir.path.string() << R"("})";
  }
  REQUIRE(run_cli({"train", "--config", dir.file("train.json")}) == 0);
  CHECK(fs::exists(dir.file("final.mgck")));
  // the checkpoint is loadable and self-describing
  MatcherWeights w = MatcherWeights::load(dir.file("final.mgck"));
  CHECK(w.config.layers == 1);
  CHECK(w.config.width == 8);
}
