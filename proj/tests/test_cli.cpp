#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mret/cli.hpp"
#include "support.hpp"

using namespace mret;
using namespace mret::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

json tiny_run_config(const std::string& manifest, int epochs = 2) {
  return {{"model",
           {{"dim", 16},
            {"spatial_layers", 1},
            {"temporal_layers", 1},
            {"heads", 2},
            {"mlp_dim", 32},
            {"frames", 8},
            {"normalize_input", true},
            {"init_std", 0.3}}},
          {"multires", {{"scales", 2}, {"largest_side", 32}, {"patch", 4}, {"grid", 4}}},
          {"train",
           {{"base_lr", 0.01}, {"batch_size", 4}, {"epochs", epochs}, {"seed", 3}, {"mos_normalization", true}}},
          {"data", {{"train_manifest", manifest}}}};
}

json synth_manifest(int count, std::uint64_t seed = 1) {
  json videos = json::array();
  for (int i = 0; i < count; ++i)
    videos.push_back({{"synth",
                       {{"pattern", i % 2 ? "gradient" : "moving-disc"},
                        {"distortion", "additive-noise"},
                        {"severity", 0.125 * i},
                        {"frames", 8},
                        {"height", 48},
                        {"width", 64}}},
                      {"name", "v" + std::to_string(i)}});
  return {{"seed", seed}, {"videos", videos}};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// Trains the tiny config on 8 synthetic videos once for the whole suite.
struct Trained {
  TempDir dir{"cli_trained"};
  Run train;
  Trained() {
    write_json(dir / "manifest.json", synth_manifest(8));
    write_json(dir / "config.json", tiny_run_config("manifest.json"));
    train = cli({"train", "--config", (dir / "config.json").string(), "--out", (dir / "run").string(),
                 "--deterministic"});
    cli({"synth", "--manifest", (dir / "manifest.json").string(), "--out", (dir / "videos").string()});
  }
  fs::path ckpt() const { return dir / "run" / "ckpt_final"; }
  fs::path video(int i) const { return dir / "videos" / ("v" + std::to_string(i)); }
};

const Trained& trained() {
  static Trained t;
  return t;
}

}  // namespace

TEST_CASE("counts") {
  const Run r = cli({"counts"});
  REQUIRE(r.code == 0);
  const json j = r.doc();
  CHECK(std::abs(j["params"].get<double>() / 144e6 - 1.0) <= 0.03);
  CHECK(j["frames"] == 128);
  CHECK(j["gflops_2x"].get<double>() == doctest::Approx(2 * j["gflops"].get<double>()));

  TempDir dir("counts");
  json cfg{{"model", {{"dim", 2}, {"spatial_layers", 1}, {"temporal_layers", 1}, {"heads", 1}, {"mlp_dim", 4},
                      {"frames", 4}}},
           {"multires", {{"scales", 2}, {"largest_side", 8}, {"patch", 2}, {"grid", 2}}}};
  write_json(dir / "tiny.json", cfg);
  const json t = cli({"counts", "--config", (dir / "tiny.json").string()}).doc();
  CHECK(t["params"] == 195);
  CHECK(t["macs"]["total"] == 1100);
}

TEST_CASE("inspect") {
  TempDir dir("inspect");
  SynthSpec spec;
  spec.frames = 4;
  spec.height = 24;
  spec.width = 32;
  save_raw_video(dir / "video", synth_video(spec, 1));
  const Run r = cli({"inspect", "--video", (dir / "video").string()});
  REQUIRE(r.code == 0);
  const json j = r.doc();
  CHECK(j["pitches"] == json({64, 48, 32, 16}));
  CHECK(j["sides"] == json({896, 672, 448, 224}));
  CHECK(j["groups"] == 32);
  CHECK(j["center"]["position"] == 0.5);
  REQUIRE(j["frames"].size() == 4);
  for (const auto& f : j["frames"]) {
    CHECK(f["window"]["y1"].get<double>() - f["window"]["y0"].get<double>() == f["shorter_side"].get<double>());
    CHECK(f["patch_centers"].size() == 196);
  }

  const Run bad = cli({"inspect", "--video", (dir / "video").string(), "--group", "32"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("out of range") != std::string::npos);
  CHECK(json::parse(bad.err).contains("error"));
}

TEST_CASE("train writes its artifacts") {
  const auto& t = trained();
  REQUIRE(t.train.code == 0);
  const fs::path run = t.dir / "run";
  for (const char* f : {"config.lock.json", "history.csv", "ckpt_final/manifest.json", "ckpt_best/manifest.json"})
    CHECK(fs::exists(run / f));
  // 8 videos, batch 4, 2 epochs: 4 rows plus the header.
  const std::string hist = slurp(run / "history.csv");
  CHECK(std::count(hist.begin(), hist.end(), '\n') == 5);
  CHECK(t.train.doc()["steps"] == 4);
}

TEST_CASE("train is reproducible and the lock file round-trips") {
  const auto& t = trained();
  TempDir dir("cli_rerun");
  // The lock file refers to the manifest by absolute path, so it can be rerun from anywhere.
  const Run again = cli({"train", "--config", (t.dir / "run" / "config.lock.json").string(), "--out",
                         (dir / "run").string(), "--deterministic"});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir / "run" / "history.csv") == slurp(t.dir / "run" / "history.csv"));
  CHECK(slurp(dir / "run" / "ckpt_final" / "manifest.bin") == slurp(t.dir / "run" / "ckpt_final" / "manifest.bin"));
  CHECK(slurp(dir / "run" / "config.lock.json") == slurp(t.dir / "run" / "config.lock.json"));
}

TEST_CASE("train error cases") {
  TempDir dir("cli_errors");
  write_json(dir / "config.json", tiny_run_config("does/not/exist.json"));
  const Run missing = cli({"train", "--config", (dir / "config.json").string(), "--out", (dir / "o").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("does/not/exist.json") != std::string::npos);

  json cfg = tiny_run_config("m.json");
  cfg["model"]["dimension"] = 4;
  write_json(dir / "unknown.json", cfg);
  const Run unknown = cli({"train", "--config", (dir / "unknown.json").string(), "--out", (dir / "o").string()});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("dimension") != std::string::npos);

  write_json(dir / "m.json", synth_manifest(2));
  json diverge = tiny_run_config("m.json", 20);
  diverge["train"]["base_lr"] = 1e30;
  diverge["train"]["mos_normalization"] = false;
  write_json(dir / "diverge.json", diverge);
  const Run d = cli({"train", "--config", (dir / "diverge.json").string(), "--out", (dir / "d").string()});
  CHECK(d.code == 2);
  CHECK(fs::exists(dir / "d" / "ckpt_final" / "manifest.json"));

  CHECK(cli({"train", "--config", (dir / "config.json").string()}).code == 1);
  CHECK(cli({"bogus"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("score") {
  const auto& t = trained();
  const std::string ckpt = t.ckpt().string(), video = t.video(3).string();
  const Run a = cli({"score", "--ckpt", ckpt, "--video", video});
  const Run b = cli({"score", "--ckpt", ckpt, "--video", video});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(std::isfinite(a.doc()["score"].get<double>()));

  TempDir dir("cli_trace");
  const Run traced = cli({"score", "--ckpt", ckpt, "--video", video, "--frames", "4", "--trace", (dir / "tr").string()});
  REQUIRE(traced.code == 0);
  const json meta = json::parse(slurp(dir / "tr" / "trace.json"));
  CHECK(meta["frames"] == 4);
  CHECK(meta["time_steps"] == 2);
  CHECK(meta["temporal_profile"].size() == 2);
  CHECK(fs::exists(dir / "tr" / "temporal.csv"));
  CHECK(fs::exists(dir / "tr" / "group_001" / "heatmap.pgm"));
  CHECK(fs::exists(dir / "tr" / "group_001" / "overlay.png"));

  for (const char* mode : {"mret", "random", "highres_last", "fixed"})
    for (const char* strategy : {"uniform", "front", "center"}) {
      const Run r = cli({"score", "--ckpt", ckpt, "--video", video, "--mode", mode, "--strategy", strategy});
      CHECK(r.code == 0);
    }
  CHECK(cli({"score", "--ckpt", ckpt, "--video", (dir / "nope").string()}).code == 1);
  CHECK(cli({"score", "--ckpt", (dir / "nope").string(), "--video", video}).code == 1);
}

TEST_CASE("eval") {
  const auto& t = trained();
  TempDir dir("cli_eval");
  const std::string ckpt = t.ckpt().string();

  write_json(dir / "one.json", {{"videos", {{{"path", t.video(0).string()}, {"mos", 50}}}}});
  const Run one = cli({"eval", "--ckpt", ckpt, "--manifest", (dir / "one.json").string()});
  CHECK(one.code == 1);
  CHECK(one.err.find("need ≥ 2") != std::string::npos);

  // Labels set to the model's own predictions give perfect correlation.
  json videos = json::array();
  for (int i = 0; i < 8; ++i) {
    const double s = cli({"score", "--ckpt", ckpt, "--video", t.video(i).string()}).doc()["score"];
    videos.push_back({{"path", t.video(i).string()}, {"mos", std::clamp(s, 0.0, 100.0)}});
  }
  write_json(dir / "self.json", {{"videos", videos}});
  const Run self = cli({"eval", "--ckpt", ckpt, "--manifest", (dir / "self.json").string()});
  REQUIRE(self.code == 0);
  CHECK(self.doc()["n"] == 8);
  CHECK(self.doc()["srcc"].get<double>() == doctest::Approx(1.0));
}
