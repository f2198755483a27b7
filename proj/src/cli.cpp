#include "mret/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "mret/config.hpp"
#include "mret/metrics.hpp"
#include "mret/rollout.hpp"

namespace mret {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExitError : std::runtime_error {
  ExitError(int code, const std::string& msg) : std::runtime_error(msg), code(code) {}
  int code;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

std::string lock_text(const RunConfig& cfg) {
  json doc = to_json(cfg);
  doc["streams"] = {{"seed", cfg.train.seed},
                    {"names", {"init", "data-shuffle", "center-draw", "group", "predict"}}};
  return doc.dump(2) + "\n";
}

json center_json(const AlignCenter& c) {
  return {{"position", c.position}, {"longer_axis", c.longer_is_width ? "width" : "height"}};
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<int> frames;
  std::optional<std::string> mode, strategy;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.deterministic) cfg.train.deterministic = true;
  if (a.frames) cfg.model.frames = *a.frames;
  if (a.mode) cfg.sampler = parse_sampler_mode(*a.mode);
  if (a.strategy) cfg.strategy = parse_frame_strategy(*a.strategy);
  cfg.model.validate();

  if (cfg.data.train_manifest.empty()) throw ConfigError("config has no data.train_manifest");
  if (!fs::exists(cfg.data.train_manifest))
    throw ConfigError("dataset manifest not found: " + cfg.data.train_manifest.string());
  const auto train_set = load_manifest(cfg.data.train_manifest);
  std::vector<LabeledVideo> val_set;
  if (!cfg.data.val_manifest.empty()) {
    if (!fs::exists(cfg.data.val_manifest))
      throw ConfigError("validation manifest not found: " + cfg.data.val_manifest.string());
    val_set = load_manifest(cfg.data.val_manifest);
  }
  for (const auto& v : train_set) validate(v.video, cfg.train.mos_lo, cfg.train.mos_hi);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_text(dir / "config.lock.json", lock_text(cfg));

  TrainOptions opts;
  opts.sampler = cfg.sampler;
  opts.strategy = cfg.strategy;
  const TrainResult r = train_loop(train_set, val_set, cfg.model, cfg.train, opts);

  const json hist = history_json(r.history);
  write_text(dir / "history.csv", history_csv(r.history));
  const int last_epoch = r.history.empty() ? 0 : r.history.back().epoch;
  save_checkpoint(dir / "ckpt_final", Checkpoint{cfg, r.params, r.opt, hist, last_epoch});
  save_checkpoint(dir / "ckpt_best", Checkpoint{cfg, r.best_params, r.best_opt, hist, r.best_epoch});

  if (r.diverged) throw ExitError(2, r.divergence_message);
  json summary{{"steps", r.history.size()},
               {"final_loss", r.history.empty() ? 0.0 : r.history.back().train_loss},
               {"best_epoch", r.best_epoch}};
  summary["best_srcc"] = r.best_srcc ? json(*r.best_srcc) : json(nullptr);
  out << summary.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string ckpt, video, trace;
  int frames = 0;
  std::optional<std::string> mode, strategy;
  bool no_residual = false;
};

ClipOptions clip_options(const RunConfig& cfg, const std::optional<std::string>& mode,
                         const std::optional<std::string>& strategy, int frames) {
  ClipOptions clip;
  clip.center = CenterMode::infer;
  clip.sampler = mode ? parse_sampler_mode(*mode) : cfg.sampler;
  clip.strategy = strategy ? parse_frame_strategy(*strategy) : cfg.strategy;
  clip.frames = frames;
  clip.sampler_seed = cfg.train.seed;
  return clip;
}

// The pyramid frame at the smallest resolution L/N, reported in the pixel
// space that the scale-N patch grid describes.
std::pair<Frame, AlignCenter> overlay_frame(const PyramidGroup& pyr, const AlignCenter& center,
                                            const MultiResConfig& mr) {
  for (std::size_t j = pyr.frames.size(); j-- > 0;) {
    const Frame& f = pyr.frames[j];
    if (f.shorter_side() == mr.smallest_side()) {
      AlignCenter c = center;
      c.frame_sizes.back() = FrameSize{f.height, f.width};
      return {f, c};
    }
  }
  throw RolloutError("no frame at the smallest resolution in this group");
}

void write_trace(const fs::path& dir, const Prediction& pred, const FrameSequence& video, const RunConfig& cfg,
                 const ClipOptions& clip, const RolloutOptions& ropts) {
  fs::create_directories(dir);
  const auto& tr = pred.trace;
  const auto pyramids = prepare_pyramids(video, cfg.model, clip);
  const auto profile = temporal_profile(tr, ropts);
  export_temporal_csv(dir / "temporal.csv", profile);
  for (std::size_t g = 0; g < tr.spatial_attention.size(); ++g) {
    const auto map = spatial_heatmap(tr, g, ropts);
    const auto [frame, center] = overlay_frame(pyramids[g], tr.center, cfg.model.multires);
    char name[32];
    std::snprintf(name, sizeof name, "group_%03zu", g);
    export_heatmap(dir / name, map, frame, cfg.model.multires, center, cfg.model.multires.scales);
  }
  json meta{{"score", pred.score},
            {"frames", tr.frames},
            {"time_steps", tr.time_steps},
            {"groups", tr.spatial_attention.size()},
            {"mode", to_string(tr.mode)},
            {"strategy", to_string(tr.strategy)},
            {"center", center_json(tr.center)},
            {"residual", ropts.residual},
            {"temporal_profile", profile}};
  write_text(dir / "trace.json", meta.dump(2) + "\n");
}

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  if (!fs::exists(a.video)) throw VideoError("no such file or directory: " + a.video);
  const FrameSequence video = load_frames(a.video);
  validate(video, -1e300, 1e300);
  ClipOptions clip = clip_options(ck.config, a.mode, a.strategy, a.frames);
  clip.retain_attention = !a.trace.empty();
  const Prediction pred = predict(video, ck.params, ck.config.model, clip);
  const double score = ck.config.train.to_mos(pred.score);
  if (!a.trace.empty()) {
    RolloutOptions ropts;
    ropts.residual = !a.no_residual;
    Prediction scaled = pred;
    scaled.score = score;
    write_trace(a.trace, scaled, video, ck.config, clip, ropts);
  }
  out << json{{"score", score}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, manifest;
  int frames = 0;
  std::optional<std::string> mode, strategy;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  if (!fs::exists(a.manifest)) throw ConfigError("manifest not found: " + a.manifest);
  const auto videos = load_manifest(a.manifest);
  if (videos.size() < 2)
    throw CorrelationError("need ≥ 2 labeled videos, got " + std::to_string(videos.size()));
  const ClipOptions clip = clip_options(ck.config, a.mode, a.strategy, a.frames);
  const EvalResult r = evaluate(videos, ck.params, ck.config.model, ck.config.train, clip);
  // Surface the underlying correlation error (e.g. constant predictions).
  const double s = r.srcc ? *r.srcc : srcc(r.predictions, r.labels);
  const double p = r.plcc ? *r.plcc : plcc(r.predictions, r.labels);
  out << json{{"srcc", s}, {"plcc", p}, {"n", videos.size()}}.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string config, video;
  int group = 0;
  std::optional<std::string> mode, strategy;
  std::optional<std::uint64_t> seed;  // draws a training-mode centre when set
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  const MultiResConfig& mr = cfg.model.multires;
  cfg.model.validate();
  if (!fs::exists(a.video)) throw VideoError("no such file or directory: " + a.video);
  const FrameSequence video = load_frames(a.video);
  validate(video, -1e300, 1e300);

  const SamplerMode mode = a.mode ? parse_sampler_mode(*a.mode) : cfg.sampler;
  const FrameStrategy strategy = a.strategy ? parse_frame_strategy(*a.strategy) : cfg.strategy;
  const auto groups =
      group_frames(sample_frames(video, static_cast<std::size_t>(cfg.model.frames), strategy), mr.scales);
  if (a.group < 0 || static_cast<std::size_t>(a.group) >= groups.size())
    throw ConfigError("group index " + std::to_string(a.group) + " out of range [0, " +
                      std::to_string(groups.size()) + ")");

  const SamplerMode layout = mode == SamplerMode::random ? SamplerMode::mret : mode;
  const PyramidGroup pyr = build_pyramid(groups[static_cast<std::size_t>(a.group)], mr, layout);
  Rng rng = Rng::derive(a.seed.value_or(0), "center-draw");
  const AlignCenter center = choose_center(pyr, mr, a.seed ? CenterMode::train : CenterMode::infer, rng);
  Rng group_rng = Rng::derive(a.seed.value_or(0), "group", static_cast<std::uint64_t>(a.group));
  const TubeBatch tubes = sample_tubes(pyr, center, mr, mode, group_rng);

  const auto sides = pyramid_sides(mr, mode);
  const auto pitches = frame_pitches(mr, mode);
  const auto [lo, hi] = center_range(pyr, mr);
  json frames = json::array();
  for (std::size_t j = 0; j < pyr.frames.size(); ++j) {
    const FrameSize size{pyr.frames[j].height, pyr.frames[j].width};
    const int pitch = pitches[j];
    const auto centers = grid_centers(size, center, pitch, mr.grid);
    json pts = json::array(), boxes = json::array();
    for (const auto& c : centers) pts.push_back({c.y, c.x});
    for (std::size_t t = 0; t < tubes.count(); ++t) {
      const auto& b = tubes.boxes[t * pyr.frames.size() + j];
      boxes.push_back({b.y, b.x, b.y + mr.patch, b.x + mr.patch});
    }
    const double half = pitch / 2.0;
    frames.push_back({{"index", j + 1},
                      {"height", size.height},
                      {"width", size.width},
                      {"shorter_side", sides[j]},
                      {"pitch", pitch},
                      {"gap", pitch - mr.patch},
                      {"window",
                       {{"y0", centers.front().y - half},
                        {"x0", centers.front().x - half},
                        {"y1", centers.back().y + half},
                        {"x1", centers.back().x + half}}},
                      {"patch_centers", pts},
                      {"boxes", boxes}});
  }
  json doc{{"group", a.group},
           {"groups", groups.size()},
           {"mode", to_string(mode)},
           {"scales", mr.scales},
           {"grid", mr.grid},
           {"patch", mr.patch},
           {"sides", sides},
           {"pitches", pitches},
           {"center", center_json(center)},
           {"center_range", {lo, hi}},
           {"frames", frames}};
  out << doc.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_counts(const std::string& config, std::optional<int> frames, std::ostream& out) {
  const RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
  const int f = frames.value_or(cfg.model.frames);
  const FlopCount macs = count_macs(cfg.model, f);
  out << json{{"params", count_params(cfg.model)},
              {"gflops", macs.total() / 1e9},
              {"gflops_2x", 2.0 * macs.total() / 1e9},
              {"frames", f},
              {"macs",
               {{"embedding", macs.embedding},
                {"spatial", macs.spatial},
                {"temporal", macs.temporal},
                {"head", macs.head},
                {"total", macs.total()}}}}
             .dump()
      << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& manifest, const std::string& out_dir, std::ostream& out) {
  if (!fs::exists(manifest)) throw ConfigError("manifest not found: " + manifest);
  const auto videos = load_manifest(manifest);
  const fs::path dir = out_dir;
  fs::create_directories(dir);
  json entries = json::array();
  for (const auto& v : videos) {
    save_raw_video(dir / v.name, v.video);
    entries.push_back({{"path", v.name}, {"mos", v.mos}, {"name", v.name}});
  }
  write_text(dir / "manifest.json", json{{"videos", entries}}.dump(2) + "\n");
  out << json{{"written", videos.size()}, {"manifest", (dir / "manifest.json").string()}}.dump() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-resolution video quality transformer"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train from a run configuration");
  train->add_option("--config", ta.config, "Run configuration JSON")->required();
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "Override train.seed");
  train->add_flag("--deterministic", ta.deterministic, "Deterministic mode");
  train->add_option("--frames", ta.frames, "Override model.frames");
  train->add_option("--mode", ta.mode, "Sampler mode")->check(CLI::IsMember({"mret", "random", "highres_last", "fixed"}));
  train->add_option("--strategy", ta.strategy, "Frame strategy")->check(CLI::IsMember({"uniform", "front", "center"}));

  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Score one video");
  score->add_option("--ckpt", sa.ckpt, "Checkpoint directory")->required();
  score->add_option("--video", sa.video, "Frame directory or raw video")->required();
  score->add_option("--frames", sa.frames, "Clip length (default: model frames)");
  score->add_option("--mode", sa.mode, "Sampler mode")->check(CLI::IsMember({"mret", "random", "highres_last", "fixed"}));
  score->add_option("--strategy", sa.strategy, "Frame strategy")->check(CLI::IsMember({"uniform", "front", "center"}));
  score->add_option("--trace", sa.trace, "Write attention rollout artifacts here");
  score->add_flag("--no-residual", sa.no_residual, "Rollout without the identity term");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a manifest and report correlations");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint directory")->required();
  eval->add_option("--manifest", ea.manifest, "Labeled manifest")->required();
  eval->add_option("--frames", ea.frames, "Clip length (default: model frames)");
  eval->add_option("--mode", ea.mode, "Sampler mode")->check(CLI::IsMember({"mret", "random", "highres_last", "fixed"}));
  eval->add_option("--strategy", ea.strategy, "Frame strategy")->check(CLI::IsMember({"uniform", "front", "center"}));

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Dump patch geometry for one frame group");
  inspect->add_option("--config", ia.config, "Run configuration (default: published configuration)");
  inspect->add_option("--video", ia.video, "Frame directory or raw video")->required();
  inspect->add_option("--group", ia.group, "Group index, 0-based");
  inspect->add_option("--mode", ia.mode, "Sampler mode")->check(CLI::IsMember({"mret", "random", "highres_last", "fixed"}));
  inspect->add_option("--strategy", ia.strategy, "Frame strategy")->check(CLI::IsMember({"uniform", "front", "center"}));
  inspect->add_option("--seed", ia.seed, "Draw a training-mode centre from this seed");

  std::string counts_config;
  std::optional<int> counts_frames;
  auto* counts = app.add_subcommand("counts", "Analytic parameter and FLOP counts");
  counts->add_option("--config", counts_config, "Run configuration (default: published configuration)");
  counts->add_option("--frames", counts_frames, "Clip length (default: model frames)");

  std::string synth_manifest, synth_out;
  auto* synth = app.add_subcommand("synth", "Materialize the synthetic videos of a manifest");
  synth->add_option("--manifest", synth_manifest, "Manifest with synth entries")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", e.what()}}.dump() << '\n';
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(ta, out);
    if (score->parsed()) return cmd_score(sa, out);
    if (eval->parsed()) return cmd_eval(ea, out);
    if (inspect->parsed()) return cmd_inspect(ia, out);
    if (counts->parsed()) return cmd_counts(counts_config, counts_frames, out);
    if (synth->parsed()) return cmd_synth(synth_manifest, synth_out, out);
  } catch (const ExitError& e) {
    err << json{{"error", e.what()}}.dump() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    err << json{{"error", e.what()}}.dump() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace mret
