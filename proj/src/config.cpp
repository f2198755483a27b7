#include "mret/config.hpp"

#include <fstream>
#include <set>

namespace mret {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
}

template <typename T>
void read(const json& section, const char* key, T& out) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return fs::absolute(base / p).lexically_normal();
}

}  // namespace

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  // "streams" is informational (written by the lock file) and ignored here.
  reject_unknown(doc, "<root>", {"model", "multires", "train", "data", "mode", "streams"});
  RunConfig cfg;
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    reject_unknown(m, "model", {"dim", "spatial_layers", "temporal_layers", "heads", "mlp_dim", "head_hidden",
                                "frames", "normalize_input", "dropout", "init_std"});
    read(m, "dim", cfg.model.dim);
    read(m, "spatial_layers", cfg.model.spatial_layers);
    read(m, "temporal_layers", cfg.model.temporal_layers);
    read(m, "heads", cfg.model.heads);
    read(m, "mlp_dim", cfg.model.mlp_dim);
    read(m, "head_hidden", cfg.model.head_hidden);
    read(m, "frames", cfg.model.frames);
    read(m, "normalize_input", cfg.model.normalize_input);
    read(m, "dropout", cfg.model.dropout);
    read(m, "init_std", cfg.model.init_std);
  }
  if (doc.contains("multires")) {
    const auto& m = doc["multires"];
    reject_unknown(m, "multires", {"scales", "largest_side", "patch", "grid"});
    read(m, "scales", cfg.model.multires.scales);
    read(m, "largest_side", cfg.model.multires.largest_side);
    read(m, "patch", cfg.model.multires.patch);
    read(m, "grid", cfg.model.multires.grid);
  }
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    reject_unknown(t, "train", {"base_lr", "momentum", "batch_size", "epochs", "seed", "deterministic",
                                "mos_normalization", "mos_range", "clip_grad_norm"});
    read(t, "base_lr", cfg.train.base_lr);
    read(t, "momentum", cfg.train.momentum);
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "epochs", cfg.train.epochs);
    read(t, "seed", cfg.train.seed);
    read(t, "deterministic", cfg.train.deterministic);
    read(t, "mos_normalization", cfg.train.mos_normalization);
    read(t, "clip_grad_norm", cfg.train.clip_grad_norm);
    if (t.contains("mos_range")) {
      const auto& r = t["mos_range"];
      if (!r.is_array() || r.size() != 2) throw ConfigError("train.mos_range must be [lo, hi]");
      cfg.train.mos_lo = r[0].get<double>();
      cfg.train.mos_hi = r[1].get<double>();
    }
  }
  if (doc.contains("data")) {
    const auto& d = doc["data"];
    reject_unknown(d, "data", {"train_manifest", "val_manifest"});
    std::string train, val;
    read(d, "train_manifest", train);
    read(d, "val_manifest", val);
    cfg.data.train_manifest = resolve(train, base_dir);
    cfg.data.val_manifest = resolve(val, base_dir);
  }
  if (doc.contains("mode")) {
    const auto& m = doc["mode"];
    reject_unknown(m, "mode", {"sampler", "strategy"});
    std::string sampler = "mret", strategy = "uniform";
    read(m, "sampler", sampler);
    read(m, "strategy", strategy);
    cfg.sampler = parse_sampler_mode(sampler);
    try {
      cfg.strategy = parse_frame_strategy(strategy);
    } catch (const VideoError& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(doc, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  return json{
      {"model",
       {{"dim", m.dim},
        {"spatial_layers", m.spatial_layers},
        {"temporal_layers", m.temporal_layers},
        {"heads", m.heads},
        {"mlp_dim", m.mlp_dim},
        {"head_hidden", m.head_hidden},
        {"frames", m.frames},
        {"normalize_input", m.normalize_input},
        {"dropout", m.dropout},
        {"init_std", m.init_std}}},
      {"multires",
       {{"scales", m.multires.scales},
        {"largest_side", m.multires.largest_side},
        {"patch", m.multires.patch},
        {"grid", m.multires.grid}}},
      {"train",
       {{"base_lr", t.base_lr},
        {"momentum", t.momentum},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"seed", t.seed},
        {"deterministic", t.deterministic},
        {"mos_normalization", t.mos_normalization},
        {"mos_range", {t.mos_lo, t.mos_hi}},
        {"clip_grad_norm", t.clip_grad_norm}}},
      {"data", {{"train_manifest", cfg.data.train_manifest.string()}, {"val_manifest", cfg.data.val_manifest.string()}}},
      {"mode", {{"sampler", to_string(cfg.sampler)}, {"strategy", to_string(cfg.strategy)}}},
  };
}

SynthSpec synth_spec_from_json(const json& j) {
  reject_unknown(j, "synth", {"pattern", "distortion", "severity", "frames", "height", "width"});
  SynthSpec s;
  std::string pattern = to_string(s.pattern), distortion = to_string(s.distortion);
  read(j, "pattern", pattern);
  read(j, "distortion", distortion);
  read(j, "severity", s.severity);
  read(j, "frames", s.frames);
  read(j, "height", s.height);
  read(j, "width", s.width);
  s.pattern = parse_pattern(pattern);
  s.distortion = parse_distortion(distortion);
  return s;
}

json to_json(const SynthSpec& s) {
  return json{{"pattern", to_string(s.pattern)}, {"distortion", to_string(s.distortion)}, {"severity", s.severity},
              {"frames", s.frames},           {"height", s.height},                     {"width", s.width}};
}

std::vector<LabeledVideo> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
  std::uint64_t seed = 0;
  json entries = doc;
  if (doc.is_object()) {
    reject_unknown(doc, "manifest", {"seed", "videos"});
    read(doc, "seed", seed);
    entries = doc.value("videos", json::array());
  }
  if (!entries.is_array()) throw ConfigError("manifest " + path.string() + " must list videos");

  const fs::path base = fs::absolute(path).parent_path();
  std::vector<LabeledVideo> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    reject_unknown(e, "manifest entry", {"path", "mos", "name", "synth", "seed"});
    LabeledVideo v;
    if (e.contains("synth")) {
      const SynthSpec spec = synth_spec_from_json(e["synth"]);
      std::uint64_t s = seed + i;
      read(e, "seed", s);
      v.video = synth_video(spec, s);
      v.name = e.value("name", "synth_" + std::to_string(i));
    } else if (e.contains("path")) {
      const fs::path p = resolve(e["path"].get<std::string>(), base);
      if (!fs::exists(p)) throw ConfigError("video path does not exist: " + p.string());
      v.video = load_frames(p);
      v.name = e.value("name", p.filename().string());
    } else {
      throw ConfigError("manifest entry " + std::to_string(i) + " needs 'path' or 'synth'");
    }
    if (e.contains("mos")) v.video.mos = e["mos"].get<double>();
    if (!v.video.mos) throw ConfigError("manifest entry " + std::to_string(i) + " (" + v.name + ") has no mos label");
    v.mos = *v.video.mos;
    out.push_back(std::move(v));
  }
  return out;
}

json history_json(const std::vector<HistoryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row{{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"train_loss", r.train_loss}};
    row["val_srcc"] = r.val_srcc ? json(*r.val_srcc) : json(nullptr);
    row["val_plcc"] = r.val_plcc ? json(*r.val_plcc) : json(nullptr);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace mret
