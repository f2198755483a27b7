#include "mret/model.hpp"

#include <cmath>

namespace mret {

void ModelConfig::validate() const {
  multires.validate();
  if (dim < 1 || heads < 1 || mlp_dim < 1 || frames < 1)
    throw ConfigError("model: dim, heads, mlp_dim and frames must be >= 1");
  if (dim % heads != 0)
    throw ConfigError("model: dim=" + std::to_string(dim) + " is not divisible by heads=" + std::to_string(heads));
  if (spatial_layers < 0 || temporal_layers < 0) throw ConfigError("model: layer counts must be >= 0");
  if (head_hidden < 0) throw ConfigError("model: head_hidden must be >= 0");
  if (dropout != 0.0) throw ConfigError("model: dropout is not supported (must be 0)");
  if (!(init_std > 0.0)) throw ConfigError("model: init_std must be > 0");
}

namespace {

enum class Init { trunc_normal, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

void add_block(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t d, std::size_t mlp) {
  specs.push_back({prefix + "ln1.gamma", {d}, Init::ones});
  specs.push_back({prefix + "ln1.beta", {d}, Init::zeros});
  for (const char* w : {"q", "k", "v", "o"}) {
    specs.push_back({prefix + "attn.w" + w, {d, d}, Init::trunc_normal});
    specs.push_back({prefix + "attn.b" + w, {d}, Init::zeros});
  }
  specs.push_back({prefix + "ln2.gamma", {d}, Init::ones});
  specs.push_back({prefix + "ln2.beta", {d}, Init::zeros});
  specs.push_back({prefix + "mlp.w1", {d, mlp}, Init::trunc_normal});
  specs.push_back({prefix + "mlp.b1", {mlp}, Init::zeros});
  specs.push_back({prefix + "mlp.w2", {mlp, d}, Init::trunc_normal});
  specs.push_back({prefix + "mlp.b2", {d}, Init::zeros});
}

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim, mlp = cfg.mlp_dim, hh = cfg.hidden();
  const std::size_t m = cfg.tokens(), t = cfg.time_steps();
  std::vector<ParamSpec> specs;
  specs.push_back({"embed.weight", {d, static_cast<std::size_t>(cfg.multires.tube_size())}, Init::trunc_normal});
  specs.push_back({"embed.bias", {d}, Init::zeros});
  specs.push_back({"spatial.cls", {d}, Init::zeros});
  specs.push_back({"spatial.pos", {m + 1, d}, Init::trunc_normal});
  for (int k = 0; k < cfg.spatial_layers; ++k) add_block(specs, "spatial.layer" + std::to_string(k) + ".", d, mlp);
  specs.push_back({"spatial.ln.gamma", {d}, Init::ones});
  specs.push_back({"spatial.ln.beta", {d}, Init::zeros});
  specs.push_back({"temporal.cls", {d}, Init::zeros});
  specs.push_back({"temporal.pos", {t + 1, d}, Init::trunc_normal});
  for (int q = 0; q < cfg.temporal_layers; ++q) add_block(specs, "temporal.layer" + std::to_string(q) + ".", d, mlp);
  specs.push_back({"temporal.ln.gamma", {d}, Init::ones});
  specs.push_back({"temporal.ln.beta", {d}, Init::zeros});
  specs.push_back({"head.w1", {d, hh}, Init::trunc_normal});
  specs.push_back({"head.b1", {hh}, Init::zeros});
  specs.push_back({"head.w2", {hh, 1}, Init::trunc_normal});
  specs.push_back({"head.b2", {1}, Init::zeros});
  return specs;
}

}  // namespace

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  std::map<std::string, Shape> out;
  for (auto& s : param_specs(cfg)) out.emplace(s.name, s.shape);
  return out;
}

ModelParams init_random(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init");
  ModelParams params;
  for (const auto& spec : param_specs(cfg)) {
    Tensor t(spec.shape, spec.init == Init::ones ? 1.0 : 0.0);
    if (spec.init == Init::trunc_normal)
      for (double& v : t.data()) v = rng.truncated_normal(cfg.init_std, 2.0);
    t.round_to_precision();
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

void check_params(const ModelParams& params, const ModelConfig& cfg) {
  const auto shapes = param_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("parameter " + name + " missing");
    if (it->second.shape() != shape)
      throw ConfigError("parameter " + name + " has shape " + shape_str(it->second.shape()) + ", config implies " +
                        shape_str(shape));
  }
  for (const auto& [name, t] : params)
    if (!shapes.count(name)) throw ConfigError("unexpected parameter " + name);
}

Tensor init_central_frame(const Tensor& image_embedding, int scales) {
  if (image_embedding.rank() != 2) throw ShapeError("image embedding must be rank 2, got " + shape_str(image_embedding.shape()));
  if (scales < 1) throw ShapeError("scale count must be >= 1");
  const std::size_t d = image_embedding.dim(0), k = image_embedding.dim(1);
  const std::size_t slot = static_cast<std::size_t>(scales / 2);
  Tensor e(Shape{d, k * scales}, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < k; ++c) e.at(r, slot * k + c) = image_embedding.at(r, c);
  return e;
}

Tensor load_image_embedding(const std::filesystem::path& sidecar, const ModelConfig& cfg) {
  const auto file = load_tensors(sidecar);
  auto it = file.tensors.find("patch_embedding");
  if (it == file.tensors.end()) throw FormatError("tensor file " + sidecar.string() + " has no 'patch_embedding'");
  const Shape expected{static_cast<std::size_t>(cfg.dim),
                       static_cast<std::size_t>(cfg.multires.patch * cfg.multires.patch * 3)};
  if (it->second.shape() != expected)
    throw ShapeError("patch_embedding shape mismatch: expected " + shape_str(expected) + ", found " +
                     shape_str(it->second.shape()));
  return it->second;
}

// --- graph construction -----------------------------------------------------

ParamVars::ParamVars(Tape& tape, const ModelParams& params) : tape_(&tape) {
  for (const auto& [name, t] : params) vars_.emplace(name, tape.parameter(t, name));
}

const Var& ParamVars::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("parameter " + name + " not bound");
  return it->second;
}

namespace {

// ImageNet channel statistics, used only when normalize_input is set.
constexpr double kChannelMean[3] = {0.485, 0.456, 0.406};
constexpr double kChannelStd[3] = {0.229, 0.224, 0.225};

Var linear(const ParamVars& p, const Var& x, const std::string& w, const std::string& b) {
  return ops::add(ops::matmul(x, p[w]), p[b]);
}

Var layer_norm(const ParamVars& p, const Var& x, const std::string& prefix) {
  return ops::layernorm(x, p[prefix + "gamma"], p[prefix + "beta"]);
}

Var self_attention(const ParamVars& p, const Var& x, const std::string& prefix, const ModelConfig& cfg,
                   std::vector<Tensor>* attention) {
  const Var q = linear(p, x, prefix + "wq", prefix + "bq");
  const Var k = linear(p, x, prefix + "wk", prefix + "bk");
  const Var v = linear(p, x, prefix + "wv", prefix + "bv");
  const std::size_t dh = cfg.head_dim();
  const std::size_t s = x.shape()[0];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor probs;
  if (attention) probs = Tensor(Shape{static_cast<std::size_t>(cfg.heads), s, s}, 0.0);
  std::vector<Var> outs;
  for (int h = 0; h < cfg.heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    const Var logits = ops::scale(ops::matmul_bt(ops::slice(q, 1, b, e), ops::slice(k, 1, b, e)), scale);
    const Var a = ops::softmax(logits);
    if (attention) std::copy(a.value().data().begin(), a.value().data().end(), probs.data().begin() + h * s * s);
    outs.push_back(ops::matmul(a, ops::slice(v, 1, b, e)));
  }
  if (attention) attention->push_back(std::move(probs));
  const Var merged = outs.size() == 1 ? outs[0] : ops::concat(outs, 1);
  return linear(p, merged, prefix + "wo", prefix + "bo");
}

Var encoder_block(const ParamVars& p, const Var& x, const std::string& prefix, const ModelConfig& cfg,
                  std::vector<Tensor>* attention) {
  const Var attended = ops::add(self_attention(p, layer_norm(p, x, prefix + "ln1."), prefix + "attn.", cfg, attention), x);
  const Var hidden = ops::gelu(linear(p, layer_norm(p, attended, prefix + "ln2."), prefix + "mlp.w1", prefix + "mlp.b1"));
  return ops::add(linear(p, hidden, prefix + "mlp.w2", prefix + "mlp.b2"), attended);
}

Var encode(const ParamVars& p, Var x, const std::string& stack, int layers, const ModelConfig& cfg,
           std::vector<Tensor>* attention) {
  for (int l = 0; l < layers; ++l) x = encoder_block(p, x, stack + ".layer" + std::to_string(l) + ".", cfg, attention);
  return layer_norm(p, ops::slice(x, 0, 0, 1), stack + ".ln.");
}

}  // namespace

Var embed_group(const ParamVars& p, const TubeBatch& tubes, const ModelConfig& cfg) {
  const auto m = static_cast<std::size_t>(cfg.tokens());
  const auto width = static_cast<std::size_t>(cfg.multires.tube_size());
  if (tubes.tubes.shape() != Shape{m, width})
    throw ShapeError("tube batch shape " + shape_str(tubes.tubes.shape()) + " does not match config " +
                     shape_str(Shape{m, width}));
  Tensor pixels = tubes.tubes;
  if (cfg.normalize_input)
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = (pixels[i] - kChannelMean[i % 3]) / kChannelStd[i % 3];
  Tape& tape = p.tape();
  const Var tokens = ops::add(ops::matmul_bt(tape.constant(std::move(pixels)), p["embed.weight"]), p["embed.bias"]);
  const auto d = static_cast<std::size_t>(cfg.dim);
  const Var cls = ops::reshape(p["spatial.cls"], Shape{1, d});
  return ops::add(ops::concat({cls, tokens}, 0), p["spatial.pos"]);
}

Var spatial_encode(const ParamVars& p, const Var& z0, const ModelConfig& cfg, std::vector<Tensor>* attention) {
  const auto s = static_cast<std::size_t>(cfg.tokens() + 1);
  if (z0.shape() != Shape{s, static_cast<std::size_t>(cfg.dim)})
    throw ShapeError("spatial encoder expects " + shape_str(Shape{s, static_cast<std::size_t>(cfg.dim)}) + ", got " +
                     shape_str(z0.shape()));
  return encode(p, z0, "spatial", cfg.spatial_layers, cfg, attention);
}

Var temporal_encode(const ParamVars& p, const std::vector<Var>& group_repr, const ModelConfig& cfg,
                    std::vector<Tensor>* attention) {
  const std::size_t t = group_repr.size();
  if (t == 0 || t > static_cast<std::size_t>(cfg.time_steps()))
    throw ShapeError("temporal encoder takes 1.." + std::to_string(cfg.time_steps()) + " time steps, got " +
                     std::to_string(t));
  const auto d = static_cast<std::size_t>(cfg.dim);
  std::vector<Var> rows{ops::reshape(p["temporal.cls"], Shape{1, d})};
  for (const auto& h : group_repr) {
    if (h.value().size() != d) throw ShapeError("group representation has shape " + shape_str(h.shape()));
    rows.push_back(ops::reshape(h, Shape{1, d}));
  }
  Var pos = p["temporal.pos"];
  if (t + 1 < pos.shape()[0]) pos = ops::slice(pos, 0, 0, t + 1);
  const Var h0 = ops::add(ops::concat(rows, 0), pos);
  return encode(p, h0, "temporal", cfg.temporal_layers, cfg, attention);
}

Var quality_head(const ParamVars& p, const Var& video_repr) {
  const Var hidden = ops::gelu(linear(p, video_repr, "head.w1", "head.b1"));
  return ops::reshape(linear(p, hidden, "head.w2", "head.b2"), Shape{1});
}

// --- clip pipeline ----------------------------------------------------------

std::vector<PyramidGroup> prepare_pyramids(const FrameSequence& seq, const ModelConfig& cfg, const ClipOptions& opts) {
  cfg.validate();
  validate(seq);
  const int frames = opts.frames > 0 ? opts.frames : cfg.frames;
  const FrameSequence clip = sample_frames(seq, static_cast<std::size_t>(frames), opts.strategy);
  const SamplerMode layout = opts.sampler == SamplerMode::random ? SamplerMode::mret : opts.sampler;
  std::vector<PyramidGroup> out;
  for (const auto& g : group_frames(clip, cfg.multires.scales)) out.push_back(build_pyramid(g, cfg.multires, layout));
  if (out.size() > static_cast<std::size_t>(cfg.time_steps()))
    throw ConfigError(std::to_string(frames) + " frames give " + std::to_string(out.size()) +
                      " time steps; the model supports at most " + std::to_string(cfg.time_steps()));
  return out;
}

std::vector<TubeBatch> sample_clip(const std::vector<PyramidGroup>& pyramids, const ModelConfig& cfg,
                                   const ClipOptions& opts, Rng& rng) {
  if (pyramids.empty()) throw ConfigError("clip has no frame groups");
  const AlignCenter center = choose_center(pyramids.front(), cfg.multires, opts.center, rng);
  std::vector<TubeBatch> out;
  for (std::size_t g = 0; g < pyramids.size(); ++g) {
    Rng group_rng = Rng::derive(rng.next(), "group", g);
    out.push_back(sample_tubes(pyramids[g], center, cfg.multires, opts.sampler, group_rng));
  }
  return out;
}

Var forward_clip(const ParamVars& p, const std::vector<TubeBatch>& clip, const ModelConfig& cfg,
                 const ClipOptions& opts, ForwardTrace* trace) {
  const bool retain = trace && opts.retain_attention;
  std::vector<Var> reprs;
  for (const auto& tubes : clip) {
    std::vector<Tensor>* attn = nullptr;
    if (retain) attn = &trace->spatial_attention.emplace_back();
    reprs.push_back(spatial_encode(p, embed_group(p, tubes, cfg), cfg, attn));
  }
  const Var v = temporal_encode(p, reprs, cfg, retain ? &trace->temporal_attention : nullptr);
  const Var score = quality_head(p, v);
  if (trace) {
    for (const auto& h : reprs) trace->group_repr.push_back(h.value().reshaped(Shape{static_cast<std::size_t>(cfg.dim)}));
    trace->video_repr = v.value().reshaped(Shape{static_cast<std::size_t>(cfg.dim)});
    trace->center = clip.front().center;
    trace->time_steps = static_cast<int>(clip.size());
    trace->frames = opts.frames > 0 ? opts.frames : cfg.frames;
    trace->mode = opts.sampler;
    trace->strategy = opts.strategy;
  }
  return score;
}

Prediction predict(const FrameSequence& seq, const ModelParams& params, const ModelConfig& cfg, const ClipOptions& opts) {
  check_params(params, cfg);
  Rng rng = Rng::derive(opts.sampler_seed, "predict");
  const auto clip = sample_clip(prepare_pyramids(seq, cfg, opts), cfg, opts, rng);
  Tape tape(false);
  ParamVars p(tape, params);
  Prediction out;
  out.score = forward_clip(p, clip, cfg, opts, &out.trace).value().item();
  return out;
}

}  // namespace mret
