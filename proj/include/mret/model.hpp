#pragma once

// Tube embedding, factorized spatial/temporal Transformer encoders and the
// quality regression head.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mret/autodiff.hpp"
#include "mret/multires.hpp"
#include "mret/serialize.hpp"
#include "mret/videoio.hpp"

namespace mret {

struct ModelConfig {
  int dim = 768;
  int spatial_layers = 12;
  int temporal_layers = 8;
  int heads = 12;
  int mlp_dim = 3072;
  int head_hidden = 0;  // 0 means "same as dim"
  int frames = 128;     // clip length; time steps = ceil(frames / N)
  MultiResConfig multires;
  bool normalize_input = false;  // per-channel mean/std normalization of pixels
  double dropout = 0.0;          // reserved; only 0 is supported
  double init_std = 0.02;        // truncated-normal std for weights and positional embeddings

  void validate() const;
  int hidden() const { return head_hidden > 0 ? head_hidden : dim; }
  int time_steps() const { return (frames + multires.scales - 1) / multires.scales; }
  int tokens() const { return multires.tokens(); }
  int head_dim() const { return dim / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// All learnable tensors keyed by name (e.g. "spatial.layer0.attn.wq").
using ModelParams = TensorMap;

/// Name -> shape of every learnable tensor.
std::map<std::string, Shape> param_shapes(const ModelConfig& cfg);

/// Closed-form scalar count of all learnable tensors.
std::int64_t count_params(const ModelConfig& cfg);

struct FlopCount {
  double embedding = 0;
  double spatial = 0;
  double temporal = 0;
  double head = 0;
  double total() const { return embedding + spatial + temporal + head; }
};

/// Multiply-accumulate count for one clip of `frames` frames: embedding
/// matmuls, attention (QKV, logits, weighted sum, output projection), MLPs,
/// layer norms (one per normalized element) and the head.
FlopCount count_macs(const ModelConfig& cfg, int frames);

/// GFLOPs in the convention of the published model size (one FLOP per
/// multiply-accumulate), i.e. count_macs(...).total() / 1e9.
double count_flops(const ModelConfig& cfg, int frames);

/// Truncated normal (std init_std, cut at 2 std) weights and positional
/// embeddings; zero biases and class tokens; unit layer-norm gains.
ModelParams init_random(const ModelConfig& cfg, std::uint64_t seed);

/// Places a 2-D patch projection [d, P*P*3] at scale slot floor(N/2) of a
/// zero tube projection [d, N*P*P*3].
Tensor init_central_frame(const Tensor& image_embedding, int scales);

/// Reads tensor "patch_embedding" of shape [d, P*P*3] from a tensor file.
Tensor load_image_embedding(const std::filesystem::path& sidecar, const ModelConfig& cfg);

/// Throws ConfigError if `params` does not match the shapes implied by `cfg`.
void check_params(const ModelParams& params, const ModelConfig& cfg);

// --- graph construction -----------------------------------------------------

class ParamVars {
 public:
  ParamVars(Tape& tape, const ModelParams& params);
  const Var& operator[](const std::string& name) const;
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

struct ForwardTrace {
  /// spatial_attention[group][layer]: [heads, M+1, M+1] softmax probabilities.
  std::vector<std::vector<Tensor>> spatial_attention;
  /// temporal_attention[layer]: [heads, T+1, T+1].
  std::vector<Tensor> temporal_attention;
  std::vector<Tensor> group_repr;  // h_t, each [d]
  Tensor video_repr;               // v, [d]
  AlignCenter center;
  int frames = 0;
  int time_steps = 0;
  SamplerMode mode = SamplerMode::mret;
  FrameStrategy strategy = FrameStrategy::uniform;
};

/// z_0 = [z_cls, E x_1 + b, ..., E x_M + b] + p, shape [M+1, d].
Var embed_group(const ParamVars& p, const TubeBatch& tubes, const ModelConfig& cfg);

/// K pre-LN blocks, then the final layer norm at the class position: h_t, shape [1, d].
Var spatial_encode(const ParamVars& p, const Var& z0, const ModelConfig& cfg,
                   std::vector<Tensor>* attention = nullptr);

/// [h_cls, h_1..h_T] + p^t through Q blocks; v at the class position, shape [1, d].
/// T may be smaller than cfg.time_steps(); the leading rows of p^t are used.
Var temporal_encode(const ParamVars& p, const std::vector<Var>& group_repr, const ModelConfig& cfg,
                    std::vector<Tensor>* attention = nullptr);

/// MLP d -> hidden (GELU) -> 1; returns shape [1].
Var quality_head(const ParamVars& p, const Var& video_repr);

// --- clip pipeline ----------------------------------------------------------

struct ClipOptions {
  CenterMode center = CenterMode::infer;
  SamplerMode sampler = SamplerMode::mret;
  FrameStrategy strategy = FrameStrategy::uniform;
  int frames = 0;  // 0 -> cfg.frames
  bool retain_attention = false;
  std::uint64_t sampler_seed = 0;  // random-mode patch draws at inference
};

/// Frame selection, grouping and pyramids; independent of the alignment centre.
std::vector<PyramidGroup> prepare_pyramids(const FrameSequence& seq, const ModelConfig& cfg,
                                           const ClipOptions& opts);

/// One alignment centre per clip, shared by all groups.
std::vector<TubeBatch> sample_clip(const std::vector<PyramidGroup>& pyramids, const ModelConfig& cfg,
                                   const ClipOptions& opts, Rng& rng);

/// Predicted score for a clip, shape [1]. Fills `trace` when non-null.
Var forward_clip(const ParamVars& p, const std::vector<TubeBatch>& clip, const ModelConfig& cfg,
                 const ClipOptions& opts, ForwardTrace* trace = nullptr);

struct Prediction {
  double score = 0.0;
  ForwardTrace trace;
};

/// Full inference pipeline without gradient tracking. Deterministic in infer mode.
Prediction predict(const FrameSequence& seq, const ModelParams& params, const ModelConfig& cfg,
                   const ClipOptions& opts = {});

}  // namespace mret
