#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>

#include <unistd.h>

#include "mret/config.hpp"
#include "mret/model.hpp"

namespace mret::testing {

/// d=8, K=2, Q=1, heads=2, G=2, N=2, P=4, two time steps.
inline ModelConfig gradcheck_config() {
  ModelConfig c;
  c.dim = 8;
  c.spatial_layers = 2;
  c.temporal_layers = 1;
  c.heads = 2;
  c.mlp_dim = 16;
  c.head_hidden = 8;
  c.frames = 4;
  c.multires = {2, 16, 4, 2};
  return c;
}

/// Small configuration used for training smoke runs.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 16;
  c.spatial_layers = 1;
  c.temporal_layers = 1;
  c.heads = 2;
  c.mlp_dim = 32;
  c.frames = 8;
  c.multires = {2, 32, 4, 4};
  return c;
}

/// tiny_config() with the wider init and input normalization that desk-scale
/// training from scratch needs.
inline ModelConfig trainable_config() {
  ModelConfig c = tiny_config();
  c.init_std = 0.3;
  c.normalize_input = true;
  return c;
}

/// Synthetic labelled videos for training tests.
inline LabeledVideo synth_labeled(SynthPattern pattern, double severity, std::uint64_t seed, int frames = 8,
                                  int height = 48, int width = 64) {
  SynthSpec spec;
  spec.pattern = pattern;
  spec.distortion = Distortion::additive_noise;
  spec.severity = severity;
  spec.frames = frames;
  spec.height = height;
  spec.width = width;
  LabeledVideo v;
  v.video = synth_video(spec, seed);
  v.mos = *v.video.mos;
  v.name = "synth_" + std::to_string(seed) + "_" + std::to_string(severity);
  return v;
}

/// Parameters with a wider spread than the default init so gradients are not
/// dominated by near-zero entries.
inline ModelParams spread_params(const ModelConfig& cfg, std::uint64_t seed, double std) {
  ModelParams p = init_random(cfg, seed);
  Rng rng = Rng::derive(seed, "test-spread");
  for (auto& [name, t] : p)
    for (double& v : t.data()) v += rng.normal() * std;
  return p;
}

struct TensorGradError {
  double max_rel = 0.0;  // elementwise, denominator max(|a|, |b|, floor)
  double norm_rel = 0.0; // ||a - b|| / max(||a||, ||b||)
};

/// Analytic vs central-difference gradients of the clip L2 loss for every
/// parameter tensor. Must run in f64 mode.
inline std::map<std::string, TensorGradError> model_grad_check(const ModelConfig& cfg, const ModelParams& params,
                                                               const std::vector<TubeBatch>& clip, double label,
                                                               double eps = 1e-5, double floor = 1e-6) {
  ClipOptions opts;
  auto loss_of = [&](const ModelParams& p, Tape& tape) {
    ParamVars vars(tape, p);
    const Var pred = forward_clip(vars, clip, cfg, opts);
    const Var diff = ops::sub(pred, tape.constant(Tensor::scalar(label)));
    return ops::mul(diff, diff);
  };
  Tape tape;
  const GradMap grads = tape.backward(loss_of(params, tape));

  std::map<std::string, TensorGradError> out;
  ModelParams work = params;
  for (const auto& [name, g] : grads) {
    Tensor& theta = work.at(name);
    TensorGradError e;
    double diff_sq = 0, a_sq = 0, b_sq = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + eps;
      Tape tp(false);
      const double fp = loss_of(work, tp).value().item();
      theta[i] = saved - eps;
      Tape tm(false);
      const double fm = loss_of(work, tm).value().item();
      theta[i] = saved;
      const double num = (fp - fm) / (2 * eps);
      const double a = g[i];
      e.max_rel = std::max(e.max_rel, std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}));
      diff_sq += (a - num) * (a - num);
      a_sq += a * a;
      b_sq += num * num;
    }
    const double denom = std::sqrt(std::max({a_sq, b_sq, 1e-300}));
    e.norm_rel = std::sqrt(diff_sq) / denom;
    out[name] = e;
  }
  return out;
}

}  // namespace mret::testing

namespace mret::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mret_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace mret::testing
