#pragma once

// Plain double-precision forward pass written without the tape, used as an
// independent oracle for the graph-built model.

#include <cmath>
#include <vector>

#include "mret/model.hpp"

namespace mret::testing {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

inline double ref_param(const ModelParams& p, const std::string& name, std::size_t i) { return p.at(name)[i]; }

// x [s, in] times W [in, out] plus b [out].
inline Mat ref_linear(const Mat& x, const ModelParams& p, const std::string& w, const std::string& b) {
  const Tensor& W = p.at(w);
  const std::size_t out = W.dim(1);
  Mat y(x.rows, out);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = p.at(b)[o];
      for (std::size_t i = 0; i < x.cols; ++i) acc += x(r, i) * W.at(i, o);
      y(r, o) = acc;
    }
  return y;
}

inline Mat ref_layernorm(const Mat& x, const ModelParams& p, const std::string& prefix) {
  Mat y(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < x.cols; ++c) mean += x(r, c);
    mean /= x.cols;
    for (std::size_t c = 0; c < x.cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= x.cols;
    for (std::size_t c = 0; c < x.cols; ++c)
      y(r, c) = (x(r, c) - mean) / std::sqrt(var + 1e-6) * ref_param(p, prefix + "gamma", c) +
                ref_param(p, prefix + "beta", c);
  }
  return y;
}

inline double ref_gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

inline Mat ref_block(const Mat& x, const ModelParams& p, const std::string& pre, int heads) {
  const Mat n1 = ref_layernorm(x, p, pre + "ln1.");
  const Mat q = ref_linear(n1, p, pre + "attn.wq", pre + "attn.bq");
  const Mat k = ref_linear(n1, p, pre + "attn.wk", pre + "attn.bk");
  const Mat v = ref_linear(n1, p, pre + "attn.wv", pre + "attn.bv");
  const std::size_t s = x.rows, d = x.cols, dh = d / static_cast<std::size_t>(heads);
  Mat merged(s, d);
  for (int h = 0; h < heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * dh;
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> a(s);
      double mx = -1e300;
      for (std::size_t j = 0; j < s; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q(i, off + c) * k(j, off + c);
        a[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, a[j]);
      }
      double total = 0;
      for (double& e : a) total += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < s; ++j) acc += a[j] / total * v(j, off + c);
        merged(i, off + c) = acc;
      }
    }
  }
  Mat y = ref_linear(merged, p, pre + "attn.wo", pre + "attn.bo");
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
  Mat hidden = ref_linear(ref_layernorm(y, p, pre + "ln2."), p, pre + "mlp.w1", pre + "mlp.b1");
  for (double& e : hidden.v) e = ref_gelu(e);
  Mat out = ref_linear(hidden, p, pre + "mlp.w2", pre + "mlp.b2");
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += y.v[i];
  return out;
}

inline Mat ref_encode(Mat x, const ModelParams& p, const std::string& stack, int layers, int heads) {
  for (int l = 0; l < layers; ++l) x = ref_block(x, p, stack + ".layer" + std::to_string(l) + ".", heads);
  Mat cls(1, x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) cls(0, c) = x(0, c);
  return ref_layernorm(cls, p, stack + ".ln.");
}

/// Score for pre-sampled tube batches. Pixel normalization is not modelled.
inline double reference_score(const ModelParams& p, const ModelConfig& cfg, const std::vector<TubeBatch>& clip) {
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  const Tensor& E = p.at("embed.weight");
  Mat temporal(clip.size() + 1, d);
  for (std::size_t c = 0; c < d; ++c) temporal(0, c) = ref_param(p, "temporal.cls", c);
  for (std::size_t t = 0; t < clip.size(); ++t) {
    const Tensor& x = clip[t].tubes;
    Mat z(x.dim(0) + 1, d);
    for (std::size_t c = 0; c < d; ++c) z(0, c) = ref_param(p, "spatial.cls", c);
    for (std::size_t m = 0; m < x.dim(0); ++m)
      for (std::size_t r = 0; r < d; ++r) {
        double acc = ref_param(p, "embed.bias", r);
        for (std::size_t k = 0; k < x.dim(1); ++k) acc += E.at(r, k) * x.at(m, k);
        z(m + 1, r) = acc;
      }
    for (std::size_t i = 0; i < z.v.size(); ++i) z.v[i] += p.at("spatial.pos")[i];
    const Mat h = ref_encode(z, p, "spatial", cfg.spatial_layers, cfg.heads);
    for (std::size_t c = 0; c < d; ++c) temporal(t + 1, c) = h(0, c);
  }
  for (std::size_t i = 0; i < temporal.v.size(); ++i) temporal.v[i] += p.at("temporal.pos")[i];
  const Mat v = ref_encode(temporal, p, "temporal", cfg.temporal_layers, cfg.heads);
  Mat hidden = ref_linear(v, p, "head.w1", "head.b1");
  for (double& e : hidden.v) e = ref_gelu(e);
  return ref_linear(hidden, p, "head.w2", "head.b2")(0, 0);
}

}  // namespace mret::testing
