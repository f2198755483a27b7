#include <algorithm>
#include <cmath>

#include "mret/rng.hpp"
#include "mret/videoio.hpp"

namespace mret {

SynthPattern parse_pattern(const std::string& s) {
  if (s == "gradient") return SynthPattern::gradient;
  if (s == "checker") return SynthPattern::checker;
  if (s == "moving-disc" || s == "moving_disc") return SynthPattern::moving_disc;
  throw VideoError("unknown synthetic pattern '" + s + "'");
}

Distortion parse_distortion(const std::string& s) {
  if (s == "gaussian-blur" || s == "gaussian_blur") return Distortion::gaussian_blur;
  if (s == "additive-noise" || s == "additive_noise") return Distortion::additive_noise;
  if (s == "block-quantization" || s == "block_quantization") return Distortion::block_quantization;
  throw VideoError("unknown distortion '" + s + "'");
}

std::string to_string(SynthPattern p) {
  switch (p) {
    case SynthPattern::gradient: return "gradient";
    case SynthPattern::checker: return "checker";
    case SynthPattern::moving_disc: return "moving-disc";
  }
  return "?";
}

std::string to_string(Distortion d) {
  switch (d) {
    case Distortion::gaussian_blur: return "gaussian-blur";
    case Distortion::additive_noise: return "additive-noise";
    case Distortion::block_quantization: return "block-quantization";
  }
  return "?";
}

namespace {

float quantize8(double v) {
  return static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
}

void gaussian_blur(Frame& f, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) total += kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  for (double& k : kernel) k /= total;

  Frame tmp = f;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * f.at(y, std::clamp(x + k, 0, f.width - 1), c);
        tmp.at(y, x, c) = static_cast<float>(s);
      }
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * tmp.at(std::clamp(y + k, 0, f.height - 1), x, c);
        f.at(y, x, c) = quantize8(s);
      }
}

void block_quantize(Frame& f, int block, int levels) {
  for (int by = 0; by < f.height; by += block)
    for (int bx = 0; bx < f.width; bx += block)
      for (int c = 0; c < 3; ++c) {
        const int y1 = std::min(by + block, f.height), x1 = std::min(bx + block, f.width);
        double s = 0.0;
        for (int y = by; y < y1; ++y)
          for (int x = bx; x < x1; ++x) s += f.at(y, x, c);
        double m = s / ((y1 - by) * (x1 - bx));
        m = std::round(m * (levels - 1)) / (levels - 1);
        for (int y = by; y < y1; ++y)
          for (int x = bx; x < x1; ++x) f.at(y, x, c) = quantize8(m);
      }
}

}  // namespace

Frame synth_pristine(SynthPattern pattern, int height, int width, int t, std::uint64_t seed) {
  // Per-seed scene variation: spatial phase, cell size and a colour shift.
  Rng scene = Rng::derive(seed, "synth-scene");
  const double phase = scene.uniform(0.0, static_cast<double>(width));
  const int cell = 6 + static_cast<int>(scene.uniform_index(5));
  const double tint = scene.uniform(-0.1, 0.1);
  Frame f(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double r = 0, g = 0, b = 0;
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      switch (pattern) {
        case SynthPattern::gradient:
          r = std::fmod(u + phase / width, 1.0);
          g = v;
          b = 0.5 * (1.0 - u) + 0.25 * v + tint;
          break;
        case SynthPattern::checker: {
          const int px = x + static_cast<int>(phase);
          const bool on = ((px / cell) + (y / cell)) % 2 == 0;
          r = (on ? 0.85 : 0.15) + tint;
          g = on ? 0.80 : 0.20;
          b = on ? 0.75 : 0.25;
          break;
        }
        case SynthPattern::moving_disc: {
          const double radius = std::min(height, width) / 4.0;
          // The disc moves 2 px per frame and wraps around horizontally.
          const double cx = std::fmod(phase + 2.0 * t, static_cast<double>(width));
          const double cy = height / 2.0;
          double dx = std::abs(x + 0.5 - cx);
          dx = std::min(dx, width - dx);
          const double dy = y + 0.5 - cy;
          const bool inside = dx * dx + dy * dy <= radius * radius;
          r = inside ? 0.9 + tint : 0.2 + 0.3 * u;
          g = inside ? 0.3 : 0.4 + 0.2 * v;
          b = inside ? 0.2 : 0.6;
          break;
        }
      }
      f.at(y, x, 0) = quantize8(r);
      f.at(y, x, 1) = quantize8(g);
      f.at(y, x, 2) = quantize8(b);
    }
  }
  return f;
}

FrameSequence synth_video(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.severity < 0.0 || spec.severity > 1.0) throw VideoError("synthetic severity must lie in [0, 1]");
  if (spec.frames < 1) throw VideoError("synthetic frame count must be >= 1");
  FrameSequence seq;
  seq.mos = spec.mos();
  seq.frame_rate = 30.0;
  const double s = spec.severity;
  for (int t = 0; t < spec.frames; ++t) {
    Frame f = synth_pristine(spec.pattern, spec.height, spec.width, t, seed);
    if (s > 0.0) {
      switch (spec.distortion) {
        case Distortion::additive_noise: {
          Rng rng = Rng::derive(seed, "synth-noise", static_cast<std::uint64_t>(t));
          const double sigma = 0.3 * s;
          for (float& v : f.rgb) v = quantize8(v + sigma * rng.normal());
          break;
        }
        case Distortion::gaussian_blur:
          gaussian_blur(f, 2.5 * s);
          break;
        case Distortion::block_quantization: {
          const int block = 1 + static_cast<int>(std::round(7.0 * s));
          const int levels = std::max(2, static_cast<int>(std::round(256.0 * (1.0 - s) * (1.0 - s))));
          block_quantize(f, block, levels);
          break;
        }
      }
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace mret
