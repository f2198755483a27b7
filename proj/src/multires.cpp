#include "mret/multires.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mret {

void MultiResConfig::validate() const {
  if (scales < 1 || patch < 1 || grid < 1 || largest_side < 1)
    throw ConfigError("multires: N, L, P and G must all be >= 1");
  if (largest_side % scales != 0)
    throw ConfigError("multires: L=" + std::to_string(largest_side) + " is not divisible by N=" +
                      std::to_string(scales));
  if (grid * patch != largest_side / scales)
    throw ConfigError("multires: G*P=" + std::to_string(grid * patch) + " must equal L/N=" +
                      std::to_string(largest_side / scales));
}

SamplerMode parse_sampler_mode(const std::string& s) {
  if (s == "mret") return SamplerMode::mret;
  if (s == "random") return SamplerMode::random;
  if (s == "highres_last") return SamplerMode::highres_last;
  if (s == "fixed") return SamplerMode::fixed;
  throw ConfigError("unknown sampler mode '" + s + "' (expected mret, random, highres_last or fixed)");
}

std::string to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::mret: return "mret";
    case SamplerMode::random: return "random";
    case SamplerMode::highres_last: return "highres_last";
    case SamplerMode::fixed: return "fixed";
  }
  return "?";
}

std::vector<FrameGroup> group_frames(const FrameSequence& seq, int scales) {
  if (seq.empty()) throw VideoError("cannot group an empty frame sequence");
  if (scales < 1) throw ConfigError("group size must be >= 1");
  const std::size_t n = static_cast<std::size_t>(scales);
  std::vector<FrameGroup> groups;
  for (std::size_t start = 0; start < seq.size(); start += n) {
    FrameGroup g;
    for (std::size_t k = 0; k < n; ++k) g.push_back(seq.frames[std::min(start + k, seq.size() - 1)]);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<int> pyramid_sides(const MultiResConfig& cfg, SamplerMode mode) {
  std::vector<int> sides(cfg.scales);
  for (int i = 1; i <= cfg.scales; ++i) {
    switch (mode) {
      case SamplerMode::mret:
      case SamplerMode::random: sides[i - 1] = cfg.side(i); break;
      case SamplerMode::fixed: sides[i - 1] = cfg.smallest_side(); break;
      case SamplerMode::highres_last:
        sides[i - 1] = i == cfg.scales ? cfg.largest_side : cfg.smallest_side();
        break;
    }
  }
  return sides;
}

std::vector<int> frame_pitches(const MultiResConfig& cfg, SamplerMode mode) {
  std::vector<int> pitches(cfg.scales, cfg.patch);
  if (mode == SamplerMode::mret || mode == SamplerMode::random)
    for (int i = 1; i <= cfg.scales; ++i) pitches[i - 1] = cfg.pitch(i);
  return pitches;
}

PyramidGroup build_pyramid(const FrameGroup& group, const MultiResConfig& cfg, SamplerMode layout) {
  cfg.validate();
  if (static_cast<int>(group.size()) != cfg.scales)
    throw ConfigError("pyramid needs exactly N=" + std::to_string(cfg.scales) + " frames, got " +
                      std::to_string(group.size()));
  const auto sides = pyramid_sides(cfg, layout);
  PyramidGroup pyr;
  pyr.layout = layout;
  for (std::size_t j = 0; j < group.size(); ++j) pyr.frames.push_back(resize_shorter_side(group[j], sides[j]));
  return pyr;
}

namespace {

void check_pyramid(const PyramidGroup& pyr, const MultiResConfig& cfg, SamplerMode mode) {
  cfg.validate();
  if (static_cast<int>(pyr.frames.size()) != cfg.scales)
    throw ConfigError("pyramid has " + std::to_string(pyr.frames.size()) + " frames, config expects N=" +
                      std::to_string(cfg.scales));
  const auto sides = pyramid_sides(cfg, mode);
  for (std::size_t j = 0; j < sides.size(); ++j)
    if (pyr.frames[j].shorter_side() != sides[j])
      throw ConfigError("pyramid frame " + std::to_string(j + 1) + " has shorter side " +
                        std::to_string(pyr.frames[j].shorter_side()) + ", " + to_string(mode) +
                        " layout expects " + std::to_string(sides[j]));
}

}  // namespace

std::pair<double, double> center_range(const PyramidGroup& pyr, const MultiResConfig& cfg) {
  const auto pitches = frame_pitches(cfg, pyr.layout);
  double lo = 0.0;
  for (std::size_t j = 0; j < pyr.frames.size(); ++j) {
    const Frame& f = pyr.frames[j];
    const double window = static_cast<double>(cfg.grid) * pitches[j];
    lo = std::max(lo, window / (2.0 * f.longer_side()));
  }
  const double hi = 1.0 - lo;
  if (lo >= hi) return {0.5, 0.5};
  return {lo, hi};
}

AlignCenter choose_center(const PyramidGroup& pyr, const MultiResConfig& cfg, CenterMode mode, Rng& rng) {
  if (pyr.frames.empty()) throw ConfigError("choose_center on an empty pyramid");
  AlignCenter c;
  const Frame& first = pyr.frames.front();
  c.longer_is_width = first.width >= first.height;
  for (const auto& f : pyr.frames) c.frame_sizes.push_back({f.height, f.width});
  if (mode == CenterMode::infer) {
    c.position = 0.5;
    return c;
  }
  // Positions lie on a 2^-20 lattice so that centre * side and every grid
  // offset are exact in double precision.
  constexpr double lattice = 1048576.0;
  const auto [lo, hi] = center_range(pyr, cfg);
  const double k_lo = std::ceil(lo * lattice), k_hi = std::floor(hi * lattice);
  if (lo == hi || k_lo > k_hi) {
    c.position = 0.5;
    return c;
  }
  const auto span = static_cast<std::size_t>(k_hi - k_lo) + 1;
  c.position = (k_lo + static_cast<double>(rng.uniform_index(span))) / lattice;
  return c;
}

std::vector<PixelPoint> grid_centers(const FrameSize& size, const AlignCenter& center, int pitch, int grid) {
  const bool long_x = center.longer_is_width;
  const double shorter = long_x ? size.height : size.width;
  const double longer = long_x ? size.width : size.height;
  const double mid_short = shorter / 2.0;
  const double mid_long = center.position * longer;
  const double cy = long_x ? mid_short : mid_long;
  const double cx = long_x ? mid_long : mid_short;
  const double half = (grid - 1) / 2.0;
  std::vector<PixelPoint> pts;
  pts.reserve(static_cast<std::size_t>(grid) * grid);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) pts.push_back({cy + (r - half) * pitch, cx + (c - half) * pitch});
  return pts;
}

std::vector<PixelPoint> patch_centers(const MultiResConfig& cfg, const AlignCenter& center, int scale_index) {
  if (scale_index < 1 || scale_index > cfg.scales)
    throw ConfigError("scale index " + std::to_string(scale_index) + " outside 1.." + std::to_string(cfg.scales));
  if (static_cast<int>(center.frame_sizes.size()) < scale_index)
    throw ConfigError("alignment centre carries no frame size for scale " + std::to_string(scale_index));
  return grid_centers(center.frame_sizes[scale_index - 1], center, cfg.pitch(scale_index), cfg.grid);
}

namespace {

int patch_origin(double center, int patch, int extent) {
  const int o = static_cast<int>(std::round(center - patch / 2.0));
  return std::clamp(o, 0, std::max(0, extent - patch));
}

void copy_patch(const Frame& f, PatchBox box, int patch, double* dst) {
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x)
      for (int c = 0; c < 3; ++c) *dst++ = f.at(std::min(box.y + y, f.height - 1), std::min(box.x + x, f.width - 1), c);
}

}  // namespace

TubeBatch sample_tubes(const PyramidGroup& pyr, const AlignCenter& center, const MultiResConfig& cfg,
                       SamplerMode mode, Rng& rng) {
  const SamplerMode layout = mode == SamplerMode::random ? SamplerMode::mret : mode;
  check_pyramid(pyr, cfg, layout);
  const int n = cfg.scales, p = cfg.patch, g = cfg.grid;
  const std::size_t m = static_cast<std::size_t>(g) * g;
  const std::size_t patch_vals = static_cast<std::size_t>(p) * p * 3;

  TubeBatch batch;
  batch.grid = g;
  batch.scales = n;
  batch.patch = p;
  batch.center = center;
  batch.mode = mode;
  batch.tubes = Tensor(Shape{m, static_cast<std::size_t>(cfg.tube_size())}, 0.0);
  batch.boxes.resize(m * n);

  const auto pitches = frame_pitches(cfg, mode);
  for (int j = 0; j < n; ++j) {
    const Frame& f = pyr.frames[j];
    std::vector<PatchBox> boxes(m);
    if (mode == SamplerMode::random) {
      for (auto& b : boxes) {
        b.y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(f.height - p + 1)));
        b.x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(f.width - p + 1)));
      }
      rng.shuffle(boxes.begin(), boxes.end());
    } else {
      const auto pts = grid_centers({f.height, f.width}, center, pitches[j], g);
      for (std::size_t t = 0; t < m; ++t) boxes[t] = {patch_origin(pts[t].y, p, f.height), patch_origin(pts[t].x, p, f.width)};
    }
    for (std::size_t t = 0; t < m; ++t) {
      batch.boxes[t * n + j] = boxes[t];
      double* dst = batch.tubes.data().data() + t * cfg.tube_size() + j * patch_vals;
      copy_patch(f, boxes[t], p, dst);
    }
  }
  return batch;
}

}  // namespace mret
