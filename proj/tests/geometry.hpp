#pragma once

// Geometry checks for the aligned multi-resolution sampler, shared by the
// unit and acceptance suites. Each check returns an empty string on success
// and a description of the first violation otherwise.

#include <cmath>
#include <sstream>
#include <string>

#include "mret/multires.hpp"

namespace mret::testing {

inline Frame blank_frame(int height, int width) {
  Frame f(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = static_cast<float>(((y * 7 + x * 3 + c) % 11) / 10.0);
  return f;
}

inline PyramidGroup pyramid_for(const MultiResConfig& cfg, int height, int width) {
  return build_pyramid(FrameGroup(static_cast<std::size_t>(cfg.scales), blank_frame(height, width)), cfg);
}

/// Pitch, span, alignment and tiling checks for one config and one centre.
/// Normalized centres must agree exactly along the shorter axis and within
/// `long_tol` along the longer one.
inline std::string check_geometry(const MultiResConfig& cfg, const PyramidGroup& pyr, const AlignCenter& center,
                                  double long_tol = 0.0) {
  std::ostringstream err;
  const int n = cfg.scales, g = cfg.grid, p = cfg.patch;
  const bool long_x = center.longer_is_width;
  Rng rng(0);
  const TubeBatch tubes = sample_tubes(pyr, center, cfg, SamplerMode::mret, rng);
  std::vector<std::vector<PixelPoint>> centers;
  for (int i = 1; i <= n; ++i) {
    const Frame& f = pyr.frames[static_cast<std::size_t>(i - 1)];
    const int side = f.shorter_side();
    // (a) pitch
    if (frame_pitches(cfg, SamplerMode::mret)[static_cast<std::size_t>(i - 1)] != (n - i + 1) * p)
      return (err << "scale " << i << ": pitch differs from (N-i+1)*P", err.str());
    if (side != (n - i + 1) * cfg.largest_side / n)
      return (err << "scale " << i << ": shorter side " << side << " is not (N-i+1)*L/N", err.str());
    const auto pts = patch_centers(cfg, center, i);
    // (b) span along both axes equals the shorter side.
    const double pitch = cfg.pitch(i);
    const double span_y = pts.back().y - pts.front().y + pitch;
    const double span_x = pts.back().x - pts.front().x + pitch;
    if (span_y != side || span_x != side)
      return (err << "scale " << i << ": grid span " << span_y << "x" << span_x << " != " << side, err.str());
    // The window along the shorter axis starts at 0.
    const double start_short = (long_x ? pts.front().y : pts.front().x) - pitch / 2.0;
    if (start_short != 0.0) return (err << "scale " << i << ": window does not start at the frame edge", err.str());
    centers.push_back(pts);
  }
  // (c) normalized centres relative to the alignment centre agree exactly.
  for (int i = 2; i <= n; ++i) {
    const auto& a = centers[0];
    const auto& b = centers[static_cast<std::size_t>(i - 1)];
    const double side_a = pyr.frames[0].shorter_side(), side_b = pyr.frames[static_cast<std::size_t>(i - 1)].shorter_side();
    const auto mid = [&](const std::vector<PixelPoint>& pts, std::size_t k, bool y) {
      // Alignment centre pixel = midpoint of the grid (exact: symmetric offsets).
      const PixelPoint& c0 = pts.front();
      const PixelPoint& c1 = pts.back();
      const double m = y ? (c0.y + c1.y) / 2.0 : (c0.x + c1.x) / 2.0;
      return (y ? pts[k].y : pts[k].x) - m;
    };
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double ya = mid(a, k, true) / side_a, yb = mid(b, k, true) / side_b;
      const double xa = mid(a, k, false) / side_a, xb = mid(b, k, false) / side_b;
      const double d_short = long_x ? std::abs(ya - yb) : std::abs(xa - xb);
      const double d_long = long_x ? std::abs(xa - xb) : std::abs(ya - yb);
      if (d_short != 0.0 || d_long > long_tol)
        return (err << "cell " << k << ": normalized centre differs between scale 1 and " << i, err.str());
    }
  }
  // (d) scale-N patches tile the shorter-side window with no gap or overlap.
  const Frame& last = pyr.frames.back();
  const int side = last.shorter_side();
  std::vector<int> cover(static_cast<std::size_t>(last.height) * last.width, 0);
  for (std::size_t t = 0; t < tubes.count(); ++t) {
    const PatchBox b = tubes.boxes[t * n + static_cast<std::size_t>(n - 1)];
    if (b.y < 0 || b.x < 0 || b.y + p > last.height || b.x + p > last.width)
      return (err << "tube " << t << ": scale-N patch leaves the frame", err.str());
    for (int y = b.y; y < b.y + p; ++y)
      for (int x = b.x; x < b.x + p; ++x) ++cover[static_cast<std::size_t>(y) * last.width + x];
  }
  const PatchBox first = tubes.boxes[static_cast<std::size_t>(n - 1)];
  int covered = 0;
  for (int y = 0; y < last.height; ++y)
    for (int x = 0; x < last.width; ++x) {
      const int c = cover[static_cast<std::size_t>(y) * last.width + x];
      const bool inside = y >= first.y && y < first.y + g * p && x >= first.x && x < first.x + g * p;
      if (c > 1) return (err << "pixel (" << y << "," << x << ") covered " << c << " times", err.str());
      if (inside != (c == 1)) return (err << "pixel (" << y << "," << x << ") breaks the tiling", err.str());
      covered += c;
    }
  if (covered != side * side) return (err << "scale-N window covers " << covered << " pixels", err.str());
  return "";
}

/// Random valid (N, L, P, G) with a random frame shape, orientation and centre.
struct GeometryCase {
  MultiResConfig cfg;
  int height = 0, width = 0;
};

inline GeometryCase random_geometry_case(Rng& rng) {
  GeometryCase c;
  c.cfg.scales = 1 + static_cast<int>(rng.uniform_index(5));
  c.cfg.patch = 1 + static_cast<int>(rng.uniform_index(6));
  c.cfg.grid = 1 + static_cast<int>(rng.uniform_index(7));
  c.cfg.largest_side = c.cfg.scales * c.cfg.grid * c.cfg.patch;
  const int shorter = 4 + static_cast<int>(rng.uniform_index(40));
  const int longer = shorter + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(2 * shorter)));
  const bool landscape = rng.uniform() < 0.7;
  c.height = landscape ? shorter : longer;
  c.width = landscape ? longer : shorter;
  return c;
}

}  // namespace mret::testing
