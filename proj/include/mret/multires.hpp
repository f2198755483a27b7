#pragma once

// Multi-resolution frame groups and spatially aligned patch tubes.
//
// A clip is cut into groups of N consecutive frames. Frame i of a group
// (1-based, temporal order) is resized so its shorter side is (N-i+1)*L/N,
// giving a pyramid from L down to L/N. A G x G grid of P x P patches is cut
// from every frame around one shared alignment centre; at scale i adjacent
// patch centres are (N-i+1)*P apart, so every grid spans exactly the frame's
// shorter side and grid cell (r, c) covers the same normalized location at
// every scale. The N patches of one cell form a tube, later projected to one
// token.

#include <string>
#include <utility>
#include <vector>

#include "mret/rng.hpp"
#include "mret/tensor.hpp"
#include "mret/videoio.hpp"

namespace mret {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MultiResConfig {
  int scales = 4;          // N, frames per group
  int largest_side = 896;  // L, shorter side of the largest frame
  int patch = 16;          // P
  int grid = 14;           // G, patches per grid side

  /// Throws ConfigError unless L % N == 0 and G * P == L / N.
  void validate() const;

  int smallest_side() const { return largest_side / scales; }
  /// Shorter side of pyramid frame `i` (1-based).
  int side(int i) const { return (scales - i + 1) * smallest_side(); }
  /// Distance between adjacent patch centres at scale `i` (1-based).
  int pitch(int i) const { return (scales - i + 1) * patch; }
  /// Empty space between adjacent patch edges at scale `i`.
  int gap(int i) const { return (scales - i) * patch; }
  int tokens() const { return grid * grid; }
  /// Values per flattened tube: N * P * P * 3.
  int tube_size() const { return scales * patch * patch * 3; }

  friend bool operator==(const MultiResConfig&, const MultiResConfig&) = default;
};

/// Patch layouts. `mret` is the aligned multi-resolution sampler; the others
/// are ablation variants: unaligned random patches on the same pyramid, low
/// resolution frames plus one high resolution centre crop on the last frame,
/// and every frame at the smallest resolution.
enum class SamplerMode { mret, random, highres_last, fixed };

SamplerMode parse_sampler_mode(const std::string& s);
std::string to_string(SamplerMode m);

enum class CenterMode { train, infer };

using FrameGroup = std::vector<Frame>;

/// ceil(len / N) groups of exactly N frames; the final group is padded by
/// repeating its last frame.
std::vector<FrameGroup> group_frames(const FrameSequence& seq, int scales);

/// Shorter side of each group frame under a sampler mode.
std::vector<int> pyramid_sides(const MultiResConfig& cfg, SamplerMode mode);
/// Patch-centre spacing for each group frame under a sampler mode.
std::vector<int> frame_pitches(const MultiResConfig& cfg, SamplerMode mode);

struct PyramidGroup {
  std::vector<Frame> frames;
  SamplerMode layout = SamplerMode::mret;
};

PyramidGroup build_pyramid(const FrameGroup& group, const MultiResConfig& cfg,
                           SamplerMode layout = SamplerMode::mret);

struct FrameSize {
  int height = 0;
  int width = 0;
};

/// Shared alignment centre. `position` is normalized along the longer axis;
/// the shorter-axis coordinate is always the midpoint.
struct AlignCenter {
  double position = 0.5;
  bool longer_is_width = true;
  std::vector<FrameSize> frame_sizes;  // one per group frame, temporal order
};

/// Interval of valid `position` values so every frame's patch window fits.
std::pair<double, double> center_range(const PyramidGroup& pyr, const MultiResConfig& cfg);

AlignCenter choose_center(const PyramidGroup& pyr, const MultiResConfig& cfg, CenterMode mode, Rng& rng);

struct PixelPoint {
  double y = 0.0;
  double x = 0.0;
};

/// G x G patch centres (row-major) in the pixel space of frame `scale_index`
/// (1-based) for the aligned multi-resolution layout.
std::vector<PixelPoint> patch_centers(const MultiResConfig& cfg, const AlignCenter& center, int scale_index);

/// Grid centres for an arbitrary frame size and pitch around `center`.
std::vector<PixelPoint> grid_centers(const FrameSize& size, const AlignCenter& center, int pitch, int grid);

struct PatchBox {
  int y = 0;  // top-left corner
  int x = 0;
};

struct TubeBatch {
  int grid = 0;
  int scales = 0;
  int patch = 0;
  /// [G*G, N*P*P*3]; row t is tube t (grid row-major), laid out scale, y, x, channel.
  Tensor tubes;
  /// boxes[t * N + j]: top-left of the patch cut from frame j for tube t.
  std::vector<PatchBox> boxes;
  AlignCenter center;
  SamplerMode mode = SamplerMode::mret;

  std::size_t count() const { return static_cast<std::size_t>(grid) * grid; }
};

/// Cuts G*G tubes of N patches each. `rng` is only drawn from in random mode.
TubeBatch sample_tubes(const PyramidGroup& pyr, const AlignCenter& center, const MultiResConfig& cfg,
                       SamplerMode mode, Rng& rng);

}  // namespace mret
