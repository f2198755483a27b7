#pragma once

// Frames, frame sequences, image/raw-video loading, aspect-preserving resize,
// clip frame selection and the synthetic distorted-video generator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mret {

class VideoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Interleaved RGB frame, values in [0, 1], row-major (y, x, channel).
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  Frame() = default;
  Frame(int h, int w, float fill = 0.0f);

  static constexpr int channels = 3;

  int shorter_side() const { return height < width ? height : width; }
  int longer_side() const { return height < width ? width : height; }

  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameSequence {
  std::vector<Frame> frames;
  std::optional<double> frame_rate;
  std::optional<double> mos;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
};

/// Throws VideoError when frames are empty or differ in size, or mos lies
/// outside [mos_lo, mos_hi].
void validate(const FrameSequence& seq, double mos_lo = 0.0, double mos_hi = 100.0);

// --- still images -----------------------------------------------------------

Frame read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Frame& frame);
Frame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);
/// Binary (P5) 8-bit grayscale; `values` are clamped to [0, 1] and scaled to 255.
void write_pgm(const std::filesystem::path& path, int height, int width,
               const std::vector<double>& values);
Frame read_image(const std::filesystem::path& path);

// --- sequences --------------------------------------------------------------

/// Accepts a directory of lexically ordered .ppm/.png frames (optional
/// `labels.json` {"mos": x}), a directory holding `video.json` + `video.rgb8`,
/// or the path of such a `video.json` header directly.
FrameSequence load_frames(const std::filesystem::path& path);

/// Writes `frame_000001.ppm`, ... and `labels.json` when mos is set.
void save_frame_dir(const std::filesystem::path& dir, const FrameSequence& seq);
/// Writes `video.rgb8` + `video.json` ({height, width, frames, mos?}).
void save_raw_video(const std::filesystem::path& dir, const FrameSequence& seq);

// --- resampling -------------------------------------------------------------

/// Round half away from zero of longer * target / shorter, at least 1.
int scaled_longer_side(int longer, int shorter, int target);

/// Bilinear resize with half-pixel-centred sampling so the shorter side equals
/// `target`; identity when the shorter side already equals `target`.
Frame resize_shorter_side(const Frame& frame, int target);
Frame resize(const Frame& frame, int height, int width);

enum class FrameStrategy { uniform, front, center };

FrameStrategy parse_frame_strategy(const std::string& s);
std::string to_string(FrameStrategy s);

/// Source indices chosen for a clip of `count` frames out of `length`.
/// Sequences shorter than `count` are padded by repeating the last frame.
std::vector<std::size_t> sample_indices(std::size_t length, std::size_t count, FrameStrategy strategy);

FrameSequence sample_frames(const FrameSequence& seq, std::size_t count, FrameStrategy strategy);

// --- synthetic data ---------------------------------------------------------

enum class SynthPattern { gradient, checker, moving_disc };
enum class Distortion { gaussian_blur, additive_noise, block_quantization };

struct SynthSpec {
  SynthPattern pattern = SynthPattern::moving_disc;
  Distortion distortion = Distortion::additive_noise;
  double severity = 0.0;  // [0, 1]
  int frames = 8;
  int height = 48;
  int width = 64;

  double mos() const { return 100.0 * (1.0 - severity); }
};

SynthPattern parse_pattern(const std::string& s);
Distortion parse_distortion(const std::string& s);
std::string to_string(SynthPattern p);
std::string to_string(Distortion d);

/// Undistorted frame `t` of a pattern, quantized to 8-bit levels. The seed
/// varies the scene (phase, cell size, tint) but not its structure.
Frame synth_pristine(SynthPattern pattern, int height, int width, int t, std::uint64_t seed);

/// Deterministic in (spec, seed). Severity 0 leaves frames pristine.
FrameSequence synth_video(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mret
