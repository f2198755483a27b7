#include "mret/videoio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

#include <json.hpp>

namespace mret {

namespace fs = std::filesystem;

Frame::Frame(int h, int w, float fill) : height(h), width(w) {
  if (h < 1 || w < 1)
    throw VideoError("frame dimensions must be positive, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  rgb.assign(static_cast<std::size_t>(h) * w * 3, fill);
}

void validate(const FrameSequence& seq, double mos_lo, double mos_hi) {
  if (seq.frames.empty()) throw VideoError("empty frame sequence");
  const auto& first = seq.frames.front();
  for (const auto& f : seq.frames) {
    if (f.height != first.height || f.width != first.width)
      throw VideoError("inconsistent dimensions: " + std::to_string(first.width) + "x" +
                       std::to_string(first.height) + " vs " + std::to_string(f.width) + "x" +
                       std::to_string(f.height));
    if (f.rgb.size() != static_cast<std::size_t>(f.height) * f.width * 3)
      throw VideoError("frame buffer does not match its dimensions");
  }
  if (seq.mos && (*seq.mos < mos_lo || *seq.mos > mos_hi))
    throw VideoError("mos " + std::to_string(*seq.mos) + " outside [" + std::to_string(mos_lo) + ", " +
                     std::to_string(mos_hi) + "]");
}

// --- still images -----------------------------------------------------------

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VideoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Frame frame_from_bytes(int h, int w, const unsigned char* bytes, double maxval) {
  Frame f(h, w);
  for (std::size_t i = 0; i < f.rgb.size(); ++i) f.rgb[i] = static_cast<float>(bytes[i] / maxval);
  return f;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string lower_ext(const fs::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Frame read_ppm(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw VideoError("truncated PPM header in " + path.string());
    return data.substr(start, pos - start);
  };
  const std::string magic = next_token();
  if (magic != "P6" && magic != "P3") throw VideoError("not a PPM file: " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::logic_error&) {
    throw VideoError("malformed PPM header in " + path.string());
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw VideoError("unsupported PPM geometry or depth in " + path.string());
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  if (magic == "P3") {
    std::vector<unsigned char> bytes(n);
    for (auto& b : bytes) b = static_cast<unsigned char>(std::stoi(next_token()));
    return frame_from_bytes(h, w, bytes.data(), maxval);
  }
  ++pos;  // single whitespace after maxval
  if (pos + n > data.size()) throw VideoError("truncated PPM pixel data in " + path.string());
  return frame_from_bytes(h, w, reinterpret_cast<const unsigned char*>(data.data() + pos), maxval);
}

void write_ppm(const fs::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VideoError("cannot write " + path.string());
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  std::string bytes(frame.rgb.size(), '\0');
  for (std::size_t i = 0; i < frame.rgb.size(); ++i) bytes[i] = static_cast<char>(to_byte(frame.rgb[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Frame read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw VideoError("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw VideoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return frame_from_bytes(static_cast<int>(image.height), static_cast<int>(image.width), buffer.data(), 255.0);
}

void write_png(const fs::path& path, const Frame& frame) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(frame.rgb.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(frame.rgb[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw VideoError("cannot write PNG " + path.string() + ": " + image.message);
}

void write_pgm(const fs::path& path, int height, int width, const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(height) * width)
    throw VideoError("PGM value count does not match " + std::to_string(height) + "x" + std::to_string(width));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VideoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) out.put(static_cast<char>(to_byte(v)));
}

Frame read_image(const fs::path& path) {
  const auto ext = lower_ext(path);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw VideoError("unsupported image type: " + path.string());
}

// --- sequences --------------------------------------------------------------

namespace {

FrameSequence load_raw_video(const fs::path& header_path) {
  nlohmann::json header;
  try {
    std::ifstream in(header_path);
    if (!in) throw VideoError("cannot read " + header_path.string());
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw VideoError("malformed video header " + header_path.string() + ": " + e.what());
  }
  int h = 0, w = 0, n = 0;
  try {
    h = header.at("height").get<int>();
    w = header.at("width").get<int>();
    n = header.at("frames").get<int>();
  } catch (const nlohmann::json::exception&) {
    throw VideoError("video header " + header_path.string() + " needs height, width and frames");
  }
  if (h < 1 || w < 1 || n < 1) throw VideoError("video header " + header_path.string() + " has non-positive sizes");
  auto blob_path = header_path;
  blob_path.replace_extension(".rgb8");
  const std::string blob = read_file(blob_path);
  const std::size_t frame_bytes = static_cast<std::size_t>(h) * w * 3;
  if (blob.size() != frame_bytes * n)
    throw VideoError("raw video " + blob_path.string() + " has " + std::to_string(blob.size()) +
                     " bytes, header implies " + std::to_string(frame_bytes * n));
  FrameSequence seq;
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (int t = 0; t < n; ++t) seq.frames.push_back(frame_from_bytes(h, w, bytes + t * frame_bytes, 255.0));
  if (header.contains("mos") && !header["mos"].is_null()) seq.mos = header["mos"].get<double>();
  if (header.contains("frame_rate")) seq.frame_rate = header["frame_rate"].get<double>();
  return seq;
}

}  // namespace

FrameSequence load_frames(const fs::path& path) {
  if (!fs::exists(path)) throw VideoError("no such file or directory: " + path.string());
  FrameSequence seq;
  if (fs::is_regular_file(path)) {
    if (lower_ext(path) == ".json" || lower_ext(path) == ".rgb8") {
      auto header = path;
      seq = load_raw_video(header.replace_extension(".json"));
    } else {
      throw VideoError("unsupported video path: " + path.string());
    }
  } else if (fs::exists(path / "video.json")) {
    seq = load_raw_video(path / "video.json");
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto ext = lower_ext(entry.path());
      if (entry.is_regular_file() && (ext == ".ppm" || ext == ".png")) files.push_back(entry.path());
    }
    if (files.empty()) throw VideoError("empty directory: no .ppm or .png frames in " + path.string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) seq.frames.push_back(read_image(f));
    const auto labels = path / "labels.json";
    if (fs::exists(labels)) {
      try {
        std::ifstream in(labels);
        auto doc = nlohmann::json::parse(in);
        if (doc.contains("mos")) seq.mos = doc["mos"].get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw VideoError("malformed " + labels.string() + ": " + e.what());
      }
    }
  }
  validate(seq);
  return seq;
}

void save_frame_dir(const fs::path& dir, const FrameSequence& seq) {
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%06zu.ppm", i + 1);
    write_ppm(dir / name, seq.frames[i]);
  }
  if (seq.mos) {
    std::ofstream out(dir / "labels.json");
    out << nlohmann::json{{"mos", *seq.mos}}.dump() << '\n';
  }
}

void save_raw_video(const fs::path& dir, const FrameSequence& seq) {
  validate(seq);
  fs::create_directories(dir);
  nlohmann::json header{{"height", seq.height()}, {"width", seq.width()}, {"frames", seq.size()}};
  if (seq.mos) header["mos"] = *seq.mos;
  if (seq.frame_rate) header["frame_rate"] = *seq.frame_rate;
  std::ofstream js(dir / "video.json");
  js << header.dump() << '\n';
  std::ofstream bin(dir / "video.rgb8", std::ios::binary | std::ios::trunc);
  for (const auto& f : seq.frames)
    for (float v : f.rgb) bin.put(static_cast<char>(to_byte(v)));
  if (!js || !bin) throw VideoError("cannot write raw video into " + dir.string());
}

// --- resampling -------------------------------------------------------------

int scaled_longer_side(int longer, int shorter, int target) {
  const double exact = static_cast<double>(longer) * target / shorter;
  return std::max(1, static_cast<int>(std::round(exact)));  // std::round is half away from zero
}

Frame resize(const Frame& frame, int height, int width) {
  if (height < 1 || width < 1) throw VideoError("resize target must be positive");
  if (height == frame.height && width == frame.width) return frame;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int out_len, int in_len) {
    std::vector<Tap> t(out_len);
    const double ratio = static_cast<double>(in_len) / out_len;
    for (int o = 0; o < out_len; ++o) {
      double src = (o + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in_len - 1));
      int i0 = static_cast<int>(std::floor(src));
      int i1 = std::min(i0 + 1, in_len - 1);
      t[o] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(height, frame.height);
  const auto tx = taps(width, frame.width);

  Frame out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        // a + f * (b - a) keeps constant regions exactly constant.
        const double a = frame.at(ty[y].i0, tx[x].i0, c);
        const double b = frame.at(ty[y].i0, tx[x].i1, c);
        const double d0 = frame.at(ty[y].i1, tx[x].i0, c);
        const double d1 = frame.at(ty[y].i1, tx[x].i1, c);
        const double top = a + tx[x].f * (b - a);
        const double bottom = d0 + tx[x].f * (d1 - d0);
        out.at(y, x, c) = static_cast<float>(top + ty[y].f * (bottom - top));
      }
    }
  }
  return out;
}

Frame resize_shorter_side(const Frame& frame, int target) {
  if (target < 1) throw VideoError("resize target must be >= 1, got " + std::to_string(target));
  const int shorter = frame.shorter_side();
  if (shorter == target) return frame;
  const int longer = scaled_longer_side(frame.longer_side(), shorter, target);
  if (frame.height <= frame.width) return resize(frame, target, longer);
  return resize(frame, longer, target);
}

FrameStrategy parse_frame_strategy(const std::string& s) {
  if (s == "uniform") return FrameStrategy::uniform;
  if (s == "front") return FrameStrategy::front;
  if (s == "center") return FrameStrategy::center;
  throw VideoError("unknown frame strategy '" + s + "' (expected uniform, front or center)");
}

std::string to_string(FrameStrategy s) {
  switch (s) {
    case FrameStrategy::uniform: return "uniform";
    case FrameStrategy::front: return "front";
    case FrameStrategy::center: return "center";
  }
  return "?";
}

std::vector<std::size_t> sample_indices(std::size_t length, std::size_t count, FrameStrategy strategy) {
  if (length == 0) throw VideoError("cannot sample frames from an empty sequence");
  if (count == 0) throw VideoError("frame count must be >= 1");
  std::vector<std::size_t> idx(count);
  if (length < count) {
    for (std::size_t j = 0; j < count; ++j) idx[j] = std::min(j, length - 1);
    return idx;
  }
  switch (strategy) {
    case FrameStrategy::uniform:
      if (count == 1) {
        idx[0] = 0;
      } else {
        for (std::size_t j = 0; j < count; ++j)
          idx[j] = static_cast<std::size_t>(
              std::round(static_cast<double>(j) * static_cast<double>(length - 1) / static_cast<double>(count - 1)));
      }
      break;
    case FrameStrategy::front:
      for (std::size_t j = 0; j < count; ++j) idx[j] = j;
      break;
    case FrameStrategy::center: {
      std::size_t mid = length / 2;
      std::size_t start = mid >= count / 2 ? mid - count / 2 : 0;
      start = std::min(start, length - count);
      for (std::size_t j = 0; j < count; ++j) idx[j] = start + j;
      break;
    }
  }
  return idx;
}

FrameSequence sample_frames(const FrameSequence& seq, std::size_t count, FrameStrategy strategy) {
  FrameSequence out;
  out.frame_rate = seq.frame_rate;
  out.mos = seq.mos;
  for (std::size_t i : sample_indices(seq.size(), count, strategy)) out.frames.push_back(seq.frames[i]);
  return out;
}

}  // namespace mret
