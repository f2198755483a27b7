#include "mret/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace mret {

namespace {

constexpr double kStochasticTol = 1e-5;
constexpr double kMassFloor = 1e-9;

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0);
  Tensor c(Shape{n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double av = a.at(i, k);
      for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(k, j);
    }
  return c;
}

}  // namespace

Tensor head_average(const Tensor& attention) {
  if (attention.rank() != 3 || attention.dim(1) != attention.dim(2))
    throw RolloutError("attention must be [heads, S, S], got " + shape_str(attention.shape()));
  const std::size_t h = attention.dim(0), s = attention.dim(1);
  Tensor out(Shape{s, s}, 0.0);
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t i = 0; i < s * s; ++i) out[i] += attention[k * s * s + i];
  for (double& v : out.data()) v /= static_cast<double>(h);
  return out;
}

Tensor rollout_matrix(const std::vector<Tensor>& layers, const RolloutOptions& opts) {
  if (layers.empty()) throw RolloutError("rollout needs at least one layer");
  const std::size_t s = layers.front().dim(0);
  Tensor result;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& a = layers[l];
    if (a.rank() != 2 || a.dim(0) != s || a.dim(1) != s)
      throw RolloutError("layer " + std::to_string(l) + " has shape " + shape_str(a.shape()) + ", expected [" +
                         std::to_string(s) + "x" + std::to_string(s) + "]");
    Tensor layer = a;
    for (std::size_t i = 0; i < s; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        if (a.at(i, j) < -kStochasticTol) throw RolloutError("layer " + std::to_string(l) + " has negative entries");
        row += a.at(i, j);
      }
      if (std::abs(row - 1.0) > kStochasticTol)
        throw RolloutError("layer " + std::to_string(l) + " row " + std::to_string(i) + " sums to " + std::to_string(row));
      if (opts.residual) {
        double total = 0.0;
        for (std::size_t j = 0; j < s; ++j) total += layer.at(i, j) = 0.5 * a.at(i, j) + (i == j ? 0.5 : 0.0);
        for (std::size_t j = 0; j < s; ++j) layer.at(i, j) /= total;
      }
    }
    result = l == 0 ? layer : matmul_plain(layer, result);
  }
  return result;
}

std::vector<double> cls_attention(const Tensor& rollout) {
  const std::size_t s = rollout.dim(0);
  if (s < 2) throw RolloutError("rollout has no non-class tokens");
  std::vector<double> out(rollout.data().begin() + 1, rollout.data().begin() + s);
  const double mass = std::accumulate(out.begin(), out.end(), 0.0);
  if (mass < kMassFloor) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(s - 1));
    return out;
  }
  for (double& v : out) v /= mass;
  return out;
}

namespace {

std::vector<Tensor> averaged(const std::vector<Tensor>& layers) {
  std::vector<Tensor> out;
  for (const auto& t : layers) out.push_back(head_average(t));
  return out;
}

}  // namespace

SpatialHeatmap spatial_heatmap(const ForwardTrace& trace, std::size_t group_index, const RolloutOptions& opts) {
  if (group_index >= trace.spatial_attention.size() || trace.spatial_attention[group_index].empty())
    throw RolloutError("spatial attention not retained for group " + std::to_string(group_index));
  const auto layers = averaged(trace.spatial_attention[group_index]);
  SpatialHeatmap map;
  map.values = cls_attention(rollout_matrix(layers, opts));
  map.grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(map.values.size()))));
  if (static_cast<std::size_t>(map.grid) * map.grid != map.values.size())
    throw RolloutError("spatial token count " + std::to_string(map.values.size()) + " is not a square grid");
  return map;
}

std::vector<double> temporal_profile(const ForwardTrace& trace, const RolloutOptions& opts) {
  if (trace.temporal_attention.empty()) throw RolloutError("temporal attention not retained");
  return cls_attention(rollout_matrix(averaged(trace.temporal_attention), opts));
}

void export_heatmap(const std::filesystem::path& dir, const SpatialHeatmap& map, const Frame& frame,
                    const MultiResConfig& cfg, const AlignCenter& center, int scale_index) {
  std::filesystem::create_directories(dir);
  const double peak = *std::max_element(map.values.begin(), map.values.end());
  std::vector<double> scaled(map.values.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = peak > 0 ? map.values[i] / peak : 0.0;
  write_pgm(dir / "heatmap.pgm", map.grid, map.grid, scaled);

  const auto centers = patch_centers(cfg, center, scale_index);
  const double half = cfg.pitch(scale_index) / 2.0;
  Frame overlay = frame;
  for (int y = 0; y < overlay.height; ++y)
    for (int x = 0; x < overlay.width; ++x) {
      // Nearest grid cell owning this pixel, if any.
      for (std::size_t k = 0; k < centers.size(); ++k) {
        if (std::abs(y + 0.5 - centers[k].y) <= half && std::abs(x + 0.5 - centers[k].x) <= half) {
          const float w = static_cast<float>(scaled[k]);
          overlay.at(y, x, 0) = 0.5f * overlay.at(y, x, 0) + 0.5f * w;
          overlay.at(y, x, 1) = 0.5f * overlay.at(y, x, 1);
          overlay.at(y, x, 2) = 0.5f * overlay.at(y, x, 2) + 0.5f * (1.0f - w);
          break;
        }
      }
    }
  write_png(dir / "overlay.png", overlay);

  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t k = 0; k < centers.size(); ++k)
    cells.push_back({{"row", k / map.grid}, {"col", k % map.grid}, {"center_y", centers[k].y},
                     {"center_x", centers[k].x}, {"weight", map.values[k]}});
  std::ofstream out(dir / "cells.json");
  out << nlohmann::json{{"grid", map.grid}, {"scale_index", scale_index}, {"cells", cells}}.dump(2) << '\n';
}

void export_temporal_csv(const std::filesystem::path& path, const std::vector<double>& profile) {
  std::ofstream out(path);
  if (!out) throw RolloutError("cannot write " + path.string());
  out.precision(17);
  out << "t,attention\n";
  for (std::size_t t = 0; t < profile.size(); ++t) out << t + 1 << ',' << profile[t] << '\n';
}

}  // namespace mret
