#pragma once

// Attention rollout: head-averaged attention matrices multiplied through the
// layers to attribute the class-token output to input tokens.

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "mret/model.hpp"

namespace mret {

class RolloutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RolloutOptions {
  /// Mix each layer as 0.5*A + 0.5*I (renormalized) to account for the
  /// residual connections. Off reproduces the plain product of attentions.
  bool residual = true;
};

/// Product A_L * ... * A_1 of the (optionally residual-corrected) layers.
/// Every input must be square and row-stochastic within 1e-5.
Tensor rollout_matrix(const std::vector<Tensor>& layers, const RolloutOptions& opts = {});

/// Mean over the head axis of a [heads, S, S] attention tensor.
Tensor head_average(const Tensor& attention);

/// Row 0 of the rollout restricted to positions 1..S-1, normalized to sum 1.
/// Falls back to uniform when that mass is below 1e-9.
std::vector<double> cls_attention(const Tensor& rollout);

struct SpatialHeatmap {
  int grid = 0;
  std::vector<double> values;  // G*G, row-major, sums to 1
};

SpatialHeatmap spatial_heatmap(const ForwardTrace& trace, std::size_t group_index, const RolloutOptions& opts = {});
std::vector<double> temporal_profile(const ForwardTrace& trace, const RolloutOptions& opts = {});

/// Writes heatmap.pgm (G x G, max scaled to white), overlay.png (heatmap
/// blended nearest-neighbour over `frame` around the patch-centre window of
/// `scale_index`) and cells.json (per-cell patch centre and weight).
void export_heatmap(const std::filesystem::path& dir, const SpatialHeatmap& map, const Frame& frame,
                    const MultiResConfig& cfg, const AlignCenter& center, int scale_index);

/// CSV with header "t,attention", t starting at 1.
void export_temporal_csv(const std::filesystem::path& path, const std::vector<double>& profile);

}  // namespace mret
