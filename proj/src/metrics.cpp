#include "mret/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mret {

std::vector<double> rank_average_ties(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double plcc(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size())
    throw CorrelationError("prediction and label counts differ");
  const std::size_t n = predictions.size();
  if (n < 2) throw CorrelationError("correlation needs at least 2 pairs");
  const double mx = std::accumulate(predictions.begin(), predictions.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = predictions[i] - mx, dy = labels[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw CorrelationError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srcc(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size())
    throw CorrelationError("prediction and label counts differ");
  const auto rp = rank_average_ties(predictions);
  const auto rl = rank_average_ties(labels);
  return plcc(rp, rl);
}

}  // namespace mret
