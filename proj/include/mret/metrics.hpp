#pragma once

// Rank and linear correlation between predicted and labelled quality scores.

#include <span>
#include <stdexcept>
#include <vector>

namespace mret {

class CorrelationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> rank_average_ties(std::span<const double> values);

/// Pearson product-moment correlation. Throws CorrelationError for fewer than
/// two pairs, unequal lengths, or a side with zero variance.
double plcc(std::span<const double> predictions, std::span<const double> labels);

/// Spearman correlation: Pearson on tie-averaged ranks.
double srcc(std::span<const double> predictions, std::span<const double> labels);

}  // namespace mret
