#pragma once

#include <optional>
#include <span>
#include <vector>

namespace gwa {

/// Pearson correlation; nullopt when either series is constant or the
/// lengths differ or fewer than two points are given.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Ranks with ties averaged (1-based).
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation (Pearson on average ranks).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

} // namespace gwa
