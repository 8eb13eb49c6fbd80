#pragma once

// CSV series plus static SVG charts: a min-max normalized overlay of the
// per-epoch series and per-epoch alignment histograms. Output is a pure
// function of the inputs.

#include "gwa/alignment.hpp"
#include "gwa/harness/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gwa::harness {

struct Histogram {
    double lo = -1.0;
    double hi = 1.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const noexcept;
};

/// Values outside [lo, hi] land in the edge bins; non-finite values are skipped.
Histogram histogram(std::span<const double> values, std::size_t bins = 40, double lo = -1.0,
                    double hi = 1.0);

/// Min-max normalization to [0, 1]; a constant series maps to 0.5.
std::vector<std::optional<double>> min_max_normalize(const std::vector<std::optional<double>>& series);

std::string series_csv(const RunReport& report);

/// Writes series.csv, series.svg and histogram files for the first,
/// selected and last epochs (split by flip status when a mask is given).
/// Returns the written paths. Throws IoError.
std::vector<std::filesystem::path> emit_plots(const RunReport& report,
                                              std::span<const AlignmentScore> scores,
                                              const std::vector<std::uint8_t>* flip_mask,
                                              const std::filesystem::path& out_dir);

} // namespace gwa::harness
