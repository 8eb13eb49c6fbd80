#pragma once

// Per-sample attribution over a retained alignment trace: ascending-gamma
// ranking with mislabel precision, and the gamma vs gradient-norm comparison.

#include "gwa/alignment.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace gwa::harness {

struct RankedSample {
    std::uint64_t sample_id = 0;
    double gamma = 0.0;
    double grad_norm = 0.0;
    std::optional<bool> flipped;
};

struct RankReport {
    std::uint32_t epoch = 0;
    std::vector<RankedSample> ranking; // ascending gamma, ties by sample id
    std::size_t excluded = 0;
    double mean_gamma = 0.0;
    std::size_t k = 0;
    std::optional<double> precision_at_k; // N/A without a flip mask or with k = 0
    std::optional<double> chance_rate;
};

/// `flip_mask` is indexed by sample id. `k` defaults to the number of
/// flipped samples among the ranked ones. Throws TraceMissing when the epoch
/// has no scores.
RankReport rank_samples(std::span<const AlignmentScore> scores, std::uint32_t epoch,
                        const std::vector<std::uint8_t>* flip_mask = nullptr,
                        std::optional<std::size_t> k = std::nullopt);

nlohmann::json to_json(const RankReport& report, std::size_t max_rows = 50);

struct NormCorrelation {
    std::uint32_t epoch = 0;
    std::size_t samples = 0;
    std::optional<double> spearman; // N/A for constant series
    double mean_gamma = 0.0;
    double mean_grad_norm = 0.0;
};

struct NormComparison {
    std::vector<NormCorrelation> epochs;
    /// Fraction of epochs with a defined |rho| >= 0.95.
    double high_correlation_fraction = 0.0;
    bool persistently_high = false;
    /// Late-phase deltas (last epoch minus the epoch at 75% of training);
    /// reported only.
    std::optional<double> late_grad_norm_change;
    std::optional<double> late_gamma_change;
};

/// Throws TraceMissing for an empty trace. Undefined-gamma samples are
/// dropped from both series.
NormComparison compare_gradient_norm(std::span<const AlignmentScore> scores);

nlohmann::json to_json(const NormComparison& comparison);

} // namespace gwa::harness
