#pragma once

// Epoch-level alignment distribution: streaming central moments up to order
// four and the kurtosis-corrected GWA value derived from them.

#include "gwa/alignment.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace gwa {

/// One-pass, mergeable accumulator of central moment sums (Pebay's
/// pairwise update). Moments are population moments (normalized by n).
class CentralMoments {
public:
    void add(double x) noexcept;
    void merge(const CentralMoments& other) noexcept;

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    /// k-th central moment for k in {1,2,3,4}; k == 1 returns the mean.
    double moment(int k) const noexcept;

    /// Exact store-then-compute route: mean first, then sum (x - mean)^k / n.
    static CentralMoments two_pass(std::span<const double> values);

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double sum2_ = 0.0;
    double sum3_ = 0.0;
    double sum4_ = 0.0;
};

enum EpochFlag : std::uint32_t {
    kFlagNone = 0,
    kFlagDegenerate = 1u << 0,    // variance below threshold, gwa = m1 / beta
    kFlagUnstable = 1u << 1,      // kurtosis + beta <= 1e-6
    kFlagTooFewSamples = 1u << 2, // fewer defined scores than min_samples
    kFlagBimodal = 1u << 3,       // kurtosis near the two-point/uniform regime with wide spread
};

std::vector<std::string> flag_names(std::uint32_t flags);
std::uint32_t flags_from_names(const std::vector<std::string>& names);

struct GwaOptions {
    double beta = 1.2;
    std::size_t min_samples = 30;
    double variance_floor = 1e-12;
    double denominator_floor = 1e-6;
    /// Bimodality warning fires when |kurtosis + 1.2| < bimodal_band and m2 >= bimodal_min_variance.
    double bimodal_band = 0.1;
    double bimodal_min_variance = 0.1;
};

struct EpochDistribution {
    std::uint32_t epoch = 0;
    std::uint64_t excluded = 0;
    CentralMoments moments;
    double beta = 1.2;
    bool retain_raw = false;
    std::vector<std::pair<std::uint64_t, double>> raw_scores;

    std::uint64_t count() const noexcept { return moments.count(); }
    std::uint64_t observed() const noexcept { return moments.count() + excluded; }
};

/// Throws EpochMismatch if the score belongs to a different epoch.
void accumulate(EpochDistribution& dist, const AlignmentScore& score);

/// Throws EpochMismatch on differing epochs, InvalidArgument on differing beta.
EpochDistribution merge(const EpochDistribution& a, const EpochDistribution& b);

/// Excess kurtosis m4 / m2^2 - 3, or nullopt when m2 < variance_floor.
std::optional<double> excess_kurtosis(const CentralMoments& moments, double variance_floor = 1e-12);

/// m1 / (excess_kurtosis + beta). Degenerate variance falls back to m1 / beta.
/// Throws TooFewSamples below min_samples and Unstable when the denominator
/// is <= 1e-6.
double finalize_gwa(const EpochDistribution& dist, double beta = 1.2,
                    std::size_t min_samples = 30);

struct EpochSummary {
    std::uint32_t epoch = 0;
    std::uint64_t count = 0;
    std::uint64_t excluded = 0;
    double m1 = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    std::optional<double> excess_kurtosis;
    std::optional<double> gwa;
    double beta = 1.2;
    std::uint32_t flags = kFlagNone;

    /// Usable for checkpoint selection.
    bool eligible() const noexcept
    {
        return gwa.has_value() &&
               (flags & (kFlagDegenerate | kFlagUnstable | kFlagTooFewSamples)) == 0;
    }
};

/// Non-throwing finalization: every failure mode becomes a flag. `gwa` is
/// still populated for Degenerate and TooFewSamples epochs when computable.
EpochSummary summarize(const EpochDistribution& dist, const GwaOptions& options = {});

nlohmann::json to_json(const EpochSummary& summary);
EpochSummary epoch_summary_from_json(const nlohmann::json& j);

} // namespace gwa
