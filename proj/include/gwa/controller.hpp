#pragma once

// Checkpoint selection over a completed GWA series: scratch (argmax after
// warm-up), fine-tune (argmax after the first dip), and the LabelWave-style
// prediction-change baseline.

#include "gwa/moments.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gwa {

struct GwaSeries {
    std::vector<EpochSummary> epochs; // strictly increasing epoch indices
    std::uint64_t total_steps = 0;
    std::uint32_t steps_per_epoch = 0;
    std::uint32_t batch_size = 0;
    std::uint64_t dataset_size = 0;

    std::vector<std::optional<double>> gwa_values() const;
};

enum class StopCriterion { GwaScratch, GwaFinetune, LabelWave, ValAccuracy };

const char* to_string(StopCriterion c) noexcept;

struct StopDecision {
    std::uint32_t selected_epoch = 0;
    std::size_t selected_index = 0; // position in the series
    StopCriterion criterion = StopCriterion::GwaScratch;
    std::size_t warmup_epochs = 0;
    /// Intermediate quantities of the rule, e.g. "minimum_epoch" or "fallback".
    nlohmann::json rationale = nlohmann::json::object();
};

nlohmann::json to_json(const StopDecision& d);
StopDecision stop_decision_from_json(const nlohmann::json& j);
StopCriterion stop_criterion_from_string(const std::string& name);

/// Number of leading epochs masked by a warm-up fraction: ceil(fraction * epochs).
std::size_t warmup_epoch_count(double warmup_fraction, std::size_t epochs);

/// Epoch with maximal gwa after warm-up; earliest wins ties. Unstable,
/// degenerate and under-sampled epochs are skipped. Throws AllEpochsExcluded
/// when nothing is eligible and InvalidArgument for an empty series.
StopDecision select_scratch(const GwaSeries& series, double warmup_fraction = 0.10);

/// First local minimum (<= its min_window neighbours on both sides and
/// followed by a rise > min_rise), then the gwa maximum strictly after it.
/// Falls back to select_scratch when there is no such minimum.
StopDecision select_finetune(const GwaSeries& series, std::size_t min_window = 3,
                             double min_rise = 0.0, double fallback_warmup_fraction = 0.10);

/// Argmax of a per-epoch metric (e.g. oracle validation accuracy), earliest tie.
StopDecision select_by_metric(const std::vector<double>& metric, StopCriterion criterion,
                              double warmup_fraction = 0.0);

struct PredictionChangeSeries {
    /// Fraction of samples whose argmax changed vs the previous epoch;
    /// nullopt for the first epoch.
    std::vector<std::optional<double>> change_fraction;
};

struct LabelWaveResult {
    PredictionChangeSeries changes;
    StopDecision decision;
};

PredictionChangeSeries prediction_changes(const std::vector<std::vector<std::uint32_t>>& predictions_by_epoch);

/// Approximation of LabelWave: the post-warm-up epoch with the smallest
/// prediction-change fraction, earliest tie. Throws LengthMismatch when the
/// per-epoch vectors differ in length and InvalidArgument below two epochs.
LabelWaveResult labelwave(const std::vector<std::vector<std::uint32_t>>& predictions_by_epoch,
                          double warmup_fraction = 0.10);

/// Online variant: stop once gwa has not improved for `patience` eligible
/// epochs after warm-up.
class PatienceStopper {
public:
    PatienceStopper(std::size_t warmup_epochs, std::size_t patience);

    /// Feeds the next epoch; returns true when training should stop.
    bool observe(const EpochSummary& summary);

    std::optional<std::uint32_t> best_epoch() const noexcept { return best_epoch_; }
    bool stopped() const noexcept { return stopped_; }

private:
    std::size_t warmup_;
    std::size_t patience_;
    std::size_t seen_ = 0;
    std::size_t since_best_ = 0;
    std::optional<double> best_;
    std::optional<std::uint32_t> best_epoch_;
    bool stopped_ = false;
};

} // namespace gwa
