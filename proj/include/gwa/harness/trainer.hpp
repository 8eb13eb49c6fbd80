#pragma once

// Reference trainer: minibatch training of a small classifier that scores
// every sample's head-gradient alignment at the start of its step, emits a
// telemetry trace, and records the per-epoch series needed to grade the
// validation-free stopping rules against held-out oracles.

#include "gwa/alignment.hpp"
#include "gwa/controller.hpp"
#include "gwa/harness/dataset.hpp"
#include "gwa/harness/model.hpp"
#include "gwa/moments.hpp"
#include "gwa/projection.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gwa::harness {

enum class StopMode { Scratch, Finetune };

struct TrainerConfig {
    ModelConfig model;
    OptimizerConfig optimizer;
    DatasetConfig dataset;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double label_noise = 0.0;
    bool random_labels = false;
    double val_fraction = 0.1;
    /// Fine-tune runs: epochs of clean pre-fit on the unshifted distribution
    /// before the traced run starts.
    std::size_t pretrain_epochs = 0;
    std::size_t pretrain_size = 0;
    StopMode mode = StopMode::Scratch;
    double warmup_fraction = 0.10;
    std::size_t finetune_window = 3;
    AlignmentOptions alignment;
    GwaOptions gwa;
    /// Scores are computed in the projected space; the trace stays raw.
    ProjectionConfig projection;

    /// Throws ConfigError.
    void validate() const;
};

struct EpochRecord {
    std::uint32_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0; // against the (possibly corrupted) training labels
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::optional<double> gwa;
    double m1 = 0.0;
    std::optional<double> excess_kurtosis;
    std::optional<double> labelwave_change;
};

struct MislabelMetrics {
    std::uint32_t epoch = 0;
    std::size_t flipped = 0;
    std::size_t k = 0;
    std::optional<double> precision_at_k;
    std::optional<double> chance_rate;
    std::optional<double> mean_gamma_flipped;
    std::optional<double> mean_gamma_clean;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    std::vector<EpochSummary> gwa_series;
    std::vector<StopDecision> decisions;
    std::optional<MislabelMetrics> mislabel;
    std::uint32_t oracle_best_test_epoch = 0;
    std::string trace_path;
    std::string alignment_path;
    std::string flips_path;
    std::vector<std::string> notes;

    const StopDecision* decision(StopCriterion criterion) const;
};

nlohmann::json to_json(const RunReport& report);
RunReport run_report_from_json(const nlohmann::json& j);

struct TrainOutputs {
    std::ostream* trace = nullptr;     // telemetry trace
    std::ostream* alignment = nullptr; // per-sample alignment rows
    bool retain_scores = true;
};

struct TrainResult {
    RunReport report;
    GwaSeries series;
    std::vector<AlignmentScore> scores;
    /// Argmax predictions on the training set at the end of each epoch.
    std::vector<std::vector<std::uint32_t>> train_predictions;
    DataSplits data;
};

/// Deterministic given the config. Throws DatasetLoad, ConfigError and
/// NonFiniteLoss (with the offending epoch).
TrainResult train(const TrainerConfig& config, const TrainOutputs& outputs = {});

} // namespace gwa::harness
