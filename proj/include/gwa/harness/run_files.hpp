#pragma once

// On-disk layout of a run directory, shared by the CLI and the bindings:
//   trace.gwat      telemetry trace
//   epochs.jsonl    one epoch summary per line
//   alignment.bin   24-byte per-sample rows
//   decision.json   stop decision document
//   flips.json      training-label corruption mask (harness runs)
//   report.json     full run report (harness runs)

#include "gwa/controller.hpp"
#include "gwa/ingest.hpp"
#include "gwa/harness/config.hpp"
#include "gwa/harness/trainer.hpp"
#include "gwa/moments.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gwa::harness {

inline constexpr const char* kTraceFile = "trace.gwat";
inline constexpr const char* kEpochsFile = "epochs.jsonl";
inline constexpr const char* kAlignmentFile = "alignment.bin";
inline constexpr const char* kDecisionFile = "decision.json";
inline constexpr const char* kFlipsFile = "flips.json";
inline constexpr const char* kReportFile = "report.json";

void write_epochs_jsonl(std::ostream& out, const std::vector<EpochSummary>& epochs);
/// Throws ConfigError on malformed lines.
std::vector<EpochSummary> read_epochs_jsonl(std::istream& in);

nlohmann::json flips_to_json(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> flips_from_json(const nlohmann::json& j);

struct StopOptions {
    StopMode mode = StopMode::Scratch;
    double warmup_fraction = 0.10;
    std::size_t finetune_window = 3;
    double finetune_min_rise = 0.0;
};

/// Decision over a completed summary series.
StopDecision decide(const std::vector<EpochSummary>& epochs, const StopOptions& options);

/// Decision document: the decision plus enough context to audit it.
nlohmann::json decision_document(const StopDecision& decision, const std::vector<EpochSummary>& epochs);

/// Trains and writes every run file into `out_dir`. Throws IoError plus
/// whatever train() throws.
TrainResult run_training(const RunConfig& config, const std::filesystem::path& out_dir);

struct IngestRun {
    IngestResult result;
    std::optional<StopDecision> decision;
    std::string decision_error;
};

/// Ingests a trace into `out_dir`: epochs.jsonl, alignment.bin when
/// `per_sample`, and decision.json (or an error document when no epoch is
/// eligible).
IngestRun run_ingest(std::istream& trace, const IngestOptions& options, bool per_sample,
                     const StopOptions& stop, const std::filesystem::path& out_dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace gwa::harness
