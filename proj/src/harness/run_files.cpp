#include "gwa/harness/run_files.hpp"

#include "gwa/error.hpp"
#include "gwa/harness/analysis.hpp"
#include "gwa/trace.hpp"

#include <fstream>
#include <sstream>

namespace gwa::harness {

namespace fs = std::filesystem;

void write_epochs_jsonl(std::ostream& out, const std::vector<EpochSummary>& epochs)
{
    for (const auto& e : epochs) {
        out << to_json(e).dump() << '\n';
    }
}

std::vector<EpochSummary> read_epochs_jsonl(std::istream& in)
{
    std::vector<EpochSummary> epochs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            epochs.push_back(epoch_summary_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ConfigError,
                        "epoch summaries line " + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::ConfigError,
                        "epoch summaries line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return epochs;
}

nlohmann::json flips_to_json(const std::vector<std::uint8_t>& mask)
{
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            ids.push_back(i);
        }
    }
    return {{"train_size", mask.size()}, {"flipped_ids", ids}};
}

std::vector<std::uint8_t> flips_from_json(const nlohmann::json& j)
{
    try {
        std::vector<std::uint8_t> mask(j.at("train_size").get<std::size_t>(), 0);
        for (auto id : j.at("flipped_ids").get<std::vector<std::size_t>>()) {
            if (id >= mask.size()) {
                throw Error(ErrorCode::ConfigError, "flipped id out of range");
            }
            mask[id] = 1;
        }
        return mask;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("flip mask: ") + e.what());
    }
}

StopDecision decide(const std::vector<EpochSummary>& epochs, const StopOptions& options)
{
    GwaSeries series;
    series.epochs = epochs;
    if (options.mode == StopMode::Finetune) {
        return select_finetune(series, options.finetune_window, options.finetune_min_rise,
                               options.warmup_fraction);
    }
    return select_scratch(series, options.warmup_fraction);
}

nlohmann::json decision_document(const StopDecision& decision, const std::vector<EpochSummary>& epochs)
{
    nlohmann::json doc = to_json(decision);
    doc["epochs"] = epochs.size();
    nlohmann::json gwa = nlohmann::json::array();
    for (const auto& e : epochs) {
        gwa.push_back(e.eligible() ? nlohmann::json(*e.gwa) : nlohmann::json(nullptr));
    }
    doc["gwa"] = std::move(gwa);
    return doc;
}

std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    }
}

namespace {

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
    }
}

std::ofstream open_binary(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    }
    return out;
}

} // namespace

TrainResult run_training(const RunConfig& config, const fs::path& out_dir)
{
    ensure_dir(out_dir);
    auto trace = open_binary(out_dir / kTraceFile);
    std::ofstream alignment;
    TrainOutputs outputs;
    outputs.trace = &trace;
    if (config.per_sample) {
        alignment = open_binary(out_dir / kAlignmentFile);
        outputs.alignment = &alignment;
    }
    TrainResult result = train(config.trainer, outputs);
    trace.close();
    alignment.close();
    if (!trace || (config.per_sample && !alignment)) {
        throw Error(ErrorCode::IoError, "failed writing trace files in '" + out_dir.string() + "'");
    }

    auto& report = result.report;
    report.trace_path = kTraceFile;
    report.alignment_path = config.per_sample ? kAlignmentFile : "";
    report.flips_path = kFlipsFile;

    std::ostringstream epochs;
    write_epochs_jsonl(epochs, result.series.epochs);
    write_text_file(out_dir / kEpochsFile, epochs.str());
    write_text_file(out_dir / kFlipsFile, flips_to_json(result.data.flipped).dump() + "\n");
    write_text_file(out_dir / kReportFile, to_json(report).dump(2) + "\n");

    const StopCriterion primary =
        config.trainer.mode == StopMode::Finetune ? StopCriterion::GwaFinetune : StopCriterion::GwaScratch;
    if (const auto* d = report.decision(primary)) {
        write_text_file(out_dir / kDecisionFile,
                        decision_document(*d, result.series.epochs).dump(2) + "\n");
    } else {
        nlohmann::json doc = {{"error", report.notes.empty() ? "no decision" : report.notes.front()}};
        write_text_file(out_dir / kDecisionFile, doc.dump(2) + "\n");
    }
    return result;
}

IngestRun run_ingest(std::istream& trace, const IngestOptions& options, bool per_sample,
                     const StopOptions& stop, const fs::path& out_dir)
{
    ensure_dir(out_dir);
    IngestOptions opts = options;
    std::ofstream alignment;
    if (per_sample) {
        alignment = open_binary(out_dir / kAlignmentFile);
        opts.alignment_out = &alignment;
    }
    IngestRun run;
    run.result = ingest_stream(trace, opts);
    if (per_sample) {
        alignment.close();
        if (!alignment) {
            throw Error(ErrorCode::IoError, "failed writing alignment rows");
        }
    }
    std::ostringstream epochs;
    write_epochs_jsonl(epochs, run.result.series.epochs);
    write_text_file(out_dir / kEpochsFile, epochs.str());

    nlohmann::json doc;
    try {
        run.decision = decide(run.result.series.epochs, stop);
        doc = decision_document(*run.decision, run.result.series.epochs);
    } catch (const Error& e) {
        run.decision_error = e.what();
        doc = {{"error", run.decision_error}};
    }
    write_text_file(out_dir / kDecisionFile, doc.dump(2) + "\n");
    return run;
}

} // namespace gwa::harness
