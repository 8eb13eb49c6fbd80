// gwa: train, ingest, analyze and plot gradient-weight alignment runs.

#include "gwa/error.hpp"
#include "gwa/harness/analysis.hpp"
#include "gwa/harness/config.hpp"
#include "gwa/harness/plots.hpp"
#include "gwa/harness/run_files.hpp"
#include "gwa/ingest.hpp"
#include "gwa/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gwa;
using namespace gwa::harness;

namespace {

struct StopArgs {
    std::string mode = "scratch";
    double warmup = 0.10;
    std::size_t window = 3;
    double min_rise = 0.0;

    StopOptions options() const
    {
        StopOptions o;
        if (mode == "finetune") {
            o.mode = StopMode::Finetune;
        } else if (mode != "scratch") {
            throw Error(ErrorCode::InvalidArgument, "mode must be scratch or finetune");
        }
        o.warmup_fraction = warmup;
        o.finetune_window = window;
        o.finetune_min_rise = min_rise;
        return o;
    }
};

void add_stop_options(CLI::App* cmd, StopArgs& args)
{
    cmd->add_option("--mode", args.mode, "stopping rule: scratch or finetune")
        ->check(CLI::IsMember({"scratch", "finetune"}));
    cmd->add_option("--warmup", args.warmup, "warm-up fraction excluded from selection")
        ->check(CLI::Range(0.0, 0.999));
    cmd->add_option("--window", args.window, "fine-tune minimum detection window (epochs)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--min-rise", args.min_rise, "fine-tune minimum rise after the dip");
}

// A run directory, or a file directly inside one.
fs::path run_dir(const fs::path& p)
{
    return fs::is_directory(p) ? p : p.parent_path();
}

std::vector<AlignmentScore> load_alignment(const fs::path& dir)
{
    const auto path = dir / kAlignmentFile;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::TraceMissing,
                    "no per-sample alignment file at '" + path.string() + "' (ingest with --per-sample)");
    }
    return read_alignment_rows(in);
}

std::optional<std::vector<std::uint8_t>> load_flips(const fs::path& path)
{
    if (path.empty() || !fs::exists(path)) {
        return std::nullopt;
    }
    return flips_from_json(nlohmann::json::parse(read_text_file(path)));
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              std::optional<std::uint64_t> seed, bool plots)
{
    RunConfig config = load_run_config(config_path);
    if (!out_override.empty()) {
        config.out_dir = out_override;
    }
    if (seed) {
        config.trainer.seed = *seed;
    }
    const fs::path out = config.out_dir;
    const auto result = run_training(config, out);
    if (plots) {
        emit_plots(result.report, result.scores, &result.data.flipped, out / "plots");
    }
    nlohmann::json summary = {{"out_dir", out.string()}, {"epochs", result.report.epochs.size()}};
    nlohmann::json decisions = nlohmann::json::object();
    for (const auto& d : result.report.decisions) {
        decisions[to_string(d.criterion)] = d.selected_epoch;
    }
    summary["selected_epochs"] = decisions;
    summary["oracle_best_test_epoch"] = result.report.oracle_best_test_epoch;
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_ingest(const std::string& trace_path, const std::string& out, bool per_sample,
               const IngestOptions& options, const StopArgs& stop)
{
    const StopOptions stop_options = stop.options();
    IngestRun run;
    if (trace_path == "-") {
        run = run_ingest(std::cin, options, per_sample, stop_options, out);
    } else {
        std::ifstream in(trace_path, std::ios::binary);
        if (!in) {
            throw Error(ErrorCode::IoError, "cannot open trace '" + trace_path + "'");
        }
        run = run_ingest(in, options, per_sample, stop_options, out);
    }
    nlohmann::json summary = {{"epochs", run.result.series.epochs.size()},
                              {"samples", run.result.samples},
                              {"steps", run.result.steps}};
    if (run.decision) {
        summary["selected_epoch"] = run.decision->selected_epoch;
    } else {
        summary["decision_error"] = run.decision_error;
    }
    std::cout << summary.dump(2) << '\n';
    return run.decision ? 0 : 3;
}

int cmd_analyze_stop(const fs::path& trace, const StopArgs& stop, const std::string& out)
{
    const fs::path file = fs::is_directory(trace) ? trace / kEpochsFile : trace;
    std::istringstream in(read_text_file(file));
    const auto epochs = read_epochs_jsonl(in);
    const auto doc = decision_document(decide(epochs, stop.options()), epochs);
    if (!out.empty()) {
        write_text_file(out, doc.dump(2) + "\n");
    }
    std::cout << doc.dump(2) << '\n';
    return 0;
}

std::uint32_t default_epoch(const fs::path& dir, const std::vector<AlignmentScore>& scores)
{
    const auto decision_path = dir / kDecisionFile;
    if (fs::exists(decision_path)) {
        const auto doc = nlohmann::json::parse(read_text_file(decision_path));
        if (doc.contains("selected_epoch")) {
            return doc.at("selected_epoch").get<std::uint32_t>();
        }
    }
    if (scores.empty()) {
        throw Error(ErrorCode::TraceMissing, "alignment file is empty");
    }
    return scores.back().epoch;
}

int cmd_analyze_rank(const fs::path& trace, std::optional<std::uint32_t> epoch,
                     std::optional<std::size_t> k, const std::string& flips_arg, std::size_t limit)
{
    const fs::path dir = run_dir(trace);
    const auto scores = load_alignment(dir);
    const auto flips = load_flips(flips_arg.empty() ? dir / kFlipsFile : fs::path(flips_arg));
    const std::uint32_t e = epoch ? *epoch : default_epoch(dir, scores);
    const auto report = rank_samples(scores, e, flips ? &*flips : nullptr, k);
    std::cout << to_json(report, limit).dump(2) << '\n';
    return 0;
}

int cmd_analyze_compare(const fs::path& trace)
{
    const auto scores = load_alignment(run_dir(trace));
    std::cout << to_json(compare_gradient_norm(scores)).dump(2) << '\n';
    return 0;
}

int cmd_plot(const fs::path& report_path, const std::string& out)
{
    const auto report = run_report_from_json(nlohmann::json::parse(read_text_file(report_path)));
    const fs::path dir = report_path.parent_path();
    std::vector<AlignmentScore> scores;
    if (!report.alignment_path.empty() && fs::exists(dir / report.alignment_path)) {
        std::ifstream in(dir / report.alignment_path, std::ios::binary);
        scores = read_alignment_rows(in);
    }
    const auto flips = report.flips_path.empty() ? std::nullopt : load_flips(dir / report.flips_path);
    const fs::path out_dir = out.empty() ? dir / "plots" : fs::path(out);
    const auto files = emit_plots(report, scores, flips ? &*flips : nullptr, out_dir);
    for (const auto& f : files) {
        std::cout << f.string() << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gradient-weight alignment: training telemetry, stopping and attribution"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train a reference model and write a run directory");
    std::string config_path;
    std::string train_out;
    std::optional<std::uint64_t> train_seed;
    bool train_plots = false;
    train->add_option("--config", config_path, "flat key = value run config")->required();
    train->add_option("--out", train_out, "output directory (overrides output.dir)");
    train->add_option("--seed", train_seed, "override the config seed");
    train->add_flag("--plots", train_plots, "also write plots under <out>/plots");

    auto* ingest = app.add_subcommand("ingest", "compute per-epoch GWA from a telemetry trace");
    std::string trace_path;
    std::string ingest_out;
    bool per_sample = false;
    IngestOptions ingest_options;
    StopArgs ingest_stop;
    ingest->add_option("--trace", trace_path, "trace file, or - for stdin")->required();
    ingest->add_option("--out", ingest_out, "output directory")->required();
    ingest->add_flag("--per-sample", per_sample, "write per-sample alignment rows");
    ingest->add_flag("--include-bias", ingest_options.alignment.include_bias,
                     "include the head bias in the gradient and weights");
    ingest->add_option("--beta", ingest_options.gwa.beta, "kurtosis offset")->check(CLI::PositiveNumber);
    ingest->add_option("--min-samples", ingest_options.gwa.min_samples, "minimum samples per epoch");
    ingest->add_flag("--projection", ingest_options.projection.enabled, "project latents before scoring");
    ingest->add_option("--projection-dim", ingest_options.projection.dim, "projected dimension")
        ->check(CLI::PositiveNumber);
    ingest->add_option("--projection-seed", ingest_options.projection.seed, "projection seed");
    add_stop_options(ingest, ingest_stop);

    auto* analyze = app.add_subcommand("analyze", "analyze an ingested or trained run directory");
    analyze->require_subcommand(1);
    auto* stop = analyze->add_subcommand("stop", "select the stopping epoch from epoch summaries");
    std::string stop_trace;
    std::string stop_out;
    StopArgs stop_args;
    stop->add_option("--trace", stop_trace, "run directory or epochs.jsonl")->required();
    stop->add_option("--out", stop_out, "also write the decision document here");
    add_stop_options(stop, stop_args);

    auto* rank = analyze->add_subcommand("rank", "rank samples by ascending alignment");
    std::string rank_trace;
    std::optional<std::uint32_t> rank_epoch;
    std::optional<std::size_t> rank_k;
    std::string rank_flips;
    std::size_t rank_limit = 50;
    rank->add_option("--trace", rank_trace, "run directory")->required();
    rank->add_option("--epoch", rank_epoch, "epoch to rank (default: selected epoch)");
    rank->add_option("--k", rank_k, "precision cut-off (default: number of flipped samples)");
    rank->add_option("--flips", rank_flips, "flip mask JSON (default: <dir>/flips.json)");
    rank->add_option("--limit", rank_limit, "rows to print");

    auto* compare = analyze->add_subcommand("compare", "correlate alignment with gradient norm");
    std::string compare_trace;
    compare->add_option("--trace", compare_trace, "run directory")->required();

    auto* plot = app.add_subcommand("plot", "render CSV and SVG plots from a run report");
    std::string report_path;
    std::string plot_out;
    plot->add_option("--report", report_path, "report.json")->required();
    plot->add_option("--out", plot_out, "output directory (default: <report dir>/plots)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            return cmd_train(config_path, train_out, train_seed, train_plots);
        }
        if (*ingest) {
            return cmd_ingest(trace_path, ingest_out, per_sample, ingest_options, ingest_stop);
        }
        if (*stop) {
            return cmd_analyze_stop(stop_trace, stop_args, stop_out);
        }
        if (*rank) {
            return cmd_analyze_rank(rank_trace, rank_epoch, rank_k, rank_flips, rank_limit);
        }
        if (*compare) {
            return cmd_analyze_compare(compare_trace);
        }
        if (*plot) {
            return cmd_plot(report_path, plot_out);
        }
    } catch (const Error& e) {
        std::cerr << "gwa: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "gwa: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
