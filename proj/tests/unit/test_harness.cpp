#include "gwa/error.hpp"
#include "gwa/harness/analysis.hpp"
#include "gwa/harness/config.hpp"
#include "gwa/harness/dataset.hpp"
#include "gwa/harness/plots.hpp"
#include "gwa/harness/run_files.hpp"
#include "gwa/harness/trainer.hpp"
#include "gwa/ingest.hpp"
#include "gwa/trace.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gwa;
using namespace gwa::harness;
namespace fs = std::filesystem;

namespace {

TrainerConfig small_softmax(std::uint64_t seed = 1)
{
    TrainerConfig c;
    c.dataset.classes = 3;
    c.dataset.dim = 5;
    c.dataset.train_size = 300;
    c.dataset.test_size = 300;
    c.epochs = 10;
    c.batch_size = 32;
    c.seed = seed;
    c.optimizer.lr = 0.05;
    return c;
}

fs::path temp_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("gwa_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an exception");
    return ErrorCode::Internal;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing")
{
    const auto rc = run_config_from_text(R"(
# comment
model = "mlp"
hidden_dim = 32
activation = "tanh"
lr = 0.002   # trailing comment
epochs = 7
label_noise = 0.2
[dataset]
classes = 5
dim = 8
[projection]
enabled = true
dim = 4
[output]
dir = "runs/x"
per_sample = false
)");
    CHECK(rc.trainer.model.hidden_dim == 32);
    CHECK(rc.trainer.model.activation == Activation::Tanh);
    CHECK(rc.trainer.optimizer.lr == 0.002);
    CHECK(rc.trainer.epochs == 7);
    CHECK(rc.trainer.label_noise == 0.2);
    CHECK(rc.trainer.dataset.classes == 5);
    CHECK(rc.trainer.dataset.dim == 8);
    CHECK(rc.trainer.projection.enabled);
    CHECK(rc.trainer.projection.dim == 4);
    CHECK(rc.out_dir == "runs/x");
    CHECK_FALSE(rc.per_sample);
}

TEST_CASE("config errors")
{
    for (const char* bad : {"bogus = 1", "lr = abc", "epochs = -3", "lr", "lr = 1\nlr = 2",
                            "model = \"softmax\"\nhidden_dim = 8", "activation = \"gelu\"",
                            "label_noise = 0.2\nrandom_labels = true", "[unterminated"}) {
        CAPTURE(bad);
        CHECK(code_of([&] { run_config_from_text(bad); }) == ErrorCode::ConfigError);
    }
    CHECK(code_of([] { load_run_config("/nonexistent/config.toml"); }) != ErrorCode::Internal);
}

TEST_CASE("label noise flips exactly round(noise * n) training labels")
{
    DatasetConfig dc;
    dc.train_size = 1001;
    const auto s = make_splits(dc, 0.1, {0.3, false}, 4);
    const auto flipped = std::count(s.flipped.begin(), s.flipped.end(), 1);
    CHECK(flipped == static_cast<long>(std::lround(0.3 * static_cast<double>(s.train.size()))));
    for (std::size_t i = 0; i < s.train.size(); ++i) {
        CHECK((s.train.labels[i] != s.clean_train_labels[i]) == (s.flipped[i] != 0));
    }
    CHECK(s.val.size() == 100);
    CHECK(s.test.size() == dc.test_size);

    const auto clean = make_splits(dc, 0.1, {0.0, false}, 4);
    CHECK(std::count(clean.flipped.begin(), clean.flipped.end(), 1) == 0);
}

TEST_CASE("random labels are roughly uniform")
{
    DatasetConfig dc;
    dc.train_size = 4000;
    const auto s = make_splits(dc, 0.0, {0.0, true}, 5);
    std::vector<std::size_t> counts(dc.classes, 0);
    for (auto l : s.train.labels) ++counts[l];
    for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / 4000.0 - 0.25) < 0.03);
    const double agree = 1.0 - static_cast<double>(std::count(s.flipped.begin(), s.flipped.end(), 1)) / 4000.0;
    CHECK(std::abs(agree - 0.25) < 0.03);
}

TEST_CASE("CSV and IDX loaders")
{
    const auto dir = temp_dir("loaders");
    {
        std::ofstream csv(dir / "data.csv");
        csv << "a,b,label\n0.5,1.5,0\n-1,2,1\n3,4,2\n";
    }
    const auto d = load_csv((dir / "data.csv").string());
    CHECK(d.size() == 3);
    CHECK(d.dim == 2);
    CHECK(d.classes == 3);
    CHECK(d.features[1] == 1.5f);
    CHECK(d.labels[2] == 2);
    CHECK(code_of([&] { load_csv((dir / "missing.csv").string()); }) == ErrorCode::DatasetLoad);
    {
        std::ofstream bad(dir / "bad.csv");
        bad << "1,2,0\n1,0\n";
    }
    CHECK(code_of([&] { load_csv((dir / "bad.csv").string()); }) == ErrorCode::DatasetLoad);

    auto be32 = [](std::ofstream& o, std::uint32_t v) {
        const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
        o.write(b, 4);
    };
    {
        std::ofstream img(dir / "img.idx", std::ios::binary);
        be32(img, 0x00000803);
        be32(img, 2);
        be32(img, 2);
        be32(img, 2);
        const unsigned char px[8] = {0, 255, 51, 102, 255, 255, 0, 0};
        img.write(reinterpret_cast<const char*>(px), 8);
        std::ofstream lab(dir / "lab.idx", std::ios::binary);
        be32(lab, 0x00000801);
        be32(lab, 2);
        const char l[2] = {3, 7};
        lab.write(l, 2);
    }
    std::mt19937_64 rng(0);
    const auto idx = load_idx((dir / "img.idx").string(), (dir / "lab.idx").string(), 0, rng);
    CHECK(idx.size() == 2);
    CHECK(idx.dim == 4);
    CHECK(idx.features[1] == doctest::Approx(1.0));
    CHECK(idx.features[2] == doctest::Approx(0.2));
    CHECK(idx.labels[1] == 7);
    CHECK(code_of([&] { load_idx((dir / "lab.idx").string(), (dir / "lab.idx").string(), 0, rng); }) ==
          ErrorCode::DatasetLoad);
}

TEST_CASE("training is deterministic down to the trace bytes")
{
    auto cfg = small_softmax(3);
    cfg.label_noise = 0.1;
    std::ostringstream t1, t2, a1, a2;
    const auto r1 = train(cfg, {&t1, &a1, true});
    const auto r2 = train(cfg, {&t2, &a2, true});
    CHECK(t1.str() == t2.str());
    CHECK(a1.str() == a2.str());
    CHECK(to_json(r1.report).dump() == to_json(r2.report).dump());
    cfg.seed = 4;
    std::ostringstream t3;
    train(cfg, {&t3, nullptr, false});
    CHECK(t3.str() != t1.str());
}

TEST_CASE("ingesting the trainer's trace reproduces its series and scores")
{
    auto cfg = small_softmax(5);
    std::ostringstream trace, rows;
    const auto r = train(cfg, {&trace, &rows, true});
    std::ostringstream ingest_rows;
    IngestOptions opts;
    opts.alignment_out = &ingest_rows;
    std::istringstream in(trace.str());
    const auto ingested = ingest_stream(in, opts);
    CHECK(ingest_rows.str() == rows.str());
    REQUIRE(ingested.series.epochs.size() == r.series.epochs.size());
    for (std::size_t i = 0; i < r.series.epochs.size(); ++i) {
        CHECK(to_json(ingested.series.epochs[i]).dump() == to_json(r.series.epochs[i]).dump());
    }
    CHECK(ingested.header.bias_present());
    CHECK(ingested.header.steps_per_epoch == 9);
}

TEST_CASE("projected training scores match projected ingestion of the raw trace")
{
    auto cfg = small_softmax(13);
    cfg.projection = {true, 3, 9};
    std::ostringstream trace, rows;
    const auto r = train(cfg, {&trace, &rows, true});
    std::istringstream in(trace.str());
    const auto raw = read_trace(in);
    CHECK(raw.header.dim == 5);
    IngestOptions opts;
    opts.projection = cfg.projection;
    std::ostringstream ingest_rows;
    opts.alignment_out = &ingest_rows;
    std::istringstream in2(trace.str());
    ingest_stream(in2, opts);
    CHECK(ingest_rows.str() == rows.str());
    CHECK(std::any_of(r.report.notes.begin(), r.report.notes.end(),
                      [](const std::string& n) { return n.find("projecting") != std::string::npos; }));
    cfg.projection.dim = 6;
    CHECK(code_of([&] { train(cfg); }) == ErrorCode::ConfigError);
}

TEST_CASE("plain SGD softmax updates are recoverable from the trace")
{
    auto cfg = small_softmax(6);
    cfg.epochs = 2;
    std::ostringstream trace;
    train(cfg, {&trace, nullptr, false});
    std::istringstream in(trace.str());
    const auto t = read_trace(in);
    const std::size_t c = t.header.classes;
    const std::size_t d = t.header.dim;
    double worst = 0.0;
    for (std::size_t s = 0; s + 1 < t.steps.size(); ++s) {
        const auto& rec = t.steps[s];
        const auto& w = rec.head->weights;
        const std::size_t m = rec.batch.size();
        std::vector<double> expected(w.begin(), w.end());
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                const double a = (rec.batch.labels[i] == k ? 1.0 : 0.0) - rec.batch.probs[i * c + k];
                for (std::size_t j = 0; j < d; ++j) {
                    expected[k * d + j] += cfg.optimizer.lr / static_cast<double>(m) * a *
                                           rec.batch.latents[i * d + j];
                }
            }
        }
        const auto& next = t.steps[s + 1].head->weights;
        for (std::size_t q = 0; q < expected.size(); ++q) {
            worst = std::max(worst, std::abs(expected[q] - next[q]) / std::max(1.0, std::abs(expected[q])));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("label-wave series equals a direct recomputation")
{
    auto cfg = small_softmax(7);
    cfg.label_noise = 0.2;
    const auto r = train(cfg);
    const auto* lw = r.report.decision(StopCriterion::LabelWave);
    REQUIRE(lw);
    std::optional<std::size_t> best;
    double best_v = 2.0;
    for (std::size_t e = 1; e < r.train_predictions.size(); ++e) {
        std::size_t changed = 0;
        for (std::size_t i = 0; i < r.train_predictions[e].size(); ++i) {
            changed += r.train_predictions[e][i] != r.train_predictions[e - 1][i];
        }
        const double f = static_cast<double>(changed) / static_cast<double>(r.train_predictions[e].size());
        CHECK(*r.report.epochs[e].labelwave_change == doctest::Approx(f));
        if (e >= 1 && f < best_v) {
            best_v = f;
            best = e;
        }
    }
    CHECK_FALSE(r.report.epochs[0].labelwave_change);
    CHECK(lw->selected_epoch == *best);
}

TEST_CASE("a separable two-class problem drives mean alignment positive")
{
    TrainerConfig cfg;
    cfg.dataset.classes = 2;
    cfg.dataset.dim = 4;
    cfg.dataset.separation = 8.0;
    cfg.dataset.train_size = 200;
    cfg.epochs = 200;
    cfg.optimizer.lr = 0.05;
    cfg.seed = 2;
    const auto r = train(cfg, {nullptr, nullptr, false});
    CHECK(r.report.epochs.back().train_accuracy == doctest::Approx(1.0));
    CHECK(r.report.epochs.back().m1 > 0.5);
}

TEST_CASE("report JSON round trip")
{
    auto cfg = small_softmax(8);
    cfg.label_noise = 0.2;
    const auto r = train(cfg);
    REQUIRE(r.report.mislabel);
    const auto back = run_report_from_json(to_json(r.report));
    CHECK(to_json(back).dump() == to_json(r.report).dump());
}

TEST_CASE("histogram conserves counts and clamps outliers")
{
    const std::vector<double> v = {-2.0, -1.0, -0.5, 0.0, 0.49, 0.5, 1.0, 3.0, NAN};
    const auto h = histogram(v, 4);
    CHECK(h.total() == 8);
    CHECK(h.counts == std::vector<std::uint64_t>{2, 1, 2, 3});
    CHECK_THROWS_AS(histogram(v, 0), Error);
    CHECK_THROWS_AS(histogram(v, 4, 1.0, 1.0), Error);

    const auto n = min_max_normalize({2.0, std::nullopt, 4.0, 3.0});
    CHECK(*n[0] == 0.0);
    CHECK_FALSE(n[1]);
    CHECK(*n[2] == 1.0);
    CHECK(*n[3] == 0.5);
    CHECK(*min_max_normalize({7.0, 7.0})[1] == 0.5);
}

TEST_CASE("plots: empty report and bit-stable output")
{
    const auto empty_dir = temp_dir("plots_empty");
    const auto files = emit_plots(RunReport{}, {}, nullptr, empty_dir);
    REQUIRE(files.size() == 1);
    CHECK(slurp(files[0]) == series_csv(RunReport{}));
    CHECK(series_csv(RunReport{}).find('\n') == series_csv(RunReport{}).size() - 1);

    auto cfg = small_softmax(9);
    cfg.label_noise = 0.2;
    const auto r = train(cfg);
    const auto d1 = temp_dir("plots_a");
    const auto d2 = temp_dir("plots_b");
    const auto f1 = emit_plots(r.report, r.scores, &r.data.flipped, d1);
    const auto f2 = emit_plots(r.report, r.scores, &r.data.flipped, d2);
    REQUIRE(f1.size() == f2.size());
    CHECK(f1.size() > 2);
    for (std::size_t i = 0; i < f1.size(); ++i) {
        CHECK(f1[i].filename() == f2[i].filename());
        CHECK(slurp(f1[i]) == slurp(f2[i]));
    }
    const auto csv = slurp(d1 / "series.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(cfg.epochs + 1));
}

TEST_CASE("ranking: flipped samples score lower on a noisy run")
{
    auto cfg = small_softmax(10);
    cfg.label_noise = 0.3;
    cfg.epochs = 20;
    const auto r = train(cfg);
    const std::uint32_t last = static_cast<std::uint32_t>(cfg.epochs - 1);
    const auto rank = rank_samples(r.scores, last, &r.data.flipped);
    REQUIRE(rank.precision_at_k);
    CHECK(*rank.precision_at_k > *rank.chance_rate);
    REQUIRE(r.report.mislabel);
    CHECK(*r.report.mislabel->mean_gamma_flipped < *r.report.mislabel->mean_gamma_clean);
    for (std::size_t i = 1; i < rank.ranking.size(); ++i) {
        CHECK(rank.ranking[i - 1].gamma <= rank.ranking[i].gamma);
    }

    const auto plain = rank_samples(r.scores, last, nullptr);
    CHECK_FALSE(plain.precision_at_k);
    CHECK(to_json(plain).at("precision_at_k") == "N/A");
    double bottom = 0.0;
    const std::size_t k = 20;
    for (std::size_t i = 0; i < k; ++i) bottom += plain.ranking[i].gamma;
    CHECK(bottom / k < plain.mean_gamma);
    const auto zero_k = rank_samples(r.scores, last, &r.data.flipped, std::size_t{0});
    CHECK_FALSE(zero_k.precision_at_k);
    CHECK(code_of([&] { rank_samples(r.scores, 999, nullptr); }) == ErrorCode::TraceMissing);
}

TEST_CASE("gradient norm is not a proxy for alignment on a clean run")
{
    TrainerConfig cfg;
    cfg.model.hidden_dim = 64;
    cfg.optimizer.lr = 0.01;
    cfg.optimizer.momentum = 0.9;
    cfg.epochs = 20;
    cfg.dataset.train_size = 600;
    cfg.seed = 1;
    const auto r = train(cfg);
    const auto cmp = compare_gradient_norm(r.scores);
    CHECK(cmp.epochs.size() == cfg.epochs);
    CHECK(cmp.high_correlation_fraction <= 0.2);
    CHECK_FALSE(cmp.persistently_high);
    CHECK(code_of([] { compare_gradient_norm({}); }) == ErrorCode::TraceMissing);
}

TEST_CASE("fine-tune selection does not trail the last epoch")
{
    TrainerConfig cfg;
    cfg.model.hidden_dim = 64;
    cfg.optimizer.lr = 0.003;
    cfg.optimizer.momentum = 0.9;
    cfg.epochs = 40;
    cfg.pretrain_epochs = 20;
    cfg.pretrain_size = 1000;
    cfg.dataset.shift = 6.0;
    cfg.dataset.noise = 0.2;
    cfg.mode = StopMode::Finetune;
    cfg.seed = 1;
    const auto r = train(cfg, {nullptr, nullptr, false});
    const auto* d = r.report.decision(StopCriterion::GwaFinetune);
    REQUIRE(d);
    CHECK(r.report.epochs[d->selected_index].test_accuracy >= r.report.epochs.back().test_accuracy);
}

TEST_CASE("run files round trip")
{
    const auto dir = temp_dir("run_files");
    RunConfig rc;
    rc.trainer = small_softmax(11);
    rc.trainer.label_noise = 0.2;
    const auto result = run_training(rc, dir);
    for (const char* f : {kTraceFile, kEpochsFile, kAlignmentFile, kDecisionFile, kFlipsFile, kReportFile}) {
        CHECK(fs::exists(dir / f));
    }
    std::istringstream epochs_in(slurp(dir / kEpochsFile));
    const auto epochs = read_epochs_jsonl(epochs_in);
    REQUIRE(epochs.size() == rc.trainer.epochs);
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        CHECK(to_json(epochs[i]).dump() == to_json(result.series.epochs[i]).dump());
    }
    const auto decision = stop_decision_from_json(nlohmann::json::parse(slurp(dir / kDecisionFile)));
    CHECK(decision.selected_epoch == result.report.decision(StopCriterion::GwaScratch)->selected_epoch);
    CHECK(flips_from_json(nlohmann::json::parse(slurp(dir / kFlipsFile))) == result.data.flipped);

    const auto doc = decision_document(decide(epochs, {}), epochs);
    CHECK(doc.at("epochs") == epochs.size());
    CHECK(doc.at("gwa").size() == epochs.size());

    const auto out = temp_dir("run_files_ingest");
    std::ifstream trace(dir / kTraceFile, std::ios::binary);
    const auto run = run_ingest(trace, {}, true, {}, out);
    REQUIRE(run.decision);
    CHECK(run.decision->selected_epoch == decision.selected_epoch);
    CHECK(slurp(out / kEpochsFile) == slurp(dir / kEpochsFile));
    CHECK(slurp(out / kAlignmentFile) == slurp(dir / kAlignmentFile));

    std::istringstream bad("{\"epoch\": 0}\nnot json\n");
    CHECK(code_of([&] { read_epochs_jsonl(bad); }) == ErrorCode::ConfigError);
}

TEST_CASE("non-finite loss reports the epoch")
{
    auto cfg = small_softmax(12);
    cfg.optimizer.lr = 1e307;
    try {
        train(cfg, {nullptr, nullptr, false});
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteLoss);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

}
