#include "gwa/error.hpp"
#include "gwa/ingest.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace gwa;

namespace {

struct Synthetic {
    std::string bytes;
    std::vector<std::vector<double>> gammas_by_epoch; // oracle scores
};

// Random trace with C=3, D=4; weights change every `change_every` steps.
Synthetic synthetic_trace(std::uint64_t seed, std::uint32_t epochs, std::uint32_t steps,
                          std::uint32_t batch, std::uint32_t change_every, bool bias,
                          bool terminal)
{
    const std::size_t c = 3, d = 4;
    std::mt19937_64 rng(seed);
    TraceHeader h;
    h.dim = d;
    h.classes = c;
    h.dataset_size = steps * batch;
    h.batch_size = batch;
    h.steps_per_epoch = steps;
    h.flags = bias ? kTraceBiasPresent : 0;
    std::ostringstream out;
    TraceWriter writer(out, h);
    Synthetic s;
    auto weights = oracle::random_floats(c * d, rng);
    std::vector<float> b = bias ? oracle::random_floats(c, rng) : std::vector<float>{};
    std::uniform_int_distribution<std::uint32_t> label(0, c - 1);
    std::uint32_t global = 0;
    for (std::uint32_t e = 0; e < epochs; ++e) {
        s.gammas_by_epoch.emplace_back();
        for (std::uint32_t k = 0; k < steps; ++k, ++global) {
            if (global % change_every == 0 && global > 0) {
                weights = oracle::random_floats(c * d, rng);
            }
            std::vector<std::uint64_t> ids;
            std::vector<float> latents, probs;
            std::vector<std::uint32_t> labels;
            for (std::uint32_t i = 0; i < batch; ++i) {
                ids.push_back(k * batch + i);
                const auto z = oracle::random_floats(d, rng);
                latents.insert(latents.end(), z.begin(), z.end());
                const auto logits = oracle::random_floats(c, rng, -2, 2);
                const auto p = oracle::softmax(oracle::widen(logits));
                std::vector<float> pf(p.begin(), p.end());
                probs.insert(probs.end(), pf.begin(), pf.end());
                labels.push_back(label(rng));
                std::vector<double> a(c);
                for (std::size_t j = 0; j < c; ++j) a[j] = (j == labels.back() ? 1.0 : 0.0) - pf[j];
                s.gammas_by_epoch.back().push_back(
                    oracle::cosine(oracle::outer(a, oracle::widen(z)), oracle::widen(weights)));
            }
            writer.write_step(e, k, weights, b, ids, latents, probs, labels);
        }
    }
    if (terminal) {
        writer.write_step(epochs, 0, weights, b, {}, {}, {}, {});
    }
    s.bytes = out.str();
    return s;
}

} // namespace

TEST_SUITE("ingest") {

TEST_CASE("header-only trace yields an empty series")
{
    TraceHeader h;
    h.dim = 2;
    h.classes = 2;
    h.batch_size = 1;
    h.steps_per_epoch = 1;
    std::ostringstream out;
    TraceWriter w(out, h);
    std::istringstream in(out.str());
    const auto r = ingest_stream(in);
    CHECK(r.series.epochs.empty());
    CHECK(r.samples == 0);
    CHECK(r.steps == 0);
    CHECK(r.header.dim == 2);
}

TEST_CASE("hand-built two-sample step matches the explicit oracle")
{
    TraceHeader h;
    h.dim = 2;
    h.classes = 2;
    h.dataset_size = 2;
    h.batch_size = 2;
    h.steps_per_epoch = 1;
    std::ostringstream out;
    TraceWriter w(out, h);
    const std::vector<float> weights = {1, 0, 0, 1};
    const std::vector<std::uint64_t> ids = {10, 11};
    const std::vector<float> latents = {1, 0, 0, 1};
    const std::vector<float> probs = {0.5f, 0.5f, 0.5f, 0.5f};
    const std::vector<std::uint32_t> labels = {0, 0};
    w.write_step(0, 0, weights, {}, ids, latents, probs, labels);

    IngestOptions opts;
    opts.retain_scores = true;
    opts.gwa.min_samples = 2;
    std::istringstream in(out.str());
    const auto r = ingest_stream(in, opts);
    REQUIRE(r.scores.size() == 2);
    // a = (0.5, -0.5); G1 = a (1,0)^T, G2 = a (0,1)^T; ||W||_F = sqrt 2.
    CHECK(*r.scores[0].gamma == doctest::Approx(0.5));
    CHECK(*r.scores[1].gamma == doctest::Approx(-0.5));
    CHECK(r.scores[0].grad_norm == doctest::Approx(std::sqrt(0.5)));
    REQUIRE(r.series.epochs.size() == 1);
    const auto& e = r.series.epochs[0];
    CHECK(e.m1 == doctest::Approx(0.0));
    CHECK(e.m2 == doctest::Approx(0.25));
    // Two-point distribution: kurtosis -2, denominator negative.
    CHECK(*e.excess_kurtosis == doctest::Approx(-2.0));
    CHECK((e.flags & kFlagUnstable) != 0);
    CHECK_FALSE(e.eligible());
}

TEST_CASE("streaming epoch moments match the oracle scores")
{
    const auto syn = synthetic_trace(11, 3, 8, 16, 5, false, false);
    IngestOptions opts;
    opts.retain_scores = true;
    std::istringstream in(syn.bytes);
    const auto r = ingest_stream(in, opts);
    REQUIRE(r.series.epochs.size() == 3);
    CHECK(r.samples == 3 * 8 * 16);
    CHECK(r.steps == 24);
    CHECK(r.series.total_steps == 24);
    for (std::size_t e = 0; e < 3; ++e) {
        const auto m = oracle::two_pass(syn.gammas_by_epoch[e]);
        const auto& s = r.series.epochs[e];
        CHECK(s.epoch == e);
        CHECK(s.count == 128);
        // Float32 weights/latents: the oracle differs only by rounding of
        // float inputs, which both routes share.
        CHECK(oracle::moment_close(s.m1, m.m1, m.m2, 1, 1e-9));
        CHECK(oracle::moment_close(s.m2, m.m2, m.m2, 2, 1e-9));
        CHECK(oracle::moment_close(s.m3, m.m3, m.m2, 3, 1e-9));
        CHECK(oracle::moment_close(s.m4, m.m4, m.m2, 4, 1e-9));
        const double k = m.m4 / (m.m2 * m.m2) - 3.0;
        CHECK(*s.gwa == doctest::Approx(m.m1 / (k + 1.2)).epsilon(1e-8));
    }
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        CHECK(std::abs(*r.scores[i].gamma - syn.gammas_by_epoch[i / 128][i % 128]) <= 1e-9);
    }
}

TEST_CASE("ingest output is byte-deterministic")
{
    const auto syn = synthetic_trace(12, 2, 4, 8, 3, true, true);
    auto run = [&] {
        std::ostringstream rows;
        IngestOptions opts;
        opts.alignment_out = &rows;
        opts.alignment.include_bias = true;
        std::istringstream in(syn.bytes);
        const auto r = ingest_stream(in, opts);
        std::string summaries;
        for (const auto& e : r.series.epochs) summaries += to_json(e).dump() + "\n";
        return rows.str() + summaries;
    };
    CHECK(run() == run());
}

TEST_CASE("offline recomputation equals online when weights never change")
{
    const auto syn = synthetic_trace(13, 3, 6, 10, 1000000, false, true);
    std::istringstream in(syn.bytes);
    const auto online = ingest_stream(in);
    std::istringstream in2(syn.bytes);
    const auto trace = read_trace(in2);
    for (auto where : {OfflineReference::EpochStart, OfflineReference::Midpoint,
                       OfflineReference::EpochEnd}) {
        const auto offline = offline_series(trace, where);
        REQUIRE(offline.size() == online.series.epochs.size());
        for (std::size_t i = 0; i < offline.size(); ++i) {
            CHECK(std::abs(*offline[i].gwa - *online.series.epochs[i].gwa) <= 1e-9);
            CHECK(std::abs(offline[i].m1 - online.series.epochs[i].m1) <= 1e-9);
        }
    }
}

TEST_CASE("reference snapshots come from the expected records")
{
    const auto syn = synthetic_trace(14, 2, 4, 2, 1, false, true);
    std::istringstream in(syn.bytes);
    const auto trace = read_trace(in);
    // Steps: epoch 0 -> records 0..3, epoch 1 -> 4..7, terminal -> 8.
    CHECK(reference_snapshot(trace, 0, OfflineReference::EpochStart)->weights ==
          trace.steps[0].head->weights);
    CHECK(reference_snapshot(trace, 0, OfflineReference::Midpoint)->weights ==
          trace.steps[2].head->weights);
    CHECK(reference_snapshot(trace, 0, OfflineReference::EpochEnd)->weights ==
          trace.steps[4].head->weights);
    CHECK(reference_snapshot(trace, 1, OfflineReference::EpochEnd)->weights ==
          trace.steps[8].head->weights);
    CHECK_FALSE(reference_snapshot(trace, 5, OfflineReference::EpochStart));

    const auto no_terminal = synthetic_trace(14, 2, 4, 2, 1, false, false);
    std::istringstream in2(no_terminal.bytes);
    const auto t2 = read_trace(in2);
    CHECK_FALSE(reference_snapshot(t2, 1, OfflineReference::EpochEnd));
    CHECK(offline_series(t2, OfflineReference::EpochEnd).size() == 1);
}

TEST_CASE("the terminal weights-only record adds no epoch")
{
    const auto syn = synthetic_trace(15, 2, 3, 4, 2, false, true);
    std::istringstream in(syn.bytes);
    const auto r = ingest_stream(in);
    CHECK(r.series.epochs.size() == 2);
    CHECK(r.steps == 7);
}

TEST_CASE("identity projection changes nothing; JL projection keeps the shape")
{
    const auto syn = synthetic_trace(16, 2, 4, 16, 2, false, false);
    std::istringstream a(syn.bytes);
    const auto plain = ingest_stream(a);
    IngestOptions opts;
    opts.projection.enabled = true;
    opts.projection.dim = 4;
    opts.projection.seed = 3;
    std::istringstream b(syn.bytes);
    const auto projected = ingest_stream(b, opts);
    REQUIRE(projected.series.epochs.size() == plain.series.epochs.size());
    CHECK(projected.samples == plain.samples);

    opts.projection.dim = 8;
    std::istringstream c(syn.bytes);
    CHECK_THROWS_AS(ingest_stream(c, opts), Error);
}

TEST_CASE("offline recompute rejects mismatched references")
{
    const auto syn = synthetic_trace(17, 1, 2, 2, 1, false, false);
    std::istringstream in(syn.bytes);
    const auto trace = read_trace(in);
    const auto wrong = HeadSnapshot::make(2, 2, {1, 0, 0, 1});
    CHECK_THROWS_AS(offline_recompute(trace, 0, wrong), Error);
}

TEST_CASE("corrupted traces propagate reader errors")
{
    auto syn = synthetic_trace(18, 1, 2, 2, 1, false, false);
    std::istringstream in(syn.bytes.substr(0, syn.bytes.size() - 3));
    CHECK_THROWS_AS(ingest_stream(in), TruncatedRecordError);
}

}
