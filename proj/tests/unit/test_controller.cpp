#include "gwa/controller.hpp"
#include "gwa/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gwa;

namespace {

GwaSeries series_of(const std::vector<std::optional<double>>& gwa)
{
    GwaSeries s;
    for (std::size_t i = 0; i < gwa.size(); ++i) {
        EpochSummary e;
        e.epoch = static_cast<std::uint32_t>(i);
        e.count = 100;
        e.gwa = gwa[i];
        if (!gwa[i]) e.flags = kFlagUnstable;
        s.epochs.push_back(e);
    }
    return s;
}

GwaSeries series_of(const std::vector<double>& gwa)
{
    return series_of(std::vector<std::optional<double>>(gwa.begin(), gwa.end()));
}

} // namespace

TEST_SUITE("controller") {

TEST_CASE("warm-up cutoff rounds up to whole epochs")
{
    CHECK(warmup_epoch_count(0.10, 4) == 1);
    CHECK(warmup_epoch_count(0.10, 30) == 3);
    CHECK(warmup_epoch_count(0.10, 100) == 10);
    CHECK(warmup_epoch_count(0.25, 4) == 1);
    CHECK(warmup_epoch_count(0.0, 10) == 0);
    CHECK_THROWS_AS(warmup_epoch_count(1.0, 10), Error);
}

TEST_CASE("scratch rule examples")
{
    CHECK(select_scratch(series_of(std::vector<double>{0.1, 0.5, 0.4, 0.3}), 0.10).selected_epoch == 1);
    const auto d = select_scratch(series_of(std::vector<double>{0.9, 0.1, 0.2, 0.2}), 0.25);
    CHECK(d.selected_epoch == 2);
    CHECK(d.warmup_epochs == 1);
    CHECK(d.criterion == StopCriterion::GwaScratch);
}

TEST_CASE("scratch rule skips ineligible epochs and fails when none remain")
{
    CHECK(select_scratch(series_of({0.1, std::nullopt, 0.4, 0.3}), 0.0).selected_epoch == 2);
    try {
        select_scratch(series_of({0.9, std::nullopt, std::nullopt}), 0.34);
        FAIL("expected AllEpochsExcluded");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllEpochsExcluded);
    }
    auto s = series_of(std::vector<double>{0.1, 0.9, 0.2});
    s.epochs[1].flags = kFlagDegenerate;
    CHECK(select_scratch(s, 0.0).selected_epoch == 2);
}

TEST_CASE("scratch rule properties")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> g(2 + t % 40);
        for (auto& v : g) v = u(rng);
        const auto d = select_scratch(series_of(g), 0.10);
        CHECK(d.selected_epoch >= d.warmup_epochs);
        CHECK(d.selected_index < g.size());

        // Invariant under strictly increasing transforms.
        std::vector<double> tg = g;
        for (auto& v : tg) v = std::exp(3.0 * v) - 7.0;
        CHECK(select_scratch(series_of(tg), 0.10).selected_epoch == d.selected_epoch);

        // Deterministic.
        CHECK(select_scratch(series_of(g), 0.10).selected_epoch == d.selected_epoch);

        // Without warm-up a unique global maximum is returned.
        const auto it = std::max_element(g.begin(), g.end());
        CHECK(select_scratch(series_of(g), 0.0).selected_index == static_cast<std::size_t>(it - g.begin()));
    }
}

TEST_CASE("fine-tune rule: dip then peak")
{
    const auto d = select_finetune(series_of(std::vector<double>{0.8, 0.6, 0.5, 0.55, 0.7, 0.65}), 1);
    CHECK(d.selected_epoch == 4);
    CHECK(d.rationale.at("minimum_epoch") == 2);
    CHECK(d.criterion == StopCriterion::GwaFinetune);
}

TEST_CASE("fine-tune rule falls back on monotone series")
{
    const auto d = select_finetune(series_of(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}), 2);
    CHECK(d.selected_epoch == 6);
    CHECK(d.rationale.contains("fallback"));
}

TEST_CASE("fine-tune rule respects min_rise and the window")
{
    // Dip at 2 rises by only 0.05 within one epoch.
    const std::vector<double> g = {0.8, 0.6, 0.5, 0.55, 0.52, 0.9};
    CHECK(select_finetune(series_of(g), 1, 0.0).selected_epoch == 5);
    CHECK(select_finetune(series_of(g), 1, 0.0).rationale.at("minimum_epoch") == 2);
    const auto strict = select_finetune(series_of(g), 1, 0.1);
    // 0.55 - 0.5 is not a rise above 0.1; the dip at 4 (0.52 -> 0.9) is.
    CHECK(strict.rationale.at("minimum_epoch") == 4);
    CHECK(strict.selected_epoch == 5);
    CHECK_THROWS_AS(select_finetune(series_of(std::vector<double>{0.1, 0.2, 0.3}), 2), Error);
}

TEST_CASE("metric selection picks the maximum, earliest tie")
{
    const auto d = select_by_metric({0.5, 0.7, 0.7, 0.6}, StopCriterion::ValAccuracy);
    CHECK(d.selected_epoch == 1);
    CHECK(d.criterion == StopCriterion::ValAccuracy);
}

TEST_CASE("prediction changes and the LabelWave approximation")
{
    const std::vector<std::vector<std::uint32_t>> same = {{0, 1, 2, 3}, {0, 1, 2, 3}};
    CHECK(*prediction_changes(same).change_fraction[1] == 0.0);
    CHECK_FALSE(prediction_changes(same).change_fraction[0].has_value());
    const std::vector<std::vector<std::uint32_t>> flipped = {{0, 1, 2, 3}, {1, 0, 3, 2}};
    CHECK(*prediction_changes(flipped).change_fraction[1] == 1.0);

    const std::vector<std::vector<std::uint32_t>> preds = {
        {0, 0, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}, {1, 1, 1, 0}, {0, 1, 1, 0}, {0, 1, 1, 0}};
    const auto lw = labelwave(preds, 0.10);
    CHECK(lw.decision.selected_epoch == 3);
    CHECK(lw.decision.criterion == StopCriterion::LabelWave);
    CHECK(lw.decision.rationale.at("note").get<std::string>().find("approximation") != std::string::npos);
    for (const auto& f : lw.changes.change_fraction)
        if (f) CHECK((*f >= 0.0 && *f <= 1.0));

    try {
        prediction_changes({{0, 1}, {0}});
        FAIL("expected LengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LengthMismatch);
    }
    CHECK_THROWS_AS(labelwave({{0, 1}}), Error);
}

TEST_CASE("patience stopper")
{
    PatienceStopper p(2, 2);
    const std::vector<double> g = {0.9, 0.8, 0.3, 0.5, 0.4, 0.45, 0.6};
    std::vector<bool> stops;
    for (std::size_t i = 0; i < g.size(); ++i) {
        EpochSummary s;
        s.epoch = static_cast<std::uint32_t>(i);
        s.count = 100;
        s.gwa = g[i];
        stops.push_back(p.observe(s));
    }
    // Best after warm-up is epoch 3; epochs 4 and 5 fail to improve.
    CHECK(p.stopped());
    CHECK(*p.best_epoch() == 3);
    CHECK(stops[5]);
    CHECK_FALSE(stops[4]);
}

TEST_CASE("decision JSON round trip")
{
    const auto d = select_scratch(series_of(std::vector<double>{0.1, 0.5, 0.4, 0.3}), 0.10);
    const auto back = stop_decision_from_json(to_json(d));
    CHECK(back.selected_epoch == d.selected_epoch);
    CHECK(back.criterion == d.criterion);
    CHECK(back.warmup_epochs == d.warmup_epochs);
    for (auto c : {StopCriterion::GwaScratch, StopCriterion::GwaFinetune, StopCriterion::LabelWave,
                   StopCriterion::ValAccuracy})
        CHECK(stop_criterion_from_string(to_string(c)) == c);
}

}
