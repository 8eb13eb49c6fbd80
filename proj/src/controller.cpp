#include "gwa/controller.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <cmath>

namespace gwa {

std::vector<std::optional<double>> GwaSeries::gwa_values() const
{
    std::vector<std::optional<double>> out;
    out.reserve(epochs.size());
    for (const auto& e : epochs) {
        out.push_back(e.eligible() ? e.gwa : std::nullopt);
    }
    return out;
}

const char* to_string(StopCriterion c) noexcept
{
    switch (c) {
    case StopCriterion::GwaScratch: return "gwa_scratch";
    case StopCriterion::GwaFinetune: return "gwa_finetune";
    case StopCriterion::LabelWave: return "labelwave";
    case StopCriterion::ValAccuracy: return "val_accuracy";
    }
    return "unknown";
}

nlohmann::json to_json(const StopDecision& d)
{
    return {{"selected_epoch", d.selected_epoch},
            {"selected_index", d.selected_index},
            {"criterion", to_string(d.criterion)},
            {"warmup_epochs", d.warmup_epochs},
            {"rationale", d.rationale}};
}

StopCriterion stop_criterion_from_string(const std::string& name)
{
    for (auto c : {StopCriterion::GwaScratch, StopCriterion::GwaFinetune, StopCriterion::LabelWave,
                   StopCriterion::ValAccuracy}) {
        if (name == to_string(c)) {
            return c;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown stop criterion '" + name + "'");
}

StopDecision stop_decision_from_json(const nlohmann::json& j)
{
    try {
        StopDecision d;
        d.selected_epoch = j.at("selected_epoch").get<std::uint32_t>();
        d.selected_index = j.value("selected_index", std::size_t{d.selected_epoch});
        d.criterion = stop_criterion_from_string(j.at("criterion").get<std::string>());
        d.warmup_epochs = j.value("warmup_epochs", std::size_t{0});
        d.rationale = j.value("rationale", nlohmann::json::object());
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed stop decision: ") + e.what());
    }
}

std::size_t warmup_epoch_count(double warmup_fraction, std::size_t epochs)
{
    if (!(warmup_fraction >= 0.0) || !(warmup_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "warmup_fraction must lie in [0, 1)");
    }
    // Tolerance keeps e.g. 0.1 * 30 from rounding up to 4.
    const double raw = warmup_fraction * static_cast<double>(epochs);
    return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

namespace {

std::optional<std::size_t> argmax_from(const std::vector<std::optional<double>>& values,
                                       std::size_t first)
{
    std::optional<std::size_t> best;
    for (std::size_t i = first; i < values.size(); ++i) {
        if (values[i] && (!best || *values[i] > *values[*best])) {
            best = i;
        }
    }
    return best;
}

} // namespace

StopDecision select_scratch(const GwaSeries& series, double warmup_fraction)
{
    if (series.epochs.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty GWA series");
    }
    const std::size_t warmup = warmup_epoch_count(warmup_fraction, series.epochs.size());
    const auto values = series.gwa_values();
    const auto best = argmax_from(values, warmup);
    if (!best) {
        throw Error(ErrorCode::AllEpochsExcluded,
                    "no eligible epoch after " + std::to_string(warmup) + " warm-up epochs");
    }
    StopDecision d;
    d.criterion = StopCriterion::GwaScratch;
    d.warmup_epochs = warmup;
    d.selected_index = *best;
    d.selected_epoch = series.epochs[*best].epoch;
    d.rationale["warmup_fraction"] = warmup_fraction;
    d.rationale["selected_gwa"] = *values[*best];
    std::size_t skipped = 0;
    for (std::size_t i = warmup; i < values.size(); ++i) {
        skipped += values[i] ? 0 : 1;
    }
    d.rationale["skipped_epochs"] = skipped;
    return d;
}

StopDecision select_finetune(const GwaSeries& series, std::size_t min_window, double min_rise,
                             double fallback_warmup_fraction)
{
    if (min_window == 0) {
        throw Error(ErrorCode::InvalidArgument, "min_window must be positive");
    }
    if (series.epochs.size() < 2 * min_window) {
        throw Error(ErrorCode::InvalidArgument,
                    "fine-tune rule needs at least 2*min_window epochs");
    }
    const auto all = series.gwa_values();
    // Ineligible epochs are dropped before looking for the dip.
    std::vector<std::size_t> index;
    std::vector<double> gwa;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i]) {
            index.push_back(i);
            gwa.push_back(*all[i]);
        }
    }

    std::optional<std::size_t> minimum;
    for (std::size_t i = min_window; i + min_window < gwa.size() && !minimum; ++i) {
        bool is_min = true;
        double rise = -INFINITY;
        for (std::size_t w = 1; w <= min_window; ++w) {
            is_min = is_min && gwa[i] <= gwa[i - w] && gwa[i] <= gwa[i + w];
            rise = std::max(rise, gwa[i + w] - gwa[i]);
        }
        if (is_min && rise > min_rise) {
            minimum = i;
        }
    }

    if (!minimum) {
        StopDecision d = select_scratch(series, fallback_warmup_fraction);
        d.criterion = StopCriterion::GwaFinetune;
        d.rationale["fallback"] = "no initial minimum; scratch rule applied";
        return d;
    }

    std::size_t best = *minimum + 1;
    for (std::size_t i = best + 1; i < gwa.size(); ++i) {
        if (gwa[i] > gwa[best]) {
            best = i;
        }
    }
    StopDecision d;
    d.criterion = StopCriterion::GwaFinetune;
    d.warmup_epochs = 0;
    d.selected_index = index[best];
    d.selected_epoch = series.epochs[index[best]].epoch;
    d.rationale["minimum_epoch"] = series.epochs[index[*minimum]].epoch;
    d.rationale["minimum_gwa"] = gwa[*minimum];
    d.rationale["selected_gwa"] = gwa[best];
    d.rationale["min_window"] = min_window;
    d.rationale["min_rise"] = min_rise;
    return d;
}

StopDecision select_by_metric(const std::vector<double>& metric, StopCriterion criterion,
                              double warmup_fraction)
{
    if (metric.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty metric series");
    }
    const std::size_t warmup = warmup_epoch_count(warmup_fraction, metric.size());
    std::vector<std::optional<double>> values(metric.begin(), metric.end());
    const auto best = argmax_from(values, warmup);
    if (!best) {
        throw Error(ErrorCode::AllEpochsExcluded, "no epoch after warm-up");
    }
    StopDecision d;
    d.criterion = criterion;
    d.warmup_epochs = warmup;
    d.selected_index = *best;
    d.selected_epoch = static_cast<std::uint32_t>(*best);
    d.rationale["selected_value"] = metric[*best];
    return d;
}

PredictionChangeSeries prediction_changes(
    const std::vector<std::vector<std::uint32_t>>& predictions_by_epoch)
{
    PredictionChangeSeries out;
    out.change_fraction.reserve(predictions_by_epoch.size());
    for (std::size_t e = 0; e < predictions_by_epoch.size(); ++e) {
        const auto& cur = predictions_by_epoch[e];
        if (cur.size() != predictions_by_epoch.front().size()) {
            throw Error(ErrorCode::LengthMismatch,
                        "epoch " + std::to_string(e) + " has " + std::to_string(cur.size()) +
                            " predictions, expected " +
                            std::to_string(predictions_by_epoch.front().size()));
        }
        if (e == 0 || cur.empty()) {
            out.change_fraction.emplace_back(std::nullopt);
            continue;
        }
        const auto& prev = predictions_by_epoch[e - 1];
        std::size_t changed = 0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            changed += cur[i] != prev[i] ? 1 : 0;
        }
        out.change_fraction.emplace_back(static_cast<double>(changed) /
                                         static_cast<double>(cur.size()));
    }
    return out;
}

LabelWaveResult labelwave(const std::vector<std::vector<std::uint32_t>>& predictions_by_epoch,
                          double warmup_fraction)
{
    if (predictions_by_epoch.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "LabelWave needs at least two epochs");
    }
    LabelWaveResult r;
    r.changes = prediction_changes(predictions_by_epoch);
    const auto& f = r.changes.change_fraction;
    const std::size_t warmup =
        std::max<std::size_t>(1, warmup_epoch_count(warmup_fraction, f.size()));
    std::optional<std::size_t> best;
    for (std::size_t i = warmup; i < f.size(); ++i) {
        if (f[i] && (!best || *f[i] < *f[*best])) {
            best = i;
        }
    }
    if (!best) {
        throw Error(ErrorCode::AllEpochsExcluded, "no epoch after warm-up");
    }
    r.decision.criterion = StopCriterion::LabelWave;
    r.decision.warmup_epochs = warmup;
    r.decision.selected_index = *best;
    r.decision.selected_epoch = static_cast<std::uint32_t>(*best);
    r.decision.rationale["selected_change_fraction"] = *f[*best];
    r.decision.rationale["note"] = "approximation: minimal prediction change after warm-up";
    return r;
}

PatienceStopper::PatienceStopper(std::size_t warmup_epochs, std::size_t patience)
    : warmup_(warmup_epochs), patience_(patience)
{
}

bool PatienceStopper::observe(const EpochSummary& summary)
{
    if (stopped_) {
        return true;
    }
    const std::size_t position = seen_++;
    if (position < warmup_ || !summary.eligible()) {
        return false;
    }
    if (!best_ || *summary.gwa > *best_) {
        best_ = summary.gwa;
        best_epoch_ = summary.epoch;
        since_best_ = 0;
        return false;
    }
    if (++since_best_ >= patience_) {
        stopped_ = true;
    }
    return stopped_;
}

} // namespace gwa
