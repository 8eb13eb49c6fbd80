#include "gwa/harness/analysis.hpp"

#include "gwa/error.hpp"
#include "gwa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gwa::harness {

RankReport rank_samples(std::span<const AlignmentScore> scores, std::uint32_t epoch,
                        const std::vector<std::uint8_t>* flip_mask, std::optional<std::size_t> k)
{
    RankReport r;
    r.epoch = epoch;
    bool seen = false;
    double sum = 0.0;
    for (const auto& s : scores) {
        if (s.epoch != epoch) {
            continue;
        }
        seen = true;
        if (!s.gamma) {
            ++r.excluded;
            continue;
        }
        RankedSample row{s.sample_id, *s.gamma, s.grad_norm, std::nullopt};
        if (flip_mask && s.sample_id < flip_mask->size()) {
            row.flipped = (*flip_mask)[s.sample_id] != 0;
        }
        r.ranking.push_back(row);
        sum += *s.gamma;
    }
    if (!seen) {
        throw Error(ErrorCode::TraceMissing, "no alignment scores for epoch " + std::to_string(epoch));
    }
    std::sort(r.ranking.begin(), r.ranking.end(), [](const RankedSample& a, const RankedSample& b) {
        return a.gamma != b.gamma ? a.gamma < b.gamma : a.sample_id < b.sample_id;
    });
    if (!r.ranking.empty()) {
        r.mean_gamma = sum / static_cast<double>(r.ranking.size());
    }
    if (!flip_mask) {
        return r;
    }
    std::size_t flipped = 0;
    for (const auto& row : r.ranking) {
        flipped += row.flipped.value_or(false) ? 1 : 0;
    }
    r.k = std::min(k.value_or(flipped), r.ranking.size());
    if (r.k == 0 || flipped == 0) {
        return r;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r.k; ++i) {
        hits += r.ranking[i].flipped.value_or(false) ? 1 : 0;
    }
    r.precision_at_k = static_cast<double>(hits) / static_cast<double>(r.k);
    r.chance_rate = static_cast<double>(flipped) / static_cast<double>(r.ranking.size());
    return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json("N/A");
}

} // namespace

nlohmann::json to_json(const RankReport& r, std::size_t max_rows)
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < r.ranking.size() && i < max_rows; ++i) {
        const auto& s = r.ranking[i];
        nlohmann::json row = {{"sample_id", s.sample_id}, {"gamma", s.gamma}, {"grad_norm", s.grad_norm}};
        if (s.flipped) {
            row["flipped"] = *s.flipped;
        }
        rows.push_back(row);
    }
    return {{"epoch", r.epoch},
            {"ranked", r.ranking.size()},
            {"excluded", r.excluded},
            {"mean_gamma", r.mean_gamma},
            {"k", r.k},
            {"precision_at_k", opt(r.precision_at_k)},
            {"chance_rate", opt(r.chance_rate)},
            {"lowest", rows}};
}

NormComparison compare_gradient_norm(std::span<const AlignmentScore> scores)
{
    if (scores.empty()) {
        throw Error(ErrorCode::TraceMissing, "no alignment scores to compare");
    }
    std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> by_epoch;
    for (const auto& s : scores) {
        auto& [gammas, norms] = by_epoch[s.epoch];
        if (s.gamma) {
            gammas.push_back(*s.gamma);
            norms.push_back(s.grad_norm);
        }
    }
    NormComparison out;
    std::size_t defined = 0;
    std::size_t high = 0;
    for (const auto& [epoch, series] : by_epoch) {
        const auto& [gammas, norms] = series;
        NormCorrelation row;
        row.epoch = epoch;
        row.samples = gammas.size();
        row.spearman = spearman(gammas, norms);
        if (!gammas.empty()) {
            for (std::size_t i = 0; i < gammas.size(); ++i) {
                row.mean_gamma += gammas[i];
                row.mean_grad_norm += norms[i];
            }
            row.mean_gamma /= static_cast<double>(gammas.size());
            row.mean_grad_norm /= static_cast<double>(gammas.size());
        }
        if (row.spearman) {
            ++defined;
            high += std::abs(*row.spearman) >= 0.95 ? 1 : 0;
        }
        out.epochs.push_back(row);
    }
    if (defined > 0) {
        out.high_correlation_fraction = static_cast<double>(high) / static_cast<double>(defined);
        out.persistently_high = out.high_correlation_fraction >= 0.8;
    }
    if (out.epochs.size() >= 2) {
        const auto& last = out.epochs.back();
        const auto& late = out.epochs[std::min(out.epochs.size() * 3 / 4, out.epochs.size() - 2)];
        out.late_grad_norm_change = last.mean_grad_norm - late.mean_grad_norm;
        out.late_gamma_change = last.mean_gamma - late.mean_gamma;
    }
    return out;
}

nlohmann::json to_json(const NormComparison& c)
{
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : c.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"samples", e.samples},
                          {"spearman", opt(e.spearman)},
                          {"mean_gamma", e.mean_gamma},
                          {"mean_grad_norm", e.mean_grad_norm}});
    }
    return {{"epochs", epochs},
            {"high_correlation_fraction", c.high_correlation_fraction},
            {"persistently_high", c.persistently_high},
            {"late_grad_norm_change", opt(c.late_grad_norm_change)},
            {"late_gamma_change", opt(c.late_gamma_change)},
            {"note", "late-phase deltas are reported, not asserted"}};
}

} // namespace gwa::harness
