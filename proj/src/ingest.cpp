#include "gwa/ingest.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>

namespace gwa {

namespace {

/// Applies the optional projection to heads and latents consistently.
class Scorer {
public:
    Scorer(const TraceHeader& header, const IngestOptions& options)
        : options_(options), dim_(header.dim), classes_(header.classes)
    {
        if (options.projection.enabled) {
            projection_.emplace(header.dim, options.projection.dim, options.projection.seed);
        }
    }

    void set_head(const std::shared_ptr<const HeadSnapshot>& head)
    {
        if (head == head_) {
            return;
        }
        head_ = head;
        if (projection_) {
            prepared_.emplace(project_head(*projection_, *head), options_.alignment);
        } else {
            prepared_.emplace(*head, options_.alignment);
        }
    }

    void set_reference(const HeadSnapshot& head)
    {
        head_.reset();
        if (projection_) {
            prepared_.emplace(project_head(*projection_, head), options_.alignment);
        } else {
            prepared_.emplace(head, options_.alignment);
        }
    }

    AlignmentScore score(const StepBatch& batch, std::size_t i, std::uint32_t epoch,
                         std::uint32_t step) const
    {
        std::span<const float> latent(batch.latents.data() + i * dim_, dim_);
        std::span<const float> probs(batch.probs.data() + i * classes_, classes_);
        AlignmentScore s;
        if (projection_) {
            const auto projected = projection_->apply(latent);
            s = prepared_->score(batch.sample_ids[i], projected, probs, batch.labels[i]);
        } else {
            s = prepared_->score(batch.sample_ids[i], latent, probs, batch.labels[i]);
        }
        s.epoch = epoch;
        s.step = step;
        return s;
    }

private:
    const IngestOptions& options_;
    std::size_t dim_;
    std::size_t classes_;
    std::optional<JlProjection> projection_;
    std::shared_ptr<const HeadSnapshot> head_;
    std::optional<PreparedHead> prepared_;
};

void cross_check(const EpochDistribution& dist)
{
    std::vector<double> values;
    values.reserve(dist.raw_scores.size());
    for (const auto& [id, gamma] : dist.raw_scores) {
        values.push_back(gamma);
    }
    const auto exact = CentralMoments::two_pass(values);
    const double m2 = exact.moment(2);
    for (int k = 1; k <= 4; ++k) {
        const double scale = std::max(std::abs(exact.moment(k)), std::pow(m2, k / 2.0));
        const double diff = std::abs(exact.moment(k) - dist.moments.moment(k));
        if (diff > 1e-10 * scale + 1e-300) {
            throw Error(ErrorCode::Internal,
                        "streaming moment " + std::to_string(k) + " of epoch " +
                            std::to_string(dist.epoch) + " disagrees with two-pass value");
        }
    }
}

} // namespace

IngestResult ingest_stream(std::istream& in, const IngestOptions& options)
{
    TraceReader reader(in);
    IngestResult result;
    result.header = reader.header();
    result.series.steps_per_epoch = result.header.steps_per_epoch;
    result.series.batch_size = result.header.batch_size;
    result.series.dataset_size = result.header.dataset_size;

    Scorer scorer(result.header, options);
    std::optional<EpochDistribution> current;

    auto close_epoch = [&] {
        if (current && current->observed() > 0) {
            if (current->retain_raw) {
                cross_check(*current);
            }
            result.series.epochs.push_back(summarize(*current, options.gwa));
        }
        current.reset();
    };

    StepRecord record;
    while (reader.next(record)) {
        ++result.steps;
        if (!current || current->epoch != record.epoch) {
            close_epoch();
            current.emplace();
            current->epoch = record.epoch;
            current->beta = options.gwa.beta;
            current->retain_raw = options.retain_scores;
        }
        if (record.batch.size() == 0) {
            continue;
        }
        scorer.set_head(record.head);
        for (std::size_t i = 0; i < record.batch.size(); ++i) {
            const auto s = scorer.score(record.batch, i, record.epoch, record.step);
            accumulate(*current, s);
            if (options.alignment_out) {
                write_alignment_row(*options.alignment_out, s);
            }
            if (options.retain_scores) {
                result.scores.push_back(s);
            }
        }
        result.samples += record.batch.size();
    }
    close_epoch();
    result.series.total_steps =
        static_cast<std::uint64_t>(result.header.steps_per_epoch) * result.series.epochs.size();
    return result;
}

EpochDistribution offline_recompute(const Trace& trace, std::uint32_t epoch,
                                    const HeadSnapshot& reference, const IngestOptions& options)
{
    if (reference.dim != trace.header.dim || reference.classes != trace.header.classes) {
        throw Error(ErrorCode::DimensionMismatch, "reference snapshot does not match trace header");
    }
    Scorer scorer(trace.header, options);
    scorer.set_reference(reference);
    EpochDistribution dist;
    dist.epoch = epoch;
    dist.beta = options.gwa.beta;
    dist.retain_raw = options.retain_scores;
    for (const auto& record : trace.steps) {
        if (record.epoch != epoch) {
            continue;
        }
        for (std::size_t i = 0; i < record.batch.size(); ++i) {
            accumulate(dist, scorer.score(record.batch, i, epoch, record.step));
        }
    }
    return dist;
}

std::optional<HeadSnapshot> reference_snapshot(const Trace& trace, std::uint32_t epoch,
                                               OfflineReference where)
{
    std::vector<const StepRecord*> in_epoch;
    const StepRecord* later = nullptr;
    for (const auto& record : trace.steps) {
        if (record.epoch == epoch) {
            in_epoch.push_back(&record);
        } else if (record.epoch > epoch) {
            later = &record;
            break;
        }
    }
    switch (where) {
    case OfflineReference::EpochStart:
        if (in_epoch.empty()) return std::nullopt;
        return *in_epoch.front()->head;
    case OfflineReference::Midpoint:
        if (in_epoch.empty()) return std::nullopt;
        return *in_epoch[in_epoch.size() / 2]->head;
    case OfflineReference::EpochEnd:
        if (!later) return std::nullopt;
        return *later->head;
    }
    return std::nullopt;
}

std::vector<EpochSummary> offline_series(const Trace& trace, OfflineReference where,
                                         const IngestOptions& options)
{
    std::vector<std::uint32_t> epochs;
    for (const auto& record : trace.steps) {
        if (record.batch.size() > 0 && (epochs.empty() || epochs.back() != record.epoch)) {
            epochs.push_back(record.epoch);
        }
    }
    std::vector<EpochSummary> out;
    for (std::uint32_t epoch : epochs) {
        const auto reference = reference_snapshot(trace, epoch, where);
        if (!reference) {
            continue;
        }
        out.push_back(summarize(offline_recompute(trace, epoch, *reference, options), options.gwa));
    }
    return out;
}

} // namespace gwa
