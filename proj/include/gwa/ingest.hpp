#pragma once

// Streaming GWA estimation from a telemetry trace: every sample is scored
// against the head in effect at the start of its step, scores are folded
// into the current epoch's distribution, and epochs are finalized at their
// boundaries.

#include "gwa/alignment.hpp"
#include "gwa/controller.hpp"
#include "gwa/moments.hpp"
#include "gwa/projection.hpp"
#include "gwa/trace.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace gwa {

struct IngestOptions {
    AlignmentOptions alignment;
    GwaOptions gwa;
    ProjectionConfig projection;
    /// Keep every AlignmentScore in the result and cross-check the streaming
    /// moments against the store-then-compute route at each epoch boundary.
    bool retain_scores = false;
    /// Optional sink for 24-byte per-sample alignment rows.
    std::ostream* alignment_out = nullptr;
};

struct IngestResult {
    TraceHeader header;
    GwaSeries series;
    std::vector<AlignmentScore> scores; // filled when retain_scores
    std::uint64_t samples = 0;
    std::uint64_t steps = 0;
};

/// Throws BadMagic, VersionUnsupported, DimensionMismatch, NonMonotonicStep,
/// TruncatedRecord or HashMismatch.
IngestResult ingest_stream(std::istream& in, const IngestOptions& options = {});

/// Scores every sample of `epoch` against one fixed snapshot.
EpochDistribution offline_recompute(const Trace& trace, std::uint32_t epoch,
                                    const HeadSnapshot& reference,
                                    const IngestOptions& options = {});

enum class OfflineReference { EpochStart, Midpoint, EpochEnd };

/// The snapshot used as the fixed reference for `epoch`. EpochEnd is the
/// head at the first record of a later epoch (trainers close a trace with a
/// weights-only record so the last epoch has one). Returns nullopt when the
/// trace does not contain it.
std::optional<HeadSnapshot> reference_snapshot(const Trace& trace, std::uint32_t epoch,
                                               OfflineReference where);

/// Offline summaries for every epoch whose reference snapshot exists.
std::vector<EpochSummary> offline_series(const Trace& trace, OfflineReference where,
                                         const IngestOptions& options = {});

} // namespace gwa
