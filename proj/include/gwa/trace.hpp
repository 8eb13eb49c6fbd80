#pragma once

// Binary telemetry trace (little-endian throughout).
//
// Header, 32 bytes:
//   magic "GWAT" | version u16 | D u32 | C u32 | N u64 | b u32 | K u32 | flags u16
// Step record:
//   epoch u32 | step u32 | n u32 | weight_tag u8 | weight_hash u64
//   [weight_tag == 0: C*D f32 weights (row-major C x D), then C f32 bias if bias_present]
//   n x { sample_id u64 | latent D f32 | probs C f32 | label u32 }
// weight_tag == 1 marks `same_as_previous`; weight_hash must then equal the
// previous snapshot's hash.
//
// Per-sample alignment rows, 24 bytes each:
//   sample_id u64 | epoch u32 | step u32 | gamma f32 (NaN if undefined) | grad_norm f32

#include "gwa/alignment.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gwa {

inline constexpr std::array<char, 4> kTraceMagic{'G', 'W', 'A', 'T'};
inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderSize = 32;
inline constexpr std::size_t kAlignmentRowSize = 24;

enum TraceFlag : std::uint16_t {
    kTraceBiasPresent = 1u << 0,
    kTraceProbsAreLogits = 1u << 1,
};

enum class WeightTag : std::uint8_t { Full = 0, SameAsPrevious = 1 };

struct TraceHeader {
    std::uint16_t version = kTraceVersion;
    std::uint32_t dim = 0;
    std::uint32_t classes = 0;
    std::uint64_t dataset_size = 0;
    std::uint32_t batch_size = 0;
    std::uint32_t steps_per_epoch = 0;
    std::uint16_t flags = 0;

    bool bias_present() const noexcept { return (flags & kTraceBiasPresent) != 0; }
    bool probs_are_logits() const noexcept { return (flags & kTraceProbsAreLogits) != 0; }

    /// Throws InvalidArgument unless D, C, b, K > 0.
    void validate() const;
};

/// Samples of one step in structure-of-arrays layout.
struct StepBatch {
    std::vector<std::uint64_t> sample_ids;
    std::vector<float> latents; // n x D
    std::vector<float> probs;   // n x C
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return sample_ids.size(); }
};

struct StepRecord {
    std::uint32_t epoch = 0;
    std::uint32_t step = 0;
    bool weights_reused = false;
    /// Head in effect at the start of this step; shared between records
    /// that were deduplicated.
    std::shared_ptr<const HeadSnapshot> head;
    StepBatch batch;
};

/// Max-subtracted softmax computed in double, written back in place.
void stable_softmax(std::span<float> values);

class TraceWriter {
public:
    /// Writes the header immediately.
    TraceWriter(std::ostream& out, const TraceHeader& header);

    /// Appends a step record. The weight section collapses to
    /// `same_as_previous` when the content hash matches the last one written.
    /// Throws DimensionMismatch and NonMonotonicStep.
    void write_step(std::uint32_t epoch, std::uint32_t step, std::span<const float> weights,
                    std::span<const float> bias, std::span<const std::uint64_t> sample_ids,
                    std::span<const float> latents, std::span<const float> probs,
                    std::span<const std::uint32_t> labels);

    void flush();

    const TraceHeader& header() const noexcept { return header_; }
    std::uint64_t bytes_written() const noexcept { return bytes_; }

private:
    std::ostream& out_;
    TraceHeader header_;
    std::string buffer_;
    bool has_previous_ = false;
    std::uint64_t previous_hash_ = 0;
    std::uint32_t last_epoch_ = 0;
    std::uint32_t last_step_ = 0;
    std::uint64_t bytes_ = 0;
};

struct TraceReaderOptions {
    /// Replace logits with probabilities when the header says so.
    bool convert_logits = true;
};

class TraceReader {
public:
    /// Parses the header. Throws BadMagic, VersionUnsupported,
    /// InvalidArgument or TruncatedRecord.
    explicit TraceReader(std::istream& in, TraceReaderOptions options = {});

    const TraceHeader& header() const noexcept { return header_; }

    /// Reads the next record into `out`, reusing its buffers. Returns false at
    /// a clean end of stream. Throws TruncatedRecordError, NonMonotonicStep,
    /// DimensionMismatch or HashMismatch.
    bool next(StepRecord& out);

    std::uint64_t offset() const noexcept { return offset_; }

private:
    bool read_exact(char* dst, std::size_t n, std::uint64_t record_start, bool allow_clean_eof);

    std::istream& in_;
    TraceReaderOptions options_;
    TraceHeader header_;
    std::uint64_t offset_ = 0;
    std::shared_ptr<const HeadSnapshot> head_;
    bool has_previous_step_ = false;
    std::uint32_t last_epoch_ = 0;
    std::uint32_t last_step_ = 0;
    std::vector<char> scratch_;
};

/// Whole trace in memory, for offline analysis.
struct Trace {
    TraceHeader header;
    std::vector<StepRecord> steps;
};

Trace read_trace(std::istream& in, TraceReaderOptions options = {});

void write_alignment_row(std::ostream& out, const AlignmentScore& score);
std::vector<AlignmentScore> read_alignment_rows(std::istream& in);

} // namespace gwa
