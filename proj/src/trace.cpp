#include "gwa/trace.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace gwa {

namespace {

template <typename T>
T byteswap_if_big(T v) noexcept
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

template <typename T>
void append_le(std::string& buf, T v)
{
    v = byteswap_if_big(v);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
void append_array_le(std::string& buf, std::span<const T> values)
{
    if constexpr (std::endian::native == std::endian::little) {
        buf.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    } else {
        for (T v : values) {
            append_le(buf, v);
        }
    }
}

template <typename T>
T load_le(const char* src) noexcept
{
    T v;
    std::memcpy(&v, src, sizeof(T));
    return byteswap_if_big(v);
}

template <typename T>
void load_array_le(const char* src, T* dst, std::size_t count) noexcept
{
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(dst, src, count * sizeof(T));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            dst[i] = load_le<T>(src + i * sizeof(T));
        }
    }
}

std::size_t sample_stride(const TraceHeader& h)
{
    return sizeof(std::uint64_t) + (static_cast<std::size_t>(h.dim) + h.classes) * sizeof(float) +
           sizeof(std::uint32_t);
}

bool step_after(std::uint32_t epoch, std::uint32_t step, std::uint32_t last_epoch,
                std::uint32_t last_step)
{
    return epoch > last_epoch || (epoch == last_epoch && step > last_step);
}

} // namespace

void TraceHeader::validate() const
{
    if (dim == 0 || classes == 0 || batch_size == 0 || steps_per_epoch == 0) {
        throw Error(ErrorCode::InvalidArgument, "trace header requires D, C, b, K > 0");
    }
}

void stable_softmax(std::span<float> values)
{
    if (values.empty()) {
        return;
    }
    double max_v = -std::numeric_limits<double>::infinity();
    for (float v : values) {
        max_v = std::max(max_v, static_cast<double>(v));
    }
    double sum = 0.0;
    for (float v : values) {
        sum += std::exp(static_cast<double>(v) - max_v);
    }
    for (float& v : values) {
        v = static_cast<float>(std::exp(static_cast<double>(v) - max_v) / sum);
    }
}

TraceWriter::TraceWriter(std::ostream& out, const TraceHeader& header) : out_(out), header_(header)
{
    header_.validate();
    std::string buf;
    buf.append(kTraceMagic.data(), kTraceMagic.size());
    append_le<std::uint16_t>(buf, header_.version);
    append_le<std::uint32_t>(buf, header_.dim);
    append_le<std::uint32_t>(buf, header_.classes);
    append_le<std::uint64_t>(buf, header_.dataset_size);
    append_le<std::uint32_t>(buf, header_.batch_size);
    append_le<std::uint32_t>(buf, header_.steps_per_epoch);
    append_le<std::uint16_t>(buf, header_.flags);
    out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    bytes_ += buf.size();
    if (!out_) {
        throw Error(ErrorCode::IoError, "failed to write trace header");
    }
}

void TraceWriter::write_step(std::uint32_t epoch, std::uint32_t step,
                             std::span<const float> weights, std::span<const float> bias,
                             std::span<const std::uint64_t> sample_ids,
                             std::span<const float> latents, std::span<const float> probs,
                             std::span<const std::uint32_t> labels)
{
    const std::size_t d = header_.dim;
    const std::size_t c = header_.classes;
    const std::size_t n = sample_ids.size();
    if (weights.size() != c * d) {
        throw Error(ErrorCode::DimensionMismatch, "weights must have C*D entries");
    }
    if (header_.bias_present() ? bias.size() != c : !bias.empty()) {
        throw Error(ErrorCode::DimensionMismatch, "bias presence/length disagrees with header");
    }
    if (latents.size() != n * d || probs.size() != n * c || labels.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "batch arrays disagree with n, D, C");
    }
    if (n > header_.batch_size) {
        throw Error(ErrorCode::DimensionMismatch, "batch of " + std::to_string(n) +
                                                      " exceeds header batch size");
    }
    if (has_previous_ && !step_after(epoch, step, last_epoch_, last_step_)) {
        throw Error(ErrorCode::NonMonotonicStep, "(epoch, step) must strictly increase");
    }
    if (has_previous_ && epoch != last_epoch_) {
        flush();
    }

    const std::uint64_t hash = weight_content_hash(weights, bias);
    const bool reuse = has_previous_ && hash == previous_hash_;

    buffer_.clear();
    append_le<std::uint32_t>(buffer_, epoch);
    append_le<std::uint32_t>(buffer_, step);
    append_le<std::uint32_t>(buffer_, static_cast<std::uint32_t>(n));
    append_le<std::uint8_t>(buffer_, static_cast<std::uint8_t>(reuse ? WeightTag::SameAsPrevious
                                                                     : WeightTag::Full));
    append_le<std::uint64_t>(buffer_, hash);
    if (!reuse) {
        append_array_le(buffer_, weights);
        append_array_le(buffer_, bias);
    }
    for (std::size_t i = 0; i < n; ++i) {
        append_le<std::uint64_t>(buffer_, sample_ids[i]);
        append_array_le(buffer_, latents.subspan(i * d, d));
        append_array_le(buffer_, probs.subspan(i * c, c));
        append_le<std::uint32_t>(buffer_, labels[i]);
    }
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out_) {
        throw Error(ErrorCode::IoError, "failed to write step record");
    }
    bytes_ += buffer_.size();
    has_previous_ = true;
    previous_hash_ = hash;
    last_epoch_ = epoch;
    last_step_ = step;
}

void TraceWriter::flush()
{
    out_.flush();
    if (!out_) {
        throw Error(ErrorCode::IoError, "failed to flush trace");
    }
}

TraceReader::TraceReader(std::istream& in, TraceReaderOptions options)
    : in_(in), options_(options)
{
    char buf[kTraceHeaderSize];
    in_.read(buf, kTraceHeaderSize);
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got >= 4 && std::memcmp(buf, kTraceMagic.data(), 4) != 0) {
        throw Error(ErrorCode::BadMagic, "stream does not start with GWAT");
    }
    if (got < kTraceHeaderSize) {
        throw TruncatedRecordError(0, "trace header is " + std::to_string(got) + " bytes");
    }
    header_.version = load_le<std::uint16_t>(buf + 4);
    if (header_.version != kTraceVersion) {
        throw Error(ErrorCode::VersionUnsupported,
                    "trace version " + std::to_string(header_.version));
    }
    header_.dim = load_le<std::uint32_t>(buf + 6);
    header_.classes = load_le<std::uint32_t>(buf + 10);
    header_.dataset_size = load_le<std::uint64_t>(buf + 14);
    header_.batch_size = load_le<std::uint32_t>(buf + 22);
    header_.steps_per_epoch = load_le<std::uint32_t>(buf + 26);
    header_.flags = load_le<std::uint16_t>(buf + 30);
    header_.validate();
    offset_ = kTraceHeaderSize;
}

bool TraceReader::read_exact(char* dst, std::size_t n, std::uint64_t record_start,
                             bool allow_clean_eof)
{
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    if (got == n) {
        return true;
    }
    if (got == 0 && allow_clean_eof) {
        return false;
    }
    throw TruncatedRecordError(record_start, "stream ended at byte " + std::to_string(offset_));
}

bool TraceReader::next(StepRecord& out)
{
    const std::uint64_t start = offset_;
    constexpr std::size_t kPrefix = 4 + 4 + 4 + 1 + 8;
    char prefix[kPrefix];
    if (!read_exact(prefix, kPrefix, start, true)) {
        return false;
    }
    out.epoch = load_le<std::uint32_t>(prefix);
    out.step = load_le<std::uint32_t>(prefix + 4);
    const std::uint32_t n = load_le<std::uint32_t>(prefix + 8);
    const auto tag = static_cast<std::uint8_t>(prefix[12]);
    const std::uint64_t hash = load_le<std::uint64_t>(prefix + 13);

    if (has_previous_step_ && !step_after(out.epoch, out.step, last_epoch_, last_step_)) {
        throw Error(ErrorCode::NonMonotonicStep,
                    "record (" + std::to_string(out.epoch) + ", " + std::to_string(out.step) +
                        ") at byte " + std::to_string(start) + " does not follow (" +
                        std::to_string(last_epoch_) + ", " + std::to_string(last_step_) + ")");
    }
    if (n > header_.batch_size) {
        throw Error(ErrorCode::DimensionMismatch, "record at byte " + std::to_string(start) +
                                                      " holds " + std::to_string(n) +
                                                      " samples, batch size is " +
                                                      std::to_string(header_.batch_size));
    }

    const std::size_t d = header_.dim;
    const std::size_t c = header_.classes;
    if (tag == static_cast<std::uint8_t>(WeightTag::Full)) {
        const std::size_t count = c * d + (header_.bias_present() ? c : 0);
        scratch_.resize(count * sizeof(float));
        read_exact(scratch_.data(), scratch_.size(), start, false);
        std::vector<float> weights(c * d);
        load_array_le(scratch_.data(), weights.data(), weights.size());
        std::optional<std::vector<float>> bias;
        if (header_.bias_present()) {
            bias.emplace(c);
            load_array_le(scratch_.data() + c * d * sizeof(float), bias->data(), c);
        }
        auto snapshot = HeadSnapshot::make(c, d, std::move(weights), std::move(bias), out.epoch,
                                           out.step);
        if (snapshot.weight_hash != hash) {
            throw Error(ErrorCode::HashMismatch,
                        "weight hash mismatch in record at byte " + std::to_string(start));
        }
        head_ = std::make_shared<const HeadSnapshot>(std::move(snapshot));
        out.weights_reused = false;
    } else if (tag == static_cast<std::uint8_t>(WeightTag::SameAsPrevious)) {
        if (!head_ || head_->weight_hash != hash) {
            throw Error(ErrorCode::HashMismatch, "same_as_previous record at byte " +
                                                     std::to_string(start) +
                                                     " does not match the previous snapshot");
        }
        out.weights_reused = true;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown weight tag " + std::to_string(tag) +
                                                    " at byte " + std::to_string(start));
    }
    out.head = head_;

    const std::size_t stride = sample_stride(header_);
    scratch_.resize(stride * n);
    read_exact(scratch_.data(), scratch_.size(), start, false);
    auto& batch = out.batch;
    batch.sample_ids.resize(n);
    batch.latents.resize(n * d);
    batch.probs.resize(n * c);
    batch.labels.resize(n);
    const char* p = scratch_.data();
    for (std::size_t i = 0; i < n; ++i) {
        batch.sample_ids[i] = load_le<std::uint64_t>(p);
        p += sizeof(std::uint64_t);
        load_array_le(p, batch.latents.data() + i * d, d);
        p += d * sizeof(float);
        load_array_le(p, batch.probs.data() + i * c, c);
        p += c * sizeof(float);
        batch.labels[i] = load_le<std::uint32_t>(p);
        p += sizeof(std::uint32_t);
        if (batch.labels[i] >= c) {
            throw Error(ErrorCode::DimensionMismatch,
                        "label " + std::to_string(batch.labels[i]) + " in record at byte " +
                            std::to_string(start) + " is outside [0, C)");
        }
        if (options_.convert_logits && header_.probs_are_logits()) {
            stable_softmax(std::span<float>(batch.probs.data() + i * c, c));
        }
    }

    has_previous_step_ = true;
    last_epoch_ = out.epoch;
    last_step_ = out.step;
    return true;
}

Trace read_trace(std::istream& in, TraceReaderOptions options)
{
    TraceReader reader(in, options);
    Trace trace;
    trace.header = reader.header();
    StepRecord record;
    while (reader.next(record)) {
        trace.steps.push_back(std::move(record));
        record = StepRecord{};
    }
    return trace;
}

void write_alignment_row(std::ostream& out, const AlignmentScore& score)
{
    std::string buf;
    buf.reserve(kAlignmentRowSize);
    append_le<std::uint64_t>(buf, score.sample_id);
    append_le<std::uint32_t>(buf, score.epoch);
    append_le<std::uint32_t>(buf, score.step);
    append_le<float>(buf, score.gamma ? static_cast<float>(*score.gamma)
                                      : std::numeric_limits<float>::quiet_NaN());
    append_le<float>(buf, static_cast<float>(score.grad_norm));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "failed to write alignment row");
    }
}

std::vector<AlignmentScore> read_alignment_rows(std::istream& in)
{
    std::vector<AlignmentScore> rows;
    char buf[kAlignmentRowSize];
    std::uint64_t offset = 0;
    while (true) {
        in.read(buf, kAlignmentRowSize);
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0) {
            break;
        }
        if (got != kAlignmentRowSize) {
            throw TruncatedRecordError(offset, "partial alignment row");
        }
        AlignmentScore s;
        s.sample_id = load_le<std::uint64_t>(buf);
        s.epoch = load_le<std::uint32_t>(buf + 8);
        s.step = load_le<std::uint32_t>(buf + 12);
        const float gamma = load_le<float>(buf + 16);
        if (!std::isnan(gamma)) {
            s.gamma = gamma;
        }
        s.grad_norm = load_le<float>(buf + 20);
        rows.push_back(s);
        offset += kAlignmentRowSize;
    }
    return rows;
}

} // namespace gwa
