#include "gwa/alignment.hpp"

#include "gwa/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace gwa {

namespace {

void check_record(const SampleRecord& record, std::size_t classes, std::size_t dim)
{
    if (record.latent.size() != dim || record.probs.size() != classes) {
        throw Error(ErrorCode::DimensionMismatch,
                    "record has latent " + std::to_string(record.latent.size()) + ", probs " +
                        std::to_string(record.probs.size()) + "; head expects D=" +
                        std::to_string(dim) + ", C=" + std::to_string(classes));
    }
    if (record.label >= classes) {
        throw Error(ErrorCode::DimensionMismatch,
                    "label " + std::to_string(record.label) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
}

double squared_norm(std::span<const float> v)
{
    double s = 0.0;
    for (float x : v) {
        s += static_cast<double>(x) * static_cast<double>(x);
    }
    return s;
}

double residual_squared_norm(std::span<const float> probs, std::uint32_t label)
{
    double s = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double r = (c == label ? 1.0 : 0.0) - static_cast<double>(probs[c]);
        s += r * r;
    }
    return s;
}

} // namespace

std::uint64_t weight_content_hash(std::span<const float> weights, std::span<const float> bias)
{
    constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
    constexpr std::uint64_t kPrime = 0x100000001b3ULL;
    std::uint64_t h = kOffset;
    auto feed = [&](std::span<const float> values) {
        for (float v : values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int i = 0; i < 4; ++i) {
                h ^= (bits >> (8 * i)) & 0xffU;
                h *= kPrime;
            }
        }
    };
    feed(weights);
    feed(bias);
    return h;
}

HeadSnapshot HeadSnapshot::make(std::size_t classes, std::size_t dim, std::vector<float> weights,
                                std::optional<std::vector<float>> bias, std::uint32_t epoch,
                                std::uint32_t step)
{
    if (weights.size() != classes * dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "weights length " + std::to_string(weights.size()) + " != C*D = " +
                        std::to_string(classes * dim));
    }
    if (bias && bias->size() != classes) {
        throw Error(ErrorCode::DimensionMismatch, "bias length != C");
    }
    HeadSnapshot s;
    s.classes = classes;
    s.dim = dim;
    s.weights = std::move(weights);
    s.bias = std::move(bias);
    s.epoch = epoch;
    s.step = step;
    s.weight_hash = weight_content_hash(s.weights, s.bias ? std::span<const float>(*s.bias)
                                                          : std::span<const float>());
    return s;
}

HeadGradient head_gradient(const SampleRecord& record, const HeadSnapshot& snapshot,
                           const AlignmentOptions& options)
{
    check_record(record, snapshot.classes, snapshot.dim);
    HeadGradient g;
    g.residual.resize(snapshot.classes);
    double residual_sq = 0.0;
    for (std::size_t c = 0; c < snapshot.classes; ++c) {
        g.residual[c] = (c == record.label ? 1.0 : 0.0) - static_cast<double>(record.probs[c]);
        residual_sq += g.residual[c] * g.residual[c];
    }
    double latent_sq = squared_norm(record.latent);
    if (options.include_bias) {
        latent_sq += 1.0;
    }
    g.grad_norm = std::sqrt(residual_sq) * std::sqrt(latent_sq);
    return g;
}

AlignmentScore alignment(const SampleRecord& record, const HeadSnapshot& snapshot,
                         const AlignmentOptions& options)
{
    check_record(record, snapshot.classes, snapshot.dim);
    return PreparedHead(snapshot, options).score(record.sample_id, record.latent, record.probs,
                                                 record.label);
}

double pairwise_alignment(const SampleRecord& a, const SampleRecord& b,
                          const AlignmentOptions& options)
{
    if (a.latent.size() != b.latent.size() || a.probs.size() != b.probs.size()) {
        throw Error(ErrorCode::DimensionMismatch, "pairwise operands differ in D or C");
    }
    const std::size_t classes = a.probs.size();
    if (a.label >= classes || b.label >= classes) {
        throw Error(ErrorCode::DimensionMismatch, "label outside [0, C)");
    }

    double latent_dot = 0.0;
    for (std::size_t i = 0; i < a.latent.size(); ++i) {
        latent_dot += static_cast<double>(a.latent[i]) * static_cast<double>(b.latent[i]);
    }
    double latent_sq_a = squared_norm(a.latent);
    double latent_sq_b = squared_norm(b.latent);
    if (options.include_bias) {
        latent_dot += 1.0;
        latent_sq_a += 1.0;
        latent_sq_b += 1.0;
    }

    double residual_dot = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double ra = (c == a.label ? 1.0 : 0.0) - static_cast<double>(a.probs[c]);
        const double rb = (c == b.label ? 1.0 : 0.0) - static_cast<double>(b.probs[c]);
        residual_dot += ra * rb;
    }
    const double norm_a = std::sqrt(latent_sq_a * residual_squared_norm(a.probs, a.label));
    const double norm_b = std::sqrt(latent_sq_b * residual_squared_norm(b.probs, b.label));
    // No weight reference here, so the zero test is exact.
    if (!(norm_a > 0.0) || !(norm_b > 0.0)) {
        throw Error(ErrorCode::ZeroGradient, "pairwise alignment of a zero gradient");
    }
    return std::clamp(latent_dot * residual_dot / (norm_a * norm_b), -1.0, 1.0);
}

PreparedHead::PreparedHead(const HeadSnapshot& snapshot, const AlignmentOptions& options)
    : classes_(snapshot.classes), dim_(snapshot.dim), zero_ratio_(options.zero_ratio),
      epoch_(snapshot.epoch), step_(snapshot.step)
{
    if (snapshot.weights.size() != classes_ * dim_) {
        throw Error(ErrorCode::DimensionMismatch, "snapshot weights length != C*D");
    }
    weights_.assign(snapshot.weights.begin(), snapshot.weights.end());
    double norm_sq = 0.0;
    for (double w : weights_) {
        norm_sq += w * w;
    }
    if (options.include_bias) {
        bias_.assign(classes_, 0.0);
        if (snapshot.bias) {
            if (snapshot.bias->size() != classes_) {
                throw Error(ErrorCode::DimensionMismatch, "snapshot bias length != C");
            }
            std::copy(snapshot.bias->begin(), snapshot.bias->end(), bias_.begin());
        }
        for (double b : bias_) {
            norm_sq += b * b;
        }
    }
    weight_norm_ = std::sqrt(norm_sq);
    if (!(weight_norm_ >= kWeightNormFloor)) {
        throw Error(ErrorCode::DegenerateWeights,
                    "head Frobenius norm " + std::to_string(weight_norm_) + " below threshold");
    }
}

AlignmentScore PreparedHead::score(std::uint64_t sample_id, std::span<const float> latent,
                                   std::span<const float> probs, std::uint32_t label) const
{
    AlignmentScore out;
    out.sample_id = sample_id;
    out.epoch = epoch_;
    out.step = step_;

    double latent_sq = squared_norm(latent);
    // a^T (W z) accumulated class by class; a_c = [c == label] - p_c.
    double projection = 0.0;
    double residual_sq = 0.0;
    const bool with_bias = !bias_.empty();
    for (std::size_t c = 0; c < classes_; ++c) {
        const double* row = weights_.data() + c * dim_;
        double logit = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) {
            logit += row[d] * static_cast<double>(latent[d]);
        }
        if (with_bias) {
            logit += bias_[c];
        }
        const double r = (c == label ? 1.0 : 0.0) - static_cast<double>(probs[c]);
        projection += r * logit;
        residual_sq += r * r;
    }
    if (with_bias) {
        latent_sq += 1.0;
    }
    const double residual_norm = std::sqrt(residual_sq);
    const double latent_norm = std::sqrt(latent_sq);
    out.grad_norm = residual_norm * latent_norm;
    if (!(out.grad_norm >= zero_ratio_ * weight_norm_) || out.grad_norm == 0.0) {
        return out;
    }
    const double gamma = projection / (residual_norm * latent_norm * weight_norm_);
    out.gamma = std::clamp(gamma, -1.0, 1.0);
    return out;
}

} // namespace gwa
