#pragma once

// Per-sample gradient-weight alignment restricted to the classifier head.
//
// For a softmax cross-entropy head with logits W z (+ b), the negative loss
// gradient with respect to W is the rank-1 matrix a z^T with residual
// a = onehot(label) - probs. Every quantity below is evaluated through that
// factorization; the C x D gradient is never materialized.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gwa {

struct SampleRecord {
    std::uint64_t sample_id = 0;
    std::vector<float> latent; // length D
    std::vector<float> probs;  // length C, softmax output
    std::uint32_t label = 0;
};

/// Classifier head at the start of a given step. `weights` is row-major C x D.
struct HeadSnapshot {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<float> weights;
    std::optional<std::vector<float>> bias;
    std::uint32_t epoch = 0;
    std::uint32_t step = 0;
    std::uint64_t weight_hash = 0;

    /// Builds a snapshot and fills `weight_hash`. Throws DimensionMismatch
    /// when the buffers disagree with (classes, dim).
    static HeadSnapshot make(std::size_t classes, std::size_t dim, std::vector<float> weights,
                             std::optional<std::vector<float>> bias = std::nullopt,
                             std::uint32_t epoch = 0, std::uint32_t step = 0);
};

/// FNV-1a over the little-endian bytes of the weights followed by the bias.
std::uint64_t weight_content_hash(std::span<const float> weights, std::span<const float> bias = {});

struct AlignmentScore {
    std::uint64_t sample_id = 0;
    std::uint32_t epoch = 0;
    std::uint32_t step = 0;
    std::optional<double> gamma; // nullopt: undefined (zero gradient)
    double grad_norm = 0.0;
};

struct AlignmentOptions {
    /// Augment z with a constant 1 and append the bias column to W.
    bool include_bias = false;
    /// A gradient is treated as zero when grad_norm < zero_ratio * ||W||_F.
    double zero_ratio = 1e-12;
};

/// Absolute floor on ||W||_F below which a snapshot is rejected as corrupt.
inline constexpr double kWeightNormFloor = 1e-12;

struct HeadGradient {
    std::vector<double> residual; // a = onehot(label) - probs
    double grad_norm = 0.0;       // ||a|| * ||z||
};

HeadGradient head_gradient(const SampleRecord& record, const HeadSnapshot& snapshot,
                           const AlignmentOptions& options = {});

AlignmentScore alignment(const SampleRecord& record, const HeadSnapshot& snapshot,
                         const AlignmentOptions& options = {});

/// Cosine between the head gradients of two samples. Throws ZeroGradient if
/// either gradient vanishes.
double pairwise_alignment(const SampleRecord& a, const SampleRecord& b,
                          const AlignmentOptions& options = {});

/// A head converted once to double precision so that many samples can be
/// scored against it without re-reading the float32 snapshot.
class PreparedHead {
public:
    PreparedHead(const HeadSnapshot& snapshot, const AlignmentOptions& options = {});

    std::size_t classes() const noexcept { return classes_; }
    std::size_t dim() const noexcept { return dim_; }
    double weight_norm() const noexcept { return weight_norm_; }

    /// Scores one sample. Spans must have lengths dim() and classes(); the
    /// caller is responsible for checking that.
    AlignmentScore score(std::uint64_t sample_id, std::span<const float> latent,
                         std::span<const float> probs, std::uint32_t label) const;

private:
    std::size_t classes_;
    std::size_t dim_;
    std::vector<double> weights_;
    std::vector<double> bias_; // empty unless include_bias
    double weight_norm_ = 0.0;
    double zero_ratio_ = 1e-12;
    std::uint32_t epoch_ = 0;
    std::uint32_t step_ = 0;
};

} // namespace gwa
