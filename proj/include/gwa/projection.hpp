#pragma once

// Gaussian Johnson-Lindenstrauss projection of latents to a fixed width.
// The head is mapped with the same matrix (W -> W R^T) so that the factored
// alignment formula applies unchanged in the projected space.

#include "gwa/alignment.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace gwa {

struct ProjectionConfig {
    bool enabled = false;
    std::size_t dim = 192;
    std::uint64_t seed = 0;
};

class JlProjection {
public:
    /// Entries of the target_dim x source_dim matrix are i.i.d. Normal(0, 1/k),
    /// drawn from a generator seeded with `seed` on first use.
    JlProjection(std::size_t source_dim, std::size_t target_dim = 192, std::uint64_t seed = 0);

    /// k = D identity map, for tests and pass-through configurations.
    static JlProjection identity(std::size_t dim);

    std::size_t source_dim() const noexcept { return source_dim_; }
    std::size_t target_dim() const noexcept { return target_dim_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Row-major k x D.
    const std::vector<double>& matrix() const;

    std::vector<double> apply(std::span<const double> z) const;
    std::vector<float> apply(std::span<const float> z) const;

private:
    struct Lazy {
        std::once_flag once;
        std::vector<double> matrix;
    };

    std::size_t source_dim_;
    std::size_t target_dim_;
    std::uint64_t seed_;
    bool identity_ = false;
    std::shared_ptr<Lazy> lazy_;
};

/// Latent replaced by R z; probs and label untouched. Throws DimensionMismatch.
SampleRecord project_record(const JlProjection& projection, const SampleRecord& record);

/// Weights replaced by W R^T; bias untouched. Throws DimensionMismatch.
HeadSnapshot project_head(const JlProjection& projection, const HeadSnapshot& snapshot);

} // namespace gwa
