#include "gwa/projection.hpp"

#include "gwa/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace gwa {

JlProjection::JlProjection(std::size_t source_dim, std::size_t target_dim, std::uint64_t seed)
    : source_dim_(source_dim), target_dim_(target_dim), seed_(seed),
      lazy_(std::make_shared<Lazy>())
{
    if (target_dim == 0 || source_dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "projection dimensions must be positive");
    }
    if (target_dim > source_dim) {
        throw Error(ErrorCode::InvalidArgument,
                    "target dim " + std::to_string(target_dim) + " exceeds source dim " +
                        std::to_string(source_dim));
    }
}

JlProjection JlProjection::identity(std::size_t dim)
{
    JlProjection p(dim, dim, 0);
    p.identity_ = true;
    return p;
}

const std::vector<double>& JlProjection::matrix() const
{
    std::call_once(lazy_->once, [this] {
        auto& m = lazy_->matrix;
        m.assign(target_dim_ * source_dim_, 0.0);
        if (identity_) {
            for (std::size_t i = 0; i < target_dim_; ++i) {
                m[i * source_dim_ + i] = 1.0;
            }
            return;
        }
        std::mt19937_64 rng(seed_);
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(target_dim_)));
        for (double& v : m) {
            v = normal(rng);
        }
    });
    return lazy_->matrix;
}

std::vector<double> JlProjection::apply(std::span<const double> z) const
{
    if (z.size() != source_dim_) {
        throw Error(ErrorCode::DimensionMismatch, "vector length " + std::to_string(z.size()) +
                                                      " != projection source dim " +
                                                      std::to_string(source_dim_));
    }
    const auto& m = matrix();
    std::vector<double> out(target_dim_, 0.0);
    for (std::size_t i = 0; i < target_dim_; ++i) {
        const double* row = m.data() + i * source_dim_;
        double acc = 0.0;
        for (std::size_t j = 0; j < source_dim_; ++j) {
            acc += row[j] * z[j];
        }
        out[i] = acc;
    }
    return out;
}

std::vector<float> JlProjection::apply(std::span<const float> z) const
{
    std::vector<double> wide(z.begin(), z.end());
    const auto projected = apply(std::span<const double>(wide));
    return {projected.begin(), projected.end()};
}

SampleRecord project_record(const JlProjection& projection, const SampleRecord& record)
{
    SampleRecord out = record;
    out.latent = projection.apply(std::span<const float>(record.latent));
    return out;
}

HeadSnapshot project_head(const JlProjection& projection, const HeadSnapshot& snapshot)
{
    if (snapshot.dim != projection.source_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "head dim " + std::to_string(snapshot.dim) +
                                                      " != projection source dim " +
                                                      std::to_string(projection.source_dim()));
    }
    const std::size_t k = projection.target_dim();
    const std::size_t d = snapshot.dim;
    const auto& r = projection.matrix();
    std::vector<float> projected(snapshot.classes * k);
    for (std::size_t c = 0; c < snapshot.classes; ++c) {
        const float* row = snapshot.weights.data() + c * d;
        // (W R^T)[c, i] = sum_j W[c, j] R[i, j]
        for (std::size_t i = 0; i < k; ++i) {
            const double* rrow = r.data() + i * d;
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += static_cast<double>(row[j]) * rrow[j];
            }
            projected[c * k + i] = static_cast<float>(s);
        }
    }
    return HeadSnapshot::make(snapshot.classes, k, std::move(projected), snapshot.bias,
                              snapshot.epoch, snapshot.step);
}

} // namespace gwa
