#include "gwa/alignment.hpp"
#include "gwa/error.hpp"
#include "gwa/projection.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gwa;

namespace {

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_SUITE("projection") {

TEST_CASE("same spec gives the identical matrix; different seeds differ")
{
    const JlProjection a(64, 16, 5);
    const JlProjection b(64, 16, 5);
    const JlProjection c(64, 16, 6);
    CHECK(a.matrix() == b.matrix());
    CHECK(a.matrix() != c.matrix());
    CHECK(a.matrix().size() == 64 * 16);
    const JlProjection copy = a;
    CHECK(copy.matrix() == a.matrix());
}

TEST_CASE("matrix entries have variance 1/k")
{
    const JlProjection p(1024, 192, 1);
    double s = 0.0, s2 = 0.0;
    for (double v : p.matrix()) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(p.matrix().size());
    CHECK(std::abs(s / n) < 0.002);
    CHECK(s2 / n == doctest::Approx(1.0 / 192.0).epsilon(0.02));
}

TEST_CASE("identity override leaves records and heads unchanged")
{
    const auto id = JlProjection::identity(3);
    SampleRecord r;
    r.latent = {1.5f, -2.f, 0.25f};
    r.probs = {0.1f, 0.9f};
    r.label = 1;
    const auto pr = project_record(id, r);
    CHECK(pr.latent == r.latent);
    CHECK(pr.probs == r.probs);
    CHECK(pr.label == r.label);
    const auto head = HeadSnapshot::make(2, 3, {1.f, 2.f, 3.f, -4.f, 5.f, -6.f}, std::vector<float>{0.5f, 1.f});
    const auto ph = project_head(id, head);
    CHECK(ph.weights == head.weights);
    CHECK(ph.bias == head.bias);
}

TEST_CASE("norm preservation at D=1024, k=192")
{
    std::mt19937_64 rng(41);
    const JlProjection p(1024, 192, 3);
    int ok = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        const auto z = gaussian(1024, rng);
        const double ratio = oracle::norm(p.apply(z)) / oracle::norm(z);
        ok += (ratio >= 0.7 && ratio <= 1.3) ? 1 : 0;
    }
    CHECK(ok >= 0.95 * trials);
}

TEST_CASE("inner products preserved within 0.3 |u||v| across seeds")
{
    std::mt19937_64 rng(42);
    const auto u = gaussian(1024, rng);
    auto v = gaussian(1024, rng);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.6 * u[i] + 0.8 * v[i];
    const double exact = dot(u, v);
    const double bound = 0.3 * oracle::norm(u) * oracle::norm(v);
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const JlProjection p(1024, 192, seed);
        ok += std::abs(dot(p.apply(u), p.apply(v)) - exact) <= bound ? 1 : 0;
    }
    CHECK(ok >= 95);
}

TEST_CASE("(W R^T)(R z) concentrates around W z")
{
    std::mt19937_64 rng(43);
    const std::size_t d = 1024;
    const std::size_t c = 5;
    int ok = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        const JlProjection p(d, 192, static_cast<std::uint64_t>(t));
        // Head rows correlated with z so W z is not vanishing.
        const auto z = gaussian(d, rng);
        std::vector<float> w(c * d);
        for (std::size_t i = 0; i < c; ++i) {
            const auto noise = gaussian(d, rng);
            for (std::size_t j = 0; j < d; ++j)
                w[i * d + j] = static_cast<float>(0.7 * z[j] * (i % 2 ? -1.0 : 1.0) + noise[j]);
        }
        const auto head = HeadSnapshot::make(c, d, w);
        const auto ph = project_head(p, head);
        const auto rz = p.apply(z);
        std::vector<double> wz(c, 0.0), proj(c, 0.0);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < d; ++j) wz[i] += w[i * d + j] * z[j];
            for (std::size_t j = 0; j < 192; ++j) proj[i] += ph.weights[i * 192 + j] * rz[j];
        }
        std::vector<double> diff(c);
        for (std::size_t i = 0; i < c; ++i) diff[i] = proj[i] - wz[i];
        ok += oracle::norm(diff) / oracle::norm(wz) < 0.35 ? 1 : 0;
    }
    CHECK(ok >= 90);
}

TEST_CASE("linearity")
{
    std::mt19937_64 rng(44);
    const JlProjection p(256, 64, 9);
    const auto z1 = gaussian(256, rng);
    const auto z2 = gaussian(256, rng);
    const double alpha = -1.75;
    std::vector<double> mix(256);
    for (std::size_t i = 0; i < 256; ++i) mix[i] = alpha * z1[i] + z2[i];
    const auto lhs = p.apply(mix);
    const auto a = p.apply(z1);
    const auto b = p.apply(z2);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(lhs[i] - (alpha * a[i] + b[i])) <= 1e-6);
}

TEST_CASE("errors")
{
    CHECK_THROWS_AS(JlProjection(10, 20, 0), Error);
    CHECK_THROWS_AS(JlProjection(10, 0, 0), Error);
    const JlProjection p(8, 4, 0);
    try {
        p.apply(std::vector<double>(7, 1.0));
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
    CHECK_THROWS_AS(project_head(p, HeadSnapshot::make(2, 3, std::vector<float>(6, 1.f))), Error);
    SampleRecord r;
    r.latent.assign(5, 1.f);
    r.probs = {1.f};
    CHECK_THROWS_AS(project_record(p, r), Error);
}

TEST_CASE("projected alignment uses the same factored formula")
{
    std::mt19937_64 rng(45);
    const JlProjection p(64, 16, 2);
    const auto head = HeadSnapshot::make(3, 64, oracle::random_floats(3 * 64, rng));
    SampleRecord r;
    r.latent = oracle::random_floats(64, rng);
    r.probs = {0.2f, 0.3f, 0.5f};
    r.label = 0;
    const auto ph = project_head(p, head);
    const auto pr = project_record(p, r);
    CHECK(ph.dim == 16);
    CHECK(pr.latent.size() == 16);
    std::vector<double> a = {1.0 - double{0.2f}, -double{0.3f}, -double{0.5f}};
    const auto g = oracle::outer(a, oracle::widen(pr.latent));
    CHECK(std::abs(*alignment(pr, ph).gamma - oracle::cosine(g, oracle::widen(ph.weights))) <= 1e-9);
}

}
