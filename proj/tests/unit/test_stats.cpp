#include "gwa/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace gwa;

TEST_SUITE("stats") {

TEST_CASE("pearson on hand examples")
{
    const std::vector<double> x = {1, 2, 3, 4};
    const std::vector<double> y = {2, 4, 6, 8};
    const std::vector<double> z = {4, 3, 2, 1};
    CHECK(*pearson(x, y) == doctest::Approx(1.0));
    CHECK(*pearson(x, z) == doctest::Approx(-1.0));
    const std::vector<double> w = {1, 0, 1, 0};
    // mean x 2.5, mean w 0.5: cov = (-1.5*.5 + -.5*-.5 + .5*.5 + 1.5*-.5)/4 = -0.25
    CHECK(*pearson(x, w) == doctest::Approx(-0.25 / std::sqrt(1.25 * 0.25)));
}

TEST_CASE("N/A cases")
{
    const std::vector<double> x = {1, 2, 3};
    const std::vector<double> c = {5, 5, 5};
    CHECK_FALSE(pearson(x, c));
    CHECK_FALSE(spearman(x, c));
    CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{2}));
    CHECK_FALSE(pearson(x, std::vector<double>{1, 2}));
}

TEST_CASE("average ranks with ties")
{
    const auto r = average_ranks(std::vector<double>{10, 20, 10, 30, 20});
    CHECK(r == std::vector<double>{1.5, 3.5, 1.5, 5, 3.5});
}

TEST_CASE("spearman is invariant to monotone transforms")
{
    const std::vector<double> x = {0.1, 0.5, 0.2, 0.9, 0.7};
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(5 * v));
    CHECK(*spearman(x, y) == doctest::Approx(1.0));
    const std::vector<double> q = {3, 1, 2, 5, 4};
    // ranks x: 1,3,2,5,4 ; d = -2,2,0,0,0 ; rho = 1 - 6*8/(5*24) = 0.6
    CHECK(*spearman(x, q) == doctest::Approx(0.6));
}

}
