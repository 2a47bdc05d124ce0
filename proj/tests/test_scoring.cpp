// Forecast scoring: the closed-form Gaussian ranked probability score against
// direct numerical integration, mixture quadrature against a Riemann oracle,
// and the simple error metrics.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mebn/scoring.hpp"

using namespace mebn;
using Catch::Matchers::WithinAbs;

namespace {

// Independent oracle: CRPS = integral of (F(x) - 1{x >= y})^2 by midpoint
// Riemann sum. Slow and artless on purpose.
double crps_riemann(const ClgPosterior& mix, double y, double lo, double hi, double dx) {
    double s = 0.0;
    for (double x = lo; x < hi; x += dx) {
        const double d = mixture_cdf(mix, x + dx / 2) - (x + dx / 2 >= y ? 1.0 : 0.0);
        s += d * d * dx;
    }
    return s;
}

ClgPosterior single(double mean, double var) {
    ClgPosterior p;
    p.comps.push_back({1.0, mean, var});
    return p;
}

} // namespace

TEST_CASE("standard gaussian scored at its mean") {
    // sigma * (2*pdf(0) - 1/sqrt(pi)) = sqrt(2/pi) - 1/sqrt(pi)
    CHECK_THAT(crps_gaussian(0.0, 1.0, 0.0), WithinAbs(0.2336949773, 1e-9));
}

TEST_CASE("degenerate forecasts score as absolute error") {
    CHECK(crps_gaussian(5.0, 0.0, 3.0) == 2.0);
    CHECK(crps_gaussian(1.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("closed form equals numerical integration across the grid") {
    for (double sigma : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        for (double z : {-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0}) {
            const double mean = 1.7; // arbitrary nonzero center
            const double y = mean + z * sigma;
            const double closed = crps_gaussian(mean, sigma * sigma, y);
            const double numeric =
                crps_riemann(single(mean, sigma * sigma), y, mean - 14 * sigma, mean + 14 * sigma,
                             sigma / 2000.0);
            INFO("sigma " << sigma << " z " << z);
            REQUIRE_THAT(closed, WithinAbs(numeric, 1e-6));
        }
    }
}

TEST_CASE("scale and translation behave like a proper distance") {
    const double base = crps_gaussian(1.0, 4.0, 2.5);
    CHECK_THAT(crps_gaussian(1.0 + 10, 4.0, 2.5 + 10), WithinAbs(base, 1e-12));
    CHECK_THAT(crps_gaussian(3.0, 36.0, 7.5), WithinAbs(3.0 * base, 1e-12));
    CHECK(base > 0.0);
}

TEST_CASE("mixture quadrature matches the riemann oracle") {
    ClgPosterior mix;
    mix.comps.push_back({0.3, -1.0, 2.0});
    mix.comps.push_back({0.7, 2.0, 0.5});
    const double y = 0.4;
    const double fast = crps_mixture(mix, y);
    const double slow = crps_riemann(mix, y, -25.0, 25.0, 1e-4);
    CHECK_THAT(fast, WithinAbs(slow, 1e-6));
}

TEST_CASE("a mixture of identical halves equals the single gaussian") {
    ClgPosterior mix;
    mix.comps.push_back({0.5, 1.5, 2.25});
    mix.comps.push_back({0.5, 1.5, 2.25});
    CHECK_THAT(crps_mixture(mix, 0.7), WithinAbs(crps_gaussian(1.5, 2.25, 0.7), 1e-8));
}

TEST_CASE("a point mass inside a mixture contributes a step") {
    ClgPosterior mix;
    mix.comps.push_back({0.5, 0.0, 0.0});
    mix.comps.push_back({0.5, 2.0, 1.0});
    const double y = 0.0;
    const double fast = crps_mixture(mix, y);
    const double slow = crps_riemann(mix, y, -15.0, 15.0, 1e-4);
    CHECK_THAT(fast, WithinAbs(slow, 2e-4));
    // A lone degenerate component falls back to absolute error.
    CHECK(crps_mixture(single(3.0, 0.0), 1.0) == 2.0);
}

TEST_CASE("malformed forecasts are rejected") {
    CHECK_THROWS_AS(crps_gaussian(0.0, -1.0, 0.0), Error);
    CHECK_THROWS_AS(crps_mixture(ClgPosterior{}, 0.0), Error);
}

TEST_CASE("mean absolute error") {
    CHECK_THAT(mean_absolute_error({1.0, 2.0, 3.0}, {1.5, 2.0, 1.0}), WithinAbs(2.5 / 3.0, 1e-12));
    CHECK(mean_absolute_error({4.0}, {4.0}) == 0.0);
    CHECK_THROWS_AS(mean_absolute_error({1.0, 2.0}, {1.0}), Error);
    CHECK_THROWS_AS(mean_absolute_error({}, {}), Error);
}

TEST_CASE("brier score") {
    CHECK(brier({1.0, 0.0}, 0) == 0.0);
    CHECK_THAT(brier({0.5, 0.5}, 0), WithinAbs(0.5, 1e-12));
    CHECK_THAT(brier({0.2, 0.3, 0.5}, 2), WithinAbs(0.04 + 0.09 + 0.25, 1e-12));
    CHECK_THROWS_AS(brier({0.5, 0.5}, 2), Error);
}
