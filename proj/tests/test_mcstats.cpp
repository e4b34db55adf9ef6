#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcstats.hpp"

using namespace rfk;

TEST_CASE("slope_fit recovers exact power laws") {
    std::vector<double> h, y;
    for (int k = 0; k < 6; ++k) {
        h.push_back(std::pow(0.5, k));
        y.push_back(h.back() * h.back());
    }
    auto fit = slope_fit(h, y);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));

    for (auto& v : y) v = 3.7;
    CHECK(slope_fit(h, y).slope == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("slope_fit tolerates mild noise") {
    Rng rng(99);
    std::vector<double> h, y;
    for (int k = 0; k < 8; ++k) {
        h.push_back(std::pow(0.5, k));
        y.push_back(std::pow(h.back(), 1.5) * (1.0 + 0.01 * (2.0 * rng.next_uniform() - 1.0)));
    }
    auto fit = slope_fit(h, y);
    CHECK(fit.slope > 1.45);
    CHECK(fit.slope < 1.55);
}

TEST_CASE("slope_fit input validation") {
    std::vector<double> h = {1.0, 0.5, 0.25};
    std::vector<double> y = {1.0, 0.5, 0.25};
    CHECK_THROWS_AS(slope_fit(h, y), std::invalid_argument);
    h = {1.0, 0.5, 0.25, -0.125};
    y = {1.0, 0.5, 0.25, 0.125};
    CHECK_THROWS_AS(slope_fit(h, y), std::invalid_argument);
}

TEST_CASE("mean_ci basics") {
    std::vector<double> c(64, 2.5);
    auto ci = mean_ci(c);
    CHECK(ci.mean == 2.5);
    CHECK(ci.halfwidth == 0.0);

    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> ax = {3.0, 6.0, 9.0, 12.0};
    CHECK(mean_ci(ax).mean == doctest::Approx(3.0 * mean_ci(x).mean).epsilon(1e-14));

    CHECK_THROWS_AS(mean_ci(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("mean_ci coverage over seeded trials") {
    // standard normal, M = 1e5 per trial, 99% CI should cover 0 nearly always
    const int trials = 100;
    const int m = 100000;
    int covered = 0;
    std::vector<double> x(m);
    for (int t = 0; t < trials; ++t) {
        Rng rng(1000 + t);
        for (int i = 0; i < m; ++i) x[i] = rng.next_normal();
        auto ci = mean_ci(x, 0.99);
        if (std::abs(ci.mean) <= ci.halfwidth) ++covered;
    }
    CHECK(covered >= 95);
}

TEST_CASE("seed ledger derivation is stable and collision-free on probes") {
    SeedLedger led(0xDEADBEEFULL);
    CHECK(led.key("rsde", 3, 7) == led.key("rsde", 3, 7));
    CHECK(led.key("rsde", 3, 7) != led.key("rsde", 3, 8));
    CHECK(led.key("rsde", 3, 7) != led.key("rsde", 4, 7));
    CHECK(led.key("rsde", 3, 7) != led.key("tangent", 3, 7));

    Rng a(led.key("x", 0, 0));
    Rng b(led.key("x", 0, 0));
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("adjacent substreams are empirically uncorrelated") {
    SeedLedger led(42);
    const int m = 100000;
    Rng a(led.key("corr", 0, 1));
    Rng b(led.key("corr", 0, 2));
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < m; ++i) {
        const double xa = a.next_normal();
        const double xb = b.next_normal();
        sa += xa;
        sb += xb;
        sab += xa * xb;
        saa += xa * xa;
        sbb += xb * xb;
    }
    const double corr = (sab - sa * sb / m) / std::sqrt((saa - sa * sa / m) * (sbb - sb * sb / m));
    CHECK(std::abs(corr) <= 0.01);
}

TEST_CASE("normal quantile sanity") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-4));
    CHECK(normal_quantile(0.995) == doctest::Approx(2.575829).epsilon(1e-4));
}
