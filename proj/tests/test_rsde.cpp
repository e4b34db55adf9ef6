#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mcstats.hpp"
#include "rsde.hpp"

using namespace rfk;
using namespace rfk::testing;

TEST_CASE("constant rough coefficient telescopes exactly") {
    RoughPath rp = canonical_circle(1.0, 64, 16);
    RsdeCoefficients coeffs;
    coeffs.rough = const_beta(1.0, 2);
    coeffs.rough.driver_dim = 2;
    coeffs.rough.state_dim = 2;
    coeffs.rough.out_dim = 2;
    coeffs.rough.value = [](double, std::span<const double>, std::span<double> out) {
        // beta = [[1, 0], [0, 2]]
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 2.0;
    };
    coeffs.rough.dx = [](double, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };
    BrownianPaths noise(1, 64, 1);
    std::vector<double> x0 = {0.5, -0.25};
    auto ens = solve_rsde(coeffs, x0, rp, noise);
    const double dw1 = rp.values[128] - rp.values[0];
    const double dw2 = rp.values[129] - rp.values[1];
    CHECK(ens.state.value_at(0, 64)[0] == doctest::Approx(0.5 + dw1).epsilon(1e-13));
    CHECK(ens.state.value_at(0, 64)[1] == doctest::Approx(-0.25 + 2.0 * dw2).epsilon(1e-13));
    CHECK(ensemble_csv(ens).rfind("path_id,k,t,X_1,X_2", 0) == 0);
}

TEST_CASE("geometric Brownian motion mean matches the closed form") {
    const double mu = 0.05, nu = 0.2, T = 1.0, x0v = 1.0;
    const int M = 50000, N = 256;
    SeedLedger led(31);
    auto bm = sample_brownian(M, N, 1, T, led, "gbm");

    RsdeCoefficients coeffs;
    coeffs.drift.rows = 1;
    coeffs.drift.cols = 1;
    coeffs.drift.state_dim = 1;
    coeffs.drift.value = [mu](double, std::span<const double> x, std::span<double> out) { out[0] = mu * x[0]; };
    coeffs.diffusion.rows = 1;
    coeffs.diffusion.cols = 1;
    coeffs.diffusion.state_dim = 1;
    coeffs.diffusion.value = [nu](double, std::span<const double> x, std::span<double> out) {
        out[0] = nu * x[0];
    };

    RoughPath trivial(Grid(T, N), 1);  // zero driver, no rough term anyway
    std::vector<double> x0 = {x0v};
    auto ens = solve_rsde(coeffs, x0, trivial, bm);
    std::vector<double> xt(M);
    for (int p = 0; p < M; ++p) xt[p] = ens.state.value_at(p, N)[0];
    auto ci = mean_ci(xt, 0.99);
    CHECK(std::abs(ci.mean - x0v * std::exp(mu * T)) <= 3.0 * ci.stderr_);
}

TEST_CASE("pure rough linear equation converges at first order") {
    // dX = X dW, W = sin t canonical: X_T = x0 exp(sin T)
    const double exact = 0.7 * std::exp(std::sin(1.0));
    std::vector<double> errs;
    for (int N : {256, 512}) {
        RoughPath rp = canonical_sin(1.0, N, 16);
        RsdeCoefficients coeffs;
        coeffs.rough = linear_beta(1.0);
        BrownianPaths noise(1, N, 1);
        std::vector<double> x0 = {0.7};
        auto ens = solve_rsde(coeffs, x0, rp, noise);
        errs.push_back(std::abs(ens.state.value_at(0, N)[0] - exact));
    }
    CHECK(errs[0] / errs[1] >= 1.9);
}

TEST_CASE("with beta = 0 the scheme is Euler-Maruyama bitwise") {
    const int M = 16, N = 32;
    SeedLedger led(37);
    auto bm = sample_brownian(M, N, 1, 1.0, led, "em");

    RsdeCoefficients coeffs;
    coeffs.drift.rows = coeffs.drift.cols = coeffs.drift.state_dim = 1;
    coeffs.drift.value = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = std::sin(x[0]);
    };
    coeffs.diffusion.rows = coeffs.diffusion.cols = coeffs.diffusion.state_dim = 1;
    coeffs.diffusion.value = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = 0.3 + 0.1 * std::cos(x[0]);
    };

    RoughPath trivial(Grid(1.0, N), 1);
    std::vector<double> x0 = {0.4};
    auto ens = solve_rsde(coeffs, x0, trivial, bm);

    const double dt = 1.0 / N;
    for (int p = 0; p < M; ++p) {
        double x = 0.4;
        for (int k = 0; k < N; ++k) {
            double xn = x;
            xn += std::sin(x) * dt;
            double acc = 0.0;
            acc += (0.3 + 0.1 * std::cos(x)) * bm.at(p, k)[0];
            xn += acc;
            x = xn;
            CHECK(ens.state.value_at(p, k + 1)[0] == x);  // bitwise
        }
    }
}

TEST_CASE("deterministic given the rough path when sigma = b = 0") {
    RoughPath rp = canonical_sin(1.0, 64, 8);
    RsdeCoefficients coeffs;
    coeffs.rough = tanh_beta(0.8);
    BrownianPaths noise(4, 64, 1);
    SeedLedger led(39);
    Rng r = led.stream("noise");
    for (auto& v : noise.inc) v = 0.1 * r.next_normal();  // ignored by dynamics
    std::vector<double> x0 = {0.2};
    auto ens = solve_rsde(coeffs, x0, rp, noise);
    for (int p = 1; p < 4; ++p)
        for (int k = 0; k <= 64; ++k)
            CHECK(ens.state.value_at(p, k)[0] == ens.state.value_at(0, k)[0]);
}

TEST_CASE("Gubinelli derivative invariant is recomputable") {
    SeedLedger led(41);
    Rng rng = led.stream("gub");
    auto lift = brownian_ito_lift(1, 1.0, 64, 8, rng);
    RoughPath strat = geometrize(lift.path);
    auto bm = sample_brownian(8, 64, 1, 1.0, led, "gubnoise");

    RsdeCoefficients coeffs;
    coeffs.rough = tanh_beta(0.6);
    coeffs.diffusion = const_diffusion(0.2);
    std::vector<double> x0 = {0.1};
    auto ens = solve_rsde(coeffs, x0, strat, bm);
    for (int p = 0; p < 8; ++p)
        for (int k = 0; k <= 64; ++k) {
            double want;
            coeffs.rough.eval(strat.grid.node(k), ens.state.value_at(p, k), {&want, 1});
            CHECK(std::abs(ens.state.gub_at(p, k)[0] - want) <= 1e-12);
        }
}

TEST_CASE("NaN guard reports path and step") {
    RoughPath rp(Grid(1.0, 8), 1);
    BrownianPaths noise(2, 8, 1);
    RsdeCoefficients coeffs;
    coeffs.drift.rows = coeffs.drift.cols = coeffs.drift.state_dim = 1;
    coeffs.drift.value = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 1e2;
    };
    std::vector<double> x0 = {0.0};
    CHECK_THROWS_AS(solve_rsde(coeffs, x0, rp, noise), SimulationError);
}

TEST_CASE("linear solver: forcing only, closed form, homogeneity") {
    const int N = 256;
    RoughPath rp = canonical_sin(1.0, N, 16);
    BrownianPaths noise(2, N, 1);

    // pure forcing: Y = xi + F
    {
        ControlledSample forcing(2, N + 1, 1, 1);
        for (int p = 0; p < 2; ++p)
            for (int k = 0; k <= N; ++k) forcing.value_at(p, k)[0] = std::sin(3.0 * k / N + p);
        LinearCoefficients lc;
        lc.dim = 1;
        lc.driver_dim = 1;
        lc.bm_dim = 1;
        lc.forcing = &forcing;
        std::vector<double> xi = {2.0};
        auto y = solve_linear_rsde(lc, xi, rp, noise);
        for (int p = 0; p < 2; ++p)
            for (int k = 0; k <= N; ++k)
                CHECK(y.value_at(p, k)[0] ==
                      doctest::Approx(2.0 + forcing.value_at(p, k)[0] - forcing.value_at(p, 0)[0])
                          .epsilon(1e-13));
    }

    // scalar f constant: Y_T = xi exp(c dW_{0,T})
    {
        const double cf = 0.8;
        LinearCoefficients lc;
        lc.dim = 1;
        lc.driver_dim = 1;
        lc.bm_dim = 1;
        lc.f = [cf](int, int, std::span<double> out) { out[0] = cf; };
        std::vector<double> xi = {0.5};
        auto y = solve_linear_rsde(lc, xi, rp, noise);
        const double dw = rp.values[N] - rp.values[0];
        CHECK(y.value_at(0, N)[0] == doctest::Approx(0.5 * std::exp(cf * dw)).epsilon(2e-4));

        // homogeneity: doubling xi doubles the path bitwise
        std::vector<double> xi2 = {1.0};
        auto y2 = solve_linear_rsde(lc, xi2, rp, noise);
        for (int k = 0; k <= N; ++k) CHECK(y2.value_at(0, k)[0] == 2.0 * y.value_at(0, k)[0]);
    }
}

TEST_CASE("Davie remainder scaling table") {
    SeedLedger led(47);

    // constant beta, b = sigma = 0: remainder identically zero
    {
        RoughPath rp = canonical_sin(1.0, 128, 8);
        RsdeCoefficients coeffs;
        coeffs.rough = const_beta(1.3);
        BrownianPaths noise(1, 128, 1);
        std::vector<double> x0 = {0.0};
        auto ens = solve_rsde(coeffs, x0, rp, noise);
        auto tab = davie_remainder_scaling(ens, coeffs, rp, 2);
        CHECK(tab.zero);
    }

    // GBM: local Euler-Maruyama error, moment slope about 1
    {
        const int M = 2000, N = 512;
        auto bm = sample_brownian(M, N, 1, 1.0, led, "dav");
        RsdeCoefficients coeffs;
        coeffs.drift.rows = coeffs.drift.cols = coeffs.drift.state_dim = 1;
        coeffs.drift.value = [](double, std::span<const double> x, std::span<double> out) {
            out[0] = 0.05 * x[0];
        };
        coeffs.diffusion.rows = coeffs.diffusion.cols = coeffs.diffusion.state_dim = 1;
        coeffs.diffusion.value = [](double, std::span<const double> x, std::span<double> out) {
            out[0] = 0.2 * x[0];
        };
        RoughPath trivial(Grid(1.0, N), 1);
        std::vector<double> x0 = {1.0};
        auto ens = solve_rsde(coeffs, x0, trivial, bm);
        auto tab = davie_remainder_scaling(ens, coeffs, trivial, 2);
        CHECK(tab.slope_moment >= 1.0 - 0.15);
    }
}

TEST_CASE("stability probe: zero, initial-value and driver perturbations") {
    SeedLedger led(53);
    const int M = 500, N = 128;
    auto bm = sample_brownian(M, N, 1, 1.0, led, "stab");
    Rng rl = led.stream("stablift");
    auto lift = brownian_ito_lift(1, 1.0, N, 8, rl);
    RoughPath strat = geometrize(lift.path);

    RsdeCoefficients coeffs;
    coeffs.drift.rows = coeffs.drift.cols = coeffs.drift.state_dim = 1;
    coeffs.drift.value = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = 0.2 * std::sin(x[0]);
    };
    coeffs.diffusion = const_diffusion(0.25);
    coeffs.rough = tanh_beta(0.5);

    std::vector<double> x0 = {0.3};
    auto base = solve_rsde(coeffs, x0, strat, bm);

    auto same = stability_probe(base, base, strat, strat, 0.45, 2);
    CHECK(same.sol_dist == 0.0);
    CHECK(same.init_dist == 0.0);
    CHECK(same.driver.total == 0.0);

    // initial-value perturbation: response ratio stable across h
    double ratio[2];
    int idx = 0;
    for (double h : {1e-2, 1e-3}) {
        std::vector<double> xp = {0.3 + h};
        auto pert = solve_rsde(coeffs, xp, strat, bm);
        auto rep = stability_probe(base, pert, strat, strat, 0.45, 2);
        ratio[idx++] = rep.sol_dist / h;
    }
    CHECK(ratio[0] / ratio[1] <= 1.5);
    CHECK(ratio[1] / ratio[0] <= 1.5);

    // driver perturbation via a smooth canonical component
    auto perturb_driver = [&](double eps) {
        RoughPath p = strat;
        auto extra = sample_path([eps](double t, double* w) { w[0] = eps * std::sin(2.0 * t); }, 1, 1.0,
                                 N, 8);
        // add the smooth path on the nodes and re-geometrize the sum areas
        RoughPath lifted = canonical_lift(extra, 1, 1.0, N, 8);
        for (size_t i = 0; i < p.values.size(); ++i) p.values[i] += lifted.values[i];
        return geometrize(p);
    };
    double dratio[2];
    idx = 0;
    for (double eps : {1e-2, 1e-3}) {
        RoughPath pd = perturb_driver(eps);
        auto pert = solve_rsde(coeffs, x0, pd, bm);
        auto rep = stability_probe(base, pert, strat, pd, 0.45, 2);
        dratio[idx++] = rep.sol_dist / rep.driver.total;
    }
    CHECK(dratio[0] / dratio[1] <= 2.0);
    CHECK(dratio[1] / dratio[0] <= 2.0);
}

TEST_CASE("grid-halving self-consistency decreases over doublings") {
    SeedLedger led(59);
    const int M = 256;
    const int base_fine = 1024;
    RsdeCoefficients coeffs;
    coeffs.drift.rows = coeffs.drift.cols = coeffs.drift.state_dim = 1;
    coeffs.drift.value = [](double, std::span<const double> x, std::span<double> out) {
        out[0] = 0.2 * std::sin(x[0]);
    };
    coeffs.diffusion = const_diffusion(0.3);
    coeffs.rough = tanh_beta(0.6);
    std::vector<double> x0 = {0.25};

    // one fine rough driver and one fine Brownian bundle shared by all levels
    Rng rlift = led.stream("halflift");
    auto fine_lift = brownian_ito_lift(1, 1.0, base_fine, 2, rlift);
    auto fine_bm = sample_brownian(M, base_fine, 1, 1.0, led, "halfnoise");

    auto solve_at = [&](int N) {
        const int R = base_fine / N;
        RoughPath rp(Grid(1.0, N), 1);
        for (int k = 0; k <= N; ++k) rp.values[k] = fine_lift.path.values[static_cast<size_t>(k) * R];
        for (int k = 0; k < N; ++k) {
            WindowAccumulator acc(fine_lift.path, k * R);
            while (acc.right() < (k + 1) * R) acc.extend();
            rp.areas[k] = acc.tensor()[0];
        }
        RoughPath strat = geometrize(rp);
        BrownianPaths noise(M, N, 1);
        for (int p = 0; p < M; ++p)
            for (int k = 0; k < N; ++k) {
                double acc2 = 0.0;
                for (int q = 0; q < R; ++q) acc2 += fine_bm.at(p, k * R + q)[0];
                noise.at(p, k)[0] = acc2;
            }
        auto ens = solve_rsde(coeffs, x0, strat, noise);
        std::vector<double> xt(M);
        for (int p = 0; p < M; ++p) xt[p] = ens.state.value_at(p, N)[0];
        return xt;
    };

    auto l2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (int p = 0; p < M; ++p) s += (a[p] - b[p]) * (a[p] - b[p]);
        return std::sqrt(s / M);
    };

    auto x64 = solve_at(64), x128 = solve_at(128), x256 = solve_at(256), x512 = solve_at(512);
    const double d1 = l2(x64, x128), d2 = l2(x128, x256), d3 = l2(x256, x512);
    CHECK(d1 > d2);
    CHECK(d2 > d3);
}

TEST_CASE("time-controlled rough coefficient uses its prime for second order") {
    // dX = cos(W_t) dW on a smooth lift: X_T = x0 + sin(W_T) - sin(W_0).
    // With beta' = -sin(W_t) supplied the scheme is second order; dropping the
    // prime degrades it to first order.
    const double exact = 0.2 + std::sin(std::sin(1.0));
    auto wat = [](double t) { return std::sin(t); };

    auto solve_with = [&](int N, bool with_prime) {
        RoughPath rp = canonical_sin(1.0, N, 16);
        RsdeCoefficients coeffs;
        coeffs.rough.out_dim = coeffs.rough.driver_dim = coeffs.rough.state_dim = 1;
        coeffs.rough.value = [wat](double t, std::span<const double>, std::span<double> out) {
            out[0] = std::cos(wat(t));
        };
        coeffs.rough.dx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
        coeffs.rough.dxx = coeffs.rough.dx;
        if (with_prime)
            coeffs.rough.prime = [wat](double t, std::span<const double>, std::span<double> out) {
                out[0] = -std::sin(wat(t));
            };
        BrownianPaths noise(1, N, 1);
        std::vector<double> x0 = {0.2};
        auto ens = solve_rsde(coeffs, x0, rp, noise);
        return ens.state.value_at(0, N)[0];
    };

    const double with256 = std::abs(solve_with(256, true) - exact);
    const double with512 = std::abs(solve_with(512, true) - exact);
    const double without256 = std::abs(solve_with(256, false) - exact);
    CHECK(with256 / with512 >= 1.9);
    CHECK(with256 <= without256 / 20.0);
}
