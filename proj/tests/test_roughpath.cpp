#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "linalg.hpp"
#include "mcstats.hpp"
#include "roughpath.hpp"

using namespace rfk;
using namespace rfk::testing;

namespace {

/// Independent fine-grid quadrature of int_0^T dW_{0,r} (x) dW_r for a
/// closed-form path, trapezoid in the integrator variable.
std::vector<double> quadrature_oracle(const std::function<void(double, double*)>& f, int dim,
                                      double horizon, long fine_steps) {
    std::vector<double> w0(dim), wa(dim), wb(dim), acc(static_cast<size_t>(dim) * dim, 0.0);
    f(0.0, w0.data());
    f(0.0, wa.data());
    for (long q = 0; q < fine_steps; ++q) {
        f(horizon * (q + 1) / fine_steps, wb.data());
        for (int mu = 0; mu < dim; ++mu)
            for (int nu = 0; nu < dim; ++nu)
                acc[static_cast<size_t>(mu) * dim + nu] +=
                    0.5 * ((wa[mu] - w0[mu]) + (wb[mu] - w0[mu])) * (wb[nu] - wa[nu]);
        wa = wb;
    }
    return acc;
}

}  // namespace

TEST_CASE("canonical lift of the linear path has exact step areas") {
    auto samples = sample_path([](double t, double* w) { w[0] = t; }, 1, 1.0, 4, 64);
    RoughPath rp = canonical_lift(samples, 1, 1.0, 4, 64);
    CHECK(rp.geometric);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(rp.area(k)[0] - 1.0 / 32.0) <= 1e-12);
}

TEST_CASE("canonical lift of the zero path is zero") {
    auto samples = sample_path([](double, double* w) { w[0] = 0.0; }, 1, 1.0, 8, 16);
    RoughPath rp = canonical_lift(samples, 1, 1.0, 8, 16);
    for (double a : rp.areas) CHECK(a == 0.0);
}

TEST_CASE("circle lift level-2 matches a refined quadrature oracle") {
    RoughPath rp = canonical_circle(1.0, 64, 64);
    Window w = window(rp, 0, 64);
    auto f = [](double t, double* v) {
        v[0] = std::cos(t);
        v[1] = std::sin(t);
    };
    auto oracle = quadrature_oracle(f, 2, 1.0, 64L * 512);
    CHECK(std::abs(w.tensor[1] - oracle[1]) <= 1e-6);  // W^{12}
    CHECK(std::abs(w.tensor[2] - oracle[2]) <= 1e-6);  // W^{21}
}

TEST_CASE("canonical lift rejects mismatched sample counts") {
    std::vector<double> bad(10, 0.0);
    CHECK_THROWS_AS(canonical_lift(bad, 1, 1.0, 4, 64), std::invalid_argument);
}

TEST_CASE("Ito lift: diagonal left-sum identity and coarse increments") {
    SeedLedger led(7);
    Rng rng = led.stream("lift");
    auto lift = brownian_ito_lift(2, 1.0, 8, 16, rng);
    const RoughPath& rp = lift.path;
    CHECK_FALSE(rp.geometric);

    // replay the generator to recover the fine increments
    Rng replay = led.stream("lift");
    const double sq = std::sqrt(1.0 / (8.0 * 16.0));
    for (int k = 0; k < 8; ++k) {
        double sum_sq[2] = {0, 0};
        double delta[2] = {0, 0};
        for (int q = 0; q < 16; ++q)
            for (int i = 0; i < 2; ++i) {
                const double dw = sq * replay.next_normal();
                sum_sq[i] += dw * dw;
                delta[i] += dw;
            }
        for (int i = 0; i < 2; ++i) {
            const double lhs = rp.area(k)[static_cast<size_t>(i) * 2 + i];
            const double rhs = 0.5 * (delta[i] * delta[i] - sum_sq[i]);
            CHECK(std::abs(lhs - rhs) <= 1e-14);
            CHECK(lift.coarse_increments[static_cast<size_t>(k) * 2 + i] ==
                  doctest::Approx(delta[i]).epsilon(1e-14));
        }
    }

    CHECK_THROWS_AS(brownian_ito_lift(1, 1.0, 4, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(brownian_ito_lift(1, -1.0, 4, 8, rng), std::invalid_argument);
}

TEST_CASE("Ito lift Levy area statistics match the analytic oracle") {
    // E int W^1 dW^2 = 0 and Var = T^2/2 over [0,1]
    SeedLedger led(2024);
    const int m = 20000;
    std::vector<double> a12(m);
    for (int i = 0; i < m; ++i) {
        Rng rng = led.stream("levy", 0, i);
        auto lift = brownian_ito_lift(2, 1.0, 4, 32, rng);
        a12[i] = window(lift.path, 0, 4).tensor[1];
    }
    auto ci = mean_ci(a12, 0.99);
    CHECK(std::abs(ci.mean) <= 3.0 * ci.stderr_);
    const double sd = sample_stddev(a12);
    CHECK(sd * sd == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("geometrize produces a pathwise weakly geometric lift") {
    SeedLedger led(5);
    Rng rng = led.stream("geo");
    auto lift = brownian_ito_lift(2, 1.0, 16, 8, rng);
    RoughPath g = geometrize(lift.path);
    CHECK(g.geometric);
    for (int k = 0; k < 16; ++k) {
        CHECK(geometric_defect(g, k) <= 1e-12);
        auto w0 = g.value(k);
        auto w1 = g.value(k + 1);
        for (int i = 0; i < 2; ++i) {
            const double want = 0.5 * (w1[i] - w0[i]) * (w1[i] - w0[i]);
            CHECK(g.area(k)[static_cast<size_t>(i) * 2 + i] == doctest::Approx(want).epsilon(1e-12));
        }
        // antisymmetric part untouched
        const double before = 0.5 * (lift.path.area(k)[1] - lift.path.area(k)[2]);
        const double after = 0.5 * (g.area(k)[1] - g.area(k)[2]);
        CHECK(before == doctest::Approx(after).epsilon(1e-14));
    }
    // idempotent up to the sym/antisym split rounding
    RoughPath gg = geometrize(g);
    for (size_t q = 0; q < g.areas.size(); ++q)
        CHECK(std::abs(gg.areas[q] - g.areas[q]) <= 1e-15 * (1.0 + std::abs(g.areas[q])));
}

TEST_CASE("window basics and Chen identity") {
    RoughPath rp = canonical_circle(1.0, 16, 32);
    Window w0 = window(rp, 5, 5);
    CHECK(frob_norm(w0.delta) == 0.0);
    CHECK(frob_norm(w0.tensor) == 0.0);

    Window w2 = window(rp, 3, 5);
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = 0; nu < 2; ++nu) {
            const double d3 = rp.value(4)[mu] - rp.value(3)[mu];
            const double d4 = rp.value(5)[nu] - rp.value(4)[nu];
            const double want = rp.area(3)[static_cast<size_t>(mu) * 2 + nu] +
                                rp.area(4)[static_cast<size_t>(mu) * 2 + nu] + d3 * d4;
            CHECK(w2.tensor[static_cast<size_t>(mu) * 2 + nu] == doctest::Approx(want).epsilon(1e-14));
        }

    CHECK_THROWS_AS(window(rp, -1, 3), std::out_of_range);
    CHECK_THROWS_AS(window(rp, 3, 17), std::out_of_range);
}

TEST_CASE("Chen defect vanishes exhaustively on a small grid") {
    SeedLedger led(11);
    Rng rng = led.stream("chen");
    auto lift = brownian_ito_lift(2, 1.0, 24, 4, rng);
    double worst = 0.0;
    for (int i = 0; i <= 24; ++i)
        for (int m = i; m <= 24; ++m)
            for (int j = m; j <= 24; ++j) worst = std::max(worst, chen_defect(lift.path, i, m, j));
    CHECK(worst <= 1e-12);
}

TEST_CASE("shift freezes the path after T - s and preserves windows") {
    RoughPath rp = canonical_circle(1.0, 16, 32);
    RoughPath s0 = shift(rp, 0);
    CHECK(s0.values == rp.values);
    CHECK(s0.areas == rp.areas);

    const int m = 6;
    RoughPath sh = shift(rp, m);
    CHECK(sh.geometric == rp.geometric);
    for (int k = 0; k + m <= 16; ++k)
        for (int i = 0; i < 2; ++i)
            CHECK(sh.values[static_cast<size_t>(k) * 2 + i] == rp.values[static_cast<size_t>(k + m) * 2 + i]);
    for (int k = 16 - m; k <= 16; ++k)
        for (int i = 0; i < 2; ++i)
            CHECK(sh.values[static_cast<size_t>(k) * 2 + i] == rp.values[static_cast<size_t>(16) * 2 + i]);

    // frozen windows vanish
    Window frozen = window(sh, 16 - m, 16);
    CHECK(frob_norm(frozen.delta) == 0.0);
    CHECK(frob_norm(frozen.tensor) == 0.0);

    // shift then window(0,k) equals window(m, m+k)
    for (int k = 1; k + m <= 16; ++k) {
        Window a = window(sh, 0, k);
        Window b = window(rp, m, m + k);
        CHECK(frob_dist(a.delta, b.delta) <= 1e-15);
        CHECK(frob_dist(a.tensor, b.tensor) <= 1e-15);
    }

    CHECK_THROWS_AS(shift(rp, -1), std::invalid_argument);
    CHECK_THROWS_AS(shift(rp, 17), std::invalid_argument);
}

TEST_CASE("geometrize commutes with shift on grid nodes") {
    SeedLedger led(13);
    Rng rng = led.stream("comm");
    auto lift = brownian_ito_lift(2, 1.0, 12, 8, rng);
    RoughPath a = geometrize(shift(lift.path, 5));
    RoughPath b = shift(geometrize(lift.path), 5);
    CHECK(frob_dist(a.areas, b.areas) <= 1e-15);
    CHECK(frob_dist(a.values, b.values) == 0.0);
}

TEST_CASE("Holder norms: closed forms, scaling and shift contraction") {
    auto samples = sample_path([](double t, double* w) { w[0] = t; }, 1, 1.0, 16, 8);
    RoughPath line = canonical_lift(samples, 1, 1.0, 16, 8);
    auto hn = holder_norms(line, 1.0);
    CHECK(hn.level1 == doctest::Approx(1.0).epsilon(1e-12));

    RoughPath sinp = canonical_sin(1.0, 32, 16);
    std::vector<double> doubled = sample_path([](double t, double* w) { w[0] = 2.0 * std::sin(t); }, 1,
                                              1.0, 32, 16);
    RoughPath sin2 = canonical_lift(doubled, 1, 1.0, 32, 16);
    auto h1 = holder_norms(sinp, 0.5);
    auto h2 = holder_norms(sin2, 0.5);
    CHECK(h2.level1 == doctest::Approx(2.0 * h1.level1).epsilon(1e-12));
    CHECK(h2.level2 == doctest::Approx(4.0 * h1.level2).epsilon(1e-12));

    // same fine Brownian path, coarser vs finer subsampling
    SeedLedger led(17);
    Rng r1 = led.stream("hn");
    Rng r2 = led.stream("hn");
    auto coarse = brownian_ito_lift(1, 1.0, 32, 16, r1);
    auto fine = brownian_ito_lift(1, 1.0, 64, 8, r2);
    auto hc = holder_norms(coarse.path, 0.4);
    auto hf = holder_norms(fine.path, 0.4);
    CHECK(hc.level1 > 0.0);
    CHECK(hf.level1 >= hc.level1);

    // shift contracts both levels
    auto hs = holder_norms(shift(coarse.path, 10), 0.4);
    CHECK(hs.level1 <= hc.level1);
    CHECK(hs.level2 <= hc.level2);

    CHECK_THROWS_AS(holder_norms(line, 0.0), std::invalid_argument);
}

TEST_CASE("rho_alpha distance: identity, symmetry, linear response") {
    RoughPath a = canonical_sin(1.0, 32, 16);
    auto self = rho_alpha(a, a, 0.45);
    CHECK(self.total == 0.0);
    CHECK(self.level1_dist + self.level2_dist == self.total);

    auto perturbed = [&](double eps) {
        auto s = sample_path([eps](double t, double* w) { w[0] = std::sin(t) + eps * std::cos(2.0 * t); },
                             1, 1.0, 32, 16);
        return canonical_lift(s, 1, 1.0, 32, 16);
    };
    RoughPath b2 = perturbed(1e-2);
    RoughPath b3 = perturbed(1e-3);
    auto r2 = rho_alpha(a, b2, 0.45);
    auto r3 = rho_alpha(a, b3, 0.45);
    CHECK(rho_alpha(b2, a, 0.45).total == doctest::Approx(r2.total).epsilon(1e-14));
    CHECK(r2.level1_dist / r3.level1_dist == doctest::Approx(10.0).epsilon(0.01));

    RoughPath circle = canonical_circle(1.0, 32, 16);
    CHECK_THROWS_AS(rho_alpha(a, circle, 0.45), std::invalid_argument);
}

TEST_CASE("rough path JSON round trip and CSV shape") {
    RoughPath rp = canonical_circle(0.5, 8, 16);
    RoughPath back = rough_path_from_json(to_json(rp));
    CHECK(back.values == rp.values);
    CHECK(back.areas == rp.areas);
    CHECK(back.geometric == rp.geometric);
    CHECK(back.grid == rp.grid);

    auto vcsv = values_csv(rp);
    CHECK(vcsv.rfind("t,W_1,W_2", 0) == 0);
    auto acsv = areas_csv(rp);
    CHECK(acsv.rfind("k,A_11,A_12,A_21,A_22", 0) == 0);
}
