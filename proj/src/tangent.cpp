#include "tangent.hpp"

#include <cmath>

#include "integrator.hpp"
#include "parallel.hpp"

namespace rfk {

namespace {

double clamp_time(double t, double cap) { return (cap >= 0.0 && t > cap) ? cap : t; }

}  // namespace

LinearCoefficients tangent_linearization(const RsdeCoefficients& coeffs, const HybridPathEnsemble& base,
                                         double time_offset, double time_cap) {
    const int d = base.dim;
    const int n = base.state.driver_dim;
    const int m = base.brownian.dim;
    const Grid grid = base.grid;

    LinearCoefficients lc;
    lc.dim = d;
    lc.driver_dim = n;
    lc.bm_dim = m;

    auto node_time = [grid, time_offset, time_cap](int k) {
        return clamp_time(time_offset + grid.node(k), time_cap);
    };

    if (coeffs.has_drift()) {
        lc.G = [&coeffs, &base, node_time, d](int p, int k, std::span<double> out) {
            coeffs.drift.eval_dx(node_time(k), base.state.value_at(p, k), out);
            (void)d;
        };
    }
    if (coeffs.has_diffusion()) {
        lc.S = [&coeffs, &base, node_time, d, m](int p, int k, std::span<double> out) {
            // sigma dx is [(i*m + a)*d + j]; S wants [(a*d + i)*d + j]
            std::vector<double> grad(static_cast<size_t>(d) * m * d);
            coeffs.diffusion.eval_dx(node_time(k), base.state.value_at(p, k), grad);
            for (int a = 0; a < m; ++a)
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        out[(static_cast<size_t>(a) * d + i) * d + j] =
                            grad[(static_cast<size_t>(i) * m + a) * d + j];
        };
    }
    if (coeffs.has_rough()) {
        lc.f = [&coeffs, &base, node_time](int p, int k, std::span<double> out) {
            coeffs.rough.eval_dx(node_time(k), base.state.value_at(p, k), out);
        };
        lc.fp = [&coeffs, &base, node_time, d, n](int p, int k, std::span<double> out) {
            const double t = node_time(k);
            auto x = base.state.value_at(p, k);
            std::vector<double> hess(static_cast<size_t>(d) * n * d * d);
            std::vector<double> pdx(static_cast<size_t>(d) * n * n * d);
            coeffs.rough.eval_dxx(t, x, hess);
            coeffs.rough.eval_prime_dx(t, x, pdx);
            auto beta = base.state.gub_at(p, k);  // beta(t, X_k)
            for (int i = 0; i < d; ++i)
                for (int mu = 0; mu < n; ++mu)
                    for (int nu = 0; nu < n; ++nu)
                        for (int j = 0; j < d; ++j) {
                            double acc = pdx[((static_cast<size_t>(i) * n + mu) * n + nu) * d + j];
                            for (int a = 0; a < d; ++a)
                                acc += hess[((static_cast<size_t>(i) * n + mu) * d + j) * d + a] *
                                       beta[static_cast<size_t>(a) * n + nu];
                            out[((static_cast<size_t>(i) * n + mu) * n + nu) * d + j] = acc;
                        }
        };
    }
    return lc;
}

TangentEnsemble first_variation(const HybridPathEnsemble& base, const RsdeCoefficients& coeffs,
                                const RoughPath& rp, std::span<const double> direction,
                                double time_offset, double time_cap) {
    if (static_cast<int>(direction.size()) != base.dim)
        throw std::invalid_argument("first_variation: direction dimension mismatch");
    LinearCoefficients lc = tangent_linearization(coeffs, base, time_offset, time_cap);
    TangentEnsemble out;
    out.sol = solve_linear_rsde(lc, direction, rp, base.brownian);
    for (int i = 0; i < base.dim; ++i)
        if (direction[i] == 1.0 && out.direction_i < 0) out.direction_i = i;
    return out;
}

ControlledSample second_variation_forcing(const HybridPathEnsemble& base, const TangentEnsemble& yi,
                                          const TangentEnsemble& yj, const RsdeCoefficients& coeffs,
                                          const RoughPath& rp, double time_offset, double time_cap) {
    const int d = base.dim;
    const int n = base.state.driver_dim;
    const int m = base.brownian.dim;
    const int M = base.state.paths;
    const int nodes = base.state.nodes;
    const Grid grid = base.grid;

    // integrand samples for the three forcing pieces
    ControlledSample leb(M, nodes, d, n);
    ControlledSample ito(M, nodes, d * m, n);
    ControlledSample rough(M, nodes, d * n, n);
    const bool has_b = coeffs.has_drift();
    const bool has_s = coeffs.has_diffusion();
    const bool has_r = coeffs.has_rough();

    parallel_for(M, [&](long pl) {
        const int p = static_cast<int>(pl);
        std::vector<double> hb(static_cast<size_t>(d) * d * d);
        std::vector<double> hs(static_cast<size_t>(d) * m * d * d);
        std::vector<double> hbeta(static_cast<size_t>(d) * n * d * d);
        std::vector<double> tbeta(static_cast<size_t>(d) * n * d * d * d);
        std::vector<double> pdxx(static_cast<size_t>(d) * n * n * d * d);
        for (int k = 0; k < nodes; ++k) {
            const double t = clamp_time(time_offset + grid.node(k), time_cap);
            auto x = base.state.value_at(p, k);
            auto vyi = yi.sol.value_at(p, k);
            auto vyj = yj.sol.value_at(p, k);
            if (has_b) {
                coeffs.drift.eval_dxx(t, x, hb);
                auto out = leb.value_at(p, k);
                for (int i = 0; i < d; ++i) {
                    double acc = 0;
                    for (int a = 0; a < d; ++a)
                        for (int bq = 0; bq < d; ++bq)
                            acc += hb[(static_cast<size_t>(i) * d + a) * d + bq] * vyj[a] * vyi[bq];
                    out[i] = acc;
                }
            }
            if (has_s) {
                coeffs.diffusion.eval_dxx(t, x, hs);
                auto out = ito.value_at(p, k);
                for (int q = 0; q < d * m; ++q) {
                    double acc = 0;
                    for (int a = 0; a < d; ++a)
                        for (int bq = 0; bq < d; ++bq)
                            acc += hs[(static_cast<size_t>(q) * d + a) * d + bq] * vyj[a] * vyi[bq];
                    out[q] = acc;
                }
            }
            if (has_r) {
                coeffs.rough.eval_dxx(t, x, hbeta);
                coeffs.rough.eval_dxxx(t, x, tbeta);
                coeffs.rough.eval_prime_dxx(t, x, pdxx);
                auto beta = base.state.gub_at(p, k);
                auto gyi = yi.sol.gub_at(p, k);  // (f Y^i)
                auto gyj = yj.sol.gub_at(p, k);
                auto val = rough.value_at(p, k);
                auto gub = rough.gub_at(p, k);
                for (int i = 0; i < d; ++i)
                    for (int mu = 0; mu < n; ++mu) {
                        const size_t q = static_cast<size_t>(i) * n + mu;
                        double acc = 0;
                        for (int a = 0; a < d; ++a)
                            for (int bq = 0; bq < d; ++bq)
                                acc += hbeta[(q * d + a) * d + bq] * vyj[a] * vyi[bq];
                        val[q] = acc;
                        for (int nu = 0; nu < n; ++nu) {
                            double g = 0;
                            for (int a = 0; a < d; ++a)
                                for (int bq = 0; bq < d; ++bq) {
                                    const double hab = hbeta[(q * d + a) * d + bq];
                                    // third derivative paired with beta_nu
                                    double third = 0;
                                    for (int c = 0; c < d; ++c)
                                        third += tbeta[((q * d + a) * d + bq) * d + c] *
                                                 beta[static_cast<size_t>(c) * n + nu];
                                    g += third * vyj[a] * vyi[bq];
                                    g += hab * (gyj[static_cast<size_t>(a) * n + nu] * vyi[bq] +
                                                vyj[a] * gyi[static_cast<size_t>(bq) * n + nu]);
                                    g += pdxx[(q * n + nu) * d * d + static_cast<size_t>(a) * d + bq] *
                                         vyj[a] * vyi[bq];
                                }
                            gub[q * n + nu] = g;
                        }
                    }
            }
        }
    });

    // F = int D2b(Y,Y) dr + int D2sigma(Y,Y) dB + int (phi, phi') dW
    ControlledSample forcing(M, nodes, d, n);
    if (has_b) {
        IntegralPath part = lebesgue_integral(leb, grid);
        for (size_t q = 0; q < forcing.value.size(); ++q) forcing.value[q] += part.values[q];
    }
    if (has_s) {
        IntegralPath part = ito_integral(ito, base.brownian);
        for (size_t q = 0; q < forcing.value.size(); ++q) forcing.value[q] += part.values[q];
    }
    if (has_r) {
        IntegralPath part = rough_integral(rough, rp);
        for (size_t q = 0; q < forcing.value.size(); ++q) forcing.value[q] += part.values[q];
        forcing.gub = rough.value;  // F' = phi
    }
    return forcing;
}

TangentEnsemble second_variation(const HybridPathEnsemble& base, const TangentEnsemble& yi,
                                 const TangentEnsemble& yj, const RsdeCoefficients& coeffs,
                                 const RoughPath& rp, double time_offset, double time_cap) {
    ControlledSample forcing = second_variation_forcing(base, yi, yj, coeffs, rp, time_offset, time_cap);
    LinearCoefficients lc = tangent_linearization(coeffs, base, time_offset, time_cap);
    lc.forcing = &forcing;
    std::vector<double> zero(base.dim, 0.0);
    TangentEnsemble out;
    out.direction_i = yi.direction_i;
    out.direction_j = yj.direction_i;
    out.sol = solve_linear_rsde(lc, zero, rp, base.brownian);
    return out;
}

FdCheckReport fd_check(const std::function<ControlledSample(std::span<const double> x0)>& solve_at,
                       std::span<const double> x0, const TangentEnsemble& tangent, double h,
                       int order) {
    const int d = static_cast<int>(x0.size());
    const int dir = tangent.direction_i;
    if (dir < 0 || dir >= d) throw std::invalid_argument("fd_check: tangent lacks a basis direction");
    if (order != 2 && order != 4) throw std::invalid_argument("fd_check: order must be 2 or 4");
    double x_inf = 0.0;
    for (double v : x0) x_inf = std::max(x_inf, std::abs(v));
    if (h <= 0.0) h = 1e-2 * (1.0 + x_inf);

    std::vector<double> xp(x0.begin(), x0.end()), xm(x0.begin(), x0.end());
    xp[dir] += h;
    xm[dir] -= h;
    ControlledSample up = solve_at(xp);
    ControlledSample dn = solve_at(xm);
    ControlledSample up2, dn2;
    if (order == 4) {
        xp[dir] += h;  // x0 + 2h
        xm[dir] -= h;
        up2 = solve_at(xp);
        dn2 = solve_at(xm);
    }

    const int M = up.paths;
    const int last = up.nodes - 1;
    double abs_acc = 0.0, scale_acc = 0.0;
    std::vector<double> mean_fd(d, 0.0), mean_tg(d, 0.0);
    for (int p = 0; p < M; ++p) {
        auto a = up.value_at(p, last);
        auto b = dn.value_at(p, last);
        auto y = tangent.sol.value_at(p, last);
        double err = 0.0, sc = 0.0;
        for (int i = 0; i < d; ++i) {
            double fd = (a[i] - b[i]) / (2.0 * h);
            if (order == 4) {
                const double wide =
                    (up2.value_at(p, last)[i] - dn2.value_at(p, last)[i]) / (4.0 * h);
                fd = (4.0 * fd - wide) / 3.0;  // Richardson
            }
            err += (y[i] - fd) * (y[i] - fd);
            sc += fd * fd;
            mean_fd[i] += fd;
            mean_tg[i] += y[i];
        }
        abs_acc += std::sqrt(err);
        scale_acc += std::sqrt(sc);
    }
    FdCheckReport rep;
    const double scale = std::max(1e-300, scale_acc / M);
    rep.pathwise_rel_error = (abs_acc / M) / scale;
    double md = 0.0, ms = 0.0;
    for (int i = 0; i < d; ++i) {
        md += (mean_tg[i] / M - mean_fd[i] / M) * (mean_tg[i] / M - mean_fd[i] / M);
        ms += (mean_fd[i] / M) * (mean_fd[i] / M);
    }
    rep.mean_rel_error = std::sqrt(md) / std::max(1e-300, std::sqrt(ms));
    rep.step = h;
    rep.cancellation_suspected = h < 1e-4 * (1.0 + x_inf);
    return rep;
}

}  // namespace rfk
