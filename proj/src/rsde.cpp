#include "rsde.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "linalg.hpp"
#include "parallel.hpp"

namespace rfk {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double clamp_time(double t, double cap) { return (cap >= 0.0 && t > cap) ? cap : t; }

struct FailureSlot {
    std::mutex mu;
    std::exception_ptr ep;
    void capture() {
        std::lock_guard<std::mutex> lock(mu);
        if (!ep) ep = std::current_exception();
    }
    void rethrow_if_set() {
        if (ep) std::rethrow_exception(ep);
    }
};

}  // namespace

HybridPathEnsemble solve_rsde(const RsdeCoefficients& coeffs, std::span<const double> x0,
                              const RoughPath& rp, const BrownianPaths& brownian,
                              double time_offset, double time_cap) {
    const int d = static_cast<int>(x0.size());
    const int n = rp.dim;
    const int N = rp.grid.steps;
    const int M = brownian.paths;
    const int m = brownian.dim;
    if (brownian.steps != N) throw std::invalid_argument("solve_rsde: driver and noise grids differ");
    if (coeffs.has_rough() && (coeffs.rough.state_dim != d || coeffs.rough.driver_dim != n))
        throw std::invalid_argument("solve_rsde: rough coefficient shape mismatch");

    HybridPathEnsemble ens;
    ens.grid = rp.grid;
    ens.dim = d;
    ens.state = ControlledSample(M, N + 1, d, n);
    ens.brownian = brownian;

    const double dt = rp.grid.dt();
    FailureSlot failure;
    parallel_for(M, [&](long pl) {
        const int p = static_cast<int>(pl);
        try {
            std::vector<double> bval(d), sval(static_cast<size_t>(d) * m);
            std::vector<double> lvl2(static_cast<size_t>(d) * n * n);
            for (int i = 0; i < d; ++i) ens.state.value_at(p, 0)[i] = x0[i];
            for (int k = 0; k <= N; ++k) {
                const double t = clamp_time(time_offset + rp.grid.node(k), time_cap);
                auto x = ens.state.value_at(p, k);
                if (!all_finite(x)) throw SimulationError(p, k);
                if (coeffs.has_rough()) coeffs.rough.eval(t, x, ens.state.gub_at(p, k));
                if (k == N) break;
                auto xn = ens.state.value_at(p, k + 1);
                for (int i = 0; i < d; ++i) xn[i] = x[i];
                if (coeffs.has_drift()) {
                    coeffs.drift.eval(t, x, bval);
                    for (int i = 0; i < d; ++i) xn[i] += bval[i] * dt;
                }
                if (coeffs.has_diffusion()) {
                    coeffs.diffusion.eval(t, x, sval);
                    auto db = brownian.at(p, k);
                    for (int i = 0; i < d; ++i) {
                        double acc = 0;
                        for (int a = 0; a < m; ++a) acc += sval[static_cast<size_t>(i) * m + a] * db[a];
                        xn[i] += acc;
                    }
                }
                if (coeffs.has_rough()) {
                    auto bta = ens.state.gub_at(p, k);  // beta(t, X_k), just written
                    auto w0 = rp.value(k);
                    auto w1 = rp.value(k + 1);
                    for (int i = 0; i < d; ++i) {
                        double acc = 0;
                        for (int mu = 0; mu < n; ++mu)
                            acc += bta[static_cast<size_t>(i) * n + mu] * (w1[mu] - w0[mu]);
                        xn[i] += acc;
                    }
                    coeffs.rough.eval_self_level2(t, x, lvl2);
                    contract_level2(lvl2, rp.area(k), d, n, xn);
                }
            }
        } catch (...) {
            failure.capture();
        }
    });
    failure.rethrow_if_set();
    return ens;
}

ControlledSample solve_linear_rsde(const LinearCoefficients& lc, std::span<const double> xi,
                                   const RoughPath& rp, const BrownianPaths& brownian) {
    const int d = lc.dim;
    const int n = lc.driver_dim;
    const int m = lc.bm_dim;
    const int N = rp.grid.steps;
    const int M = brownian.paths;
    if (rp.dim != n) throw std::invalid_argument("solve_linear_rsde: driver dimension mismatch");
    if (brownian.steps != N) throw std::invalid_argument("solve_linear_rsde: noise grid mismatch");
    const bool shared_xi = static_cast<int>(xi.size()) == d;
    if (!shared_xi && static_cast<int>(xi.size()) != M * d)
        throw std::invalid_argument("solve_linear_rsde: xi must be d or M*d values");
    if (lc.forcing && (lc.forcing->paths != M || lc.forcing->nodes != N + 1 || lc.forcing->val_dim != d))
        throw std::invalid_argument("solve_linear_rsde: forcing shape mismatch");

    ControlledSample out(M, N + 1, d, n);
    FailureSlot failure;
    parallel_for(M, [&](long pl) {
        const int p = static_cast<int>(pl);
        try {
            std::vector<double> G(static_cast<size_t>(d) * d), S(static_cast<size_t>(m) * d * d);
            std::vector<double> f(static_cast<size_t>(d) * n * d), fp(static_cast<size_t>(d) * n * n * d);
            std::vector<double> fy(static_cast<size_t>(d) * n);
            std::vector<double> phi2(static_cast<size_t>(d) * n * n);
            const double dt = rp.grid.dt();
            {
                auto y0 = out.value_at(p, 0);
                const double* src = shared_xi ? xi.data() : xi.data() + static_cast<size_t>(p) * d;
                std::copy(src, src + d, y0.begin());
            }
            for (int k = 0; k <= N; ++k) {
                auto y = out.value_at(p, k);
                if (!all_finite(y)) throw SimulationError(p, k);
                // f Y, and the solution Gubinelli derivative f Y + F'
                auto yg = out.gub_at(p, k);
                std::fill(fy.begin(), fy.end(), 0.0);
                if (lc.f) {
                    lc.f(p, k, f);
                    for (int q = 0; q < d * n; ++q) {
                        double acc = 0;
                        for (int j = 0; j < d; ++j) acc += f[static_cast<size_t>(q) * d + j] * y[j];
                        fy[q] = acc;
                    }
                }
                std::copy(fy.begin(), fy.end(), yg.begin());
                if (lc.forcing) {
                    auto fg = lc.forcing->gub_at(p, k);
                    for (int q = 0; q < d * n; ++q) yg[q] += fg[q];
                }
                if (k == N) break;

                auto yn = out.value_at(p, k + 1);
                for (int i = 0; i < d; ++i) yn[i] = y[i];
                if (lc.forcing) {
                    auto f0 = lc.forcing->value_at(p, k);
                    auto f1 = lc.forcing->value_at(p, k + 1);
                    for (int i = 0; i < d; ++i) yn[i] += f1[i] - f0[i];
                }
                if (lc.G) {
                    lc.G(p, k, G);
                    for (int i = 0; i < d; ++i) {
                        double acc = 0;
                        for (int j = 0; j < d; ++j) acc += G[static_cast<size_t>(i) * d + j] * y[j];
                        yn[i] += acc * dt;
                    }
                }
                if (lc.S) {
                    lc.S(p, k, S);
                    auto db = brownian.at(p, k);
                    for (int a = 0; a < m; ++a)
                        for (int i = 0; i < d; ++i) {
                            double acc = 0;
                            for (int j = 0; j < d; ++j)
                                acc += S[(static_cast<size_t>(a) * d + i) * d + j] * y[j];
                            yn[i] += acc * db[a];
                        }
                }
                if (lc.f) {
                    auto w0 = rp.value(k);
                    auto w1 = rp.value(k + 1);
                    for (int i = 0; i < d; ++i) {
                        double acc = 0;
                        for (int mu = 0; mu < n; ++mu)
                            acc += fy[static_cast<size_t>(i) * n + mu] * (w1[mu] - w0[mu]);
                        yn[i] += acc;
                    }
                    // second-level coefficient f' Y + f (f Y + F')
                    std::fill(phi2.begin(), phi2.end(), 0.0);
                    if (lc.fp) {
                        lc.fp(p, k, fp);
                        for (int q = 0; q < d * n * n; ++q) {
                            double acc = 0;
                            for (int j = 0; j < d; ++j) acc += fp[static_cast<size_t>(q) * d + j] * y[j];
                            phi2[q] = acc;
                        }
                    }
                    for (int i = 0; i < d; ++i)
                        for (int nu = 0; nu < n; ++nu)
                            for (int mu = 0; mu < n; ++mu) {
                                double acc = 0;
                                for (int j = 0; j < d; ++j)
                                    acc += f[(static_cast<size_t>(i) * n + nu) * d + j] *
                                           yg[static_cast<size_t>(j) * n + mu];
                                phi2[(static_cast<size_t>(i) * n + nu) * n + mu] += acc;
                            }
                    contract_level2(phi2, rp.area(k), d, n, yn);
                }
            }
        } catch (...) {
            failure.capture();
        }
    });
    failure.rethrow_if_set();
    return out;
}

ExpansionResidualTable davie_remainder_scaling(const HybridPathEnsemble& fine,
                                               const RsdeCoefficients& coeffs, const RoughPath& fine_rp,
                                               int p, int coarse_factor, double time_offset,
                                               double time_cap) {
    if (p != 2 && p != 4) throw std::invalid_argument("davie_remainder_scaling: p must be 2 or 4");
    if (coarse_factor < 1) throw std::invalid_argument("davie_remainder_scaling: bad coarse factor");
    const int d = fine.dim;
    const int n = fine_rp.dim;
    const int m = fine.brownian.dim;
    const int N = fine_rp.grid.steps;
    if (fine.grid.steps != N) throw std::invalid_argument("davie_remainder_scaling: missing fine reference");

    std::vector<int> spans_steps;
    for (int h = coarse_factor; 4 * h <= N; h *= 2) spans_steps.push_back(h);
    if (spans_steps.size() < 4)
        throw std::invalid_argument("davie_remainder_scaling: fewer than 4 dyadic levels");

    const int M = fine.state.paths;
    const double dt = fine_rp.grid.dt();

    // Brownian partial sums per path, so span increments are O(1)
    std::vector<double> bm_cum(static_cast<size_t>(M) * (N + 1) * m, 0.0);
    parallel_for(M, [&](long pl) {
        const int pp = static_cast<int>(pl);
        for (int k = 0; k < N; ++k) {
            auto db = fine.brownian.at(pp, k);
            const double* c0 = bm_cum.data() + (static_cast<size_t>(pp) * (N + 1) + k) * m;
            double* c1 = bm_cum.data() + (static_cast<size_t>(pp) * (N + 1) + k + 1) * m;
            for (int a = 0; a < m; ++a) c1[a] = c0[a] + db[a];
        }
    });

    ExpansionResidualTable tab;
    std::vector<double> res(d), mres(d), lvl2(static_cast<size_t>(d) * n * n);
    std::vector<double> bval(d), sval(static_cast<size_t>(d) * m);
    for (int h : spans_steps) {
        double acc = 0;
        long count = 0;
        double mean_acc = 0;
        long mean_count = 0;
        const int stride = std::max(1, h / coarse_factor);
        for (int s = 0; s + h <= N; s += stride) {
            Window w = window(fine_rp, s, s + h);
            std::fill(mres.begin(), mres.end(), 0.0);
            const double t = clamp_time(time_offset + fine_rp.grid.node(s), time_cap);
            for (int path = 0; path < M; ++path) {
                auto x0 = fine.state.value_at(path, s);
                auto x1 = fine.state.value_at(path, s + h);
                for (int i = 0; i < d; ++i) res[i] = x1[i] - x0[i];
                if (coeffs.has_drift()) {
                    coeffs.drift.eval(t, x0, bval);
                    for (int i = 0; i < d; ++i) res[i] -= bval[i] * (h * dt);
                }
                if (coeffs.has_diffusion()) {
                    coeffs.diffusion.eval(t, x0, sval);
                    const double* c0 = bm_cum.data() + (static_cast<size_t>(path) * (N + 1) + s) * m;
                    const double* c1 = bm_cum.data() + (static_cast<size_t>(path) * (N + 1) + s + h) * m;
                    for (int i = 0; i < d; ++i)
                        for (int a = 0; a < m; ++a)
                            res[i] -= sval[static_cast<size_t>(i) * m + a] * (c1[a] - c0[a]);
                }
                if (coeffs.has_rough()) {
                    auto beta0 = fine.state.gub_at(path, s);
                    for (int i = 0; i < d; ++i)
                        for (int mu = 0; mu < n; ++mu)
                            res[i] -= beta0[static_cast<size_t>(i) * n + mu] * w.delta[mu];
                    coeffs.rough.eval_self_level2(t, x0, lvl2);
                    for (int i = 0; i < d; ++i)
                        for (int nu = 0; nu < n; ++nu)
                            for (int mu = 0; mu < n; ++mu)
                                res[i] -= lvl2[(static_cast<size_t>(i) * n + nu) * n + mu] *
                                          w.tensor[static_cast<size_t>(mu) * n + nu];
                }
                for (int i = 0; i < d; ++i) mres[i] += res[i];
                acc += std::pow(frob_norm(res), p);
                ++count;
            }
            for (double& x : mres) x /= M;
            mean_acc += frob_norm(mres);
            ++mean_count;
        }
        tab.spans.push_back(h * dt);
        tab.moment.push_back(std::pow(acc / count, 1.0 / p));
        tab.mean_residual.push_back(mean_acc / mean_count);
    }

    tab.zero = *std::max_element(tab.moment.begin(), tab.moment.end()) <= 1e-13;
    if (*std::min_element(tab.moment.begin(), tab.moment.end()) > 0.0)
        tab.slope_moment = slope_fit(tab.spans, tab.moment).slope;
    if (*std::min_element(tab.mean_residual.begin(), tab.mean_residual.end()) > 0.0)
        tab.slope_mean = slope_fit(tab.spans, tab.mean_residual).slope;
    return tab;
}

double ensemble_lp_distance(const ControlledSample& a, const ControlledSample& b, int p) {
    if (a.paths != b.paths || a.nodes != b.nodes || a.val_dim != b.val_dim)
        throw std::invalid_argument("ensemble_lp_distance: shape mismatch");
    double worst = 0.0;
    std::vector<double> diff(a.val_dim);
    for (int k = 0; k < a.nodes; ++k) {
        double acc = 0;
        for (int path = 0; path < a.paths; ++path) {
            auto xa = a.value_at(path, k);
            auto xb = b.value_at(path, k);
            for (int i = 0; i < a.val_dim; ++i) diff[i] = xa[i] - xb[i];
            acc += std::pow(frob_norm(diff), p);
        }
        worst = std::max(worst, std::pow(acc / a.paths, 1.0 / p));
    }
    return worst;
}

StabilityReport stability_probe(const HybridPathEnsemble& a, const HybridPathEnsemble& b,
                                const RoughPath& rp_a, const RoughPath& rp_b, double alpha, int p,
                                double coeff_dist) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("stability_probe: grid mismatch");
    StabilityReport rep;
    rep.sol_dist = ensemble_lp_distance(a.state, b.state, p);
    {
        double acc = 0;
        std::vector<double> diff(a.dim);
        for (int path = 0; path < a.state.paths; ++path) {
            auto xa = a.state.value_at(path, 0);
            auto xb = b.state.value_at(path, 0);
            for (int i = 0; i < a.dim; ++i) diff[i] = xa[i] - xb[i];
            acc += std::pow(frob_norm(diff), p);
        }
        rep.init_dist = std::pow(acc / a.state.paths, 1.0 / p);
    }
    rep.driver = rho_alpha(rp_a, rp_b, alpha);
    rep.coeff_dist = coeff_dist;
    return rep;
}

std::string ensemble_csv(const HybridPathEnsemble& ens) {
    std::ostringstream os;
    os.precision(17);
    os << "path_id,k,t";
    for (int i = 0; i < ens.dim; ++i) os << ",X_" << (i + 1);
    os << "\n";
    for (int p = 0; p < ens.state.paths; ++p)
        for (int k = 0; k < ens.state.nodes; ++k) {
            os << p << "," << k << "," << ens.grid.node(k);
            auto x = ens.state.value_at(p, k);
            for (int i = 0; i < ens.dim; ++i) os << "," << x[i];
            os << "\n";
        }
    return os.str();
}

}  // namespace rfk
