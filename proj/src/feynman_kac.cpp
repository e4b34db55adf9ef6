#include "feynman_kac.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "integrator.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

namespace rfk {

namespace {

constexpr int kBlock = 4096;

double clamp_time(double t, double cap) { return (cap >= 0.0 && t > cap) ? cap : t; }

/// Brownian block with absolute path keys, so block partitioning and thread
/// count never change the draws.
BrownianPaths brownian_block(int block, int steps, int dim, double horizon, const SeedLedger& ledger,
                             uint64_t mesh_index, long path_offset) {
    BrownianPaths bp(block, steps, dim);
    const double sq = std::sqrt(horizon / steps);
    parallel_for(block, [&](long p) {
        Rng rng = ledger.stream("fk.bm", mesh_index, static_cast<uint64_t>(path_offset + p));
        double* row = bp.inc.data() + static_cast<size_t>(p) * steps * dim;
        for (int k = 0; k < steps * dim; ++k) row[k] = sq * rng.next_normal();
    });
    return bp;
}

/// Exponent trajectory I (paths x nodes) along a solved block.
IntegralPath exponent_path(const HybridPathEnsemble& ens, const CoefficientSet& cs,
                           const RoughPath& rps, double offset) {
    const int M = ens.state.paths;
    const int nodes = ens.state.nodes;
    IntegralPath total(M, nodes, 1, IntegrandKind::rough);
    if (cs.has_killing()) {
        ControlledSample cval(M, nodes, 1, rps.dim);
        parallel_for(M, [&](long p) {
            for (int k = 0; k < nodes; ++k) {
                const double t = clamp_time(offset + ens.grid.node(k), offset + ens.grid.horizon);
                cs.killing.eval(t, ens.state.value_at(static_cast<int>(p), k),
                                cval.value_at(static_cast<int>(p), k));
            }
        });
        IntegralPath leb = lebesgue_integral(cval, ens.grid);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += leb.values[q];
    }
    if (cs.has_weight()) {
        ControlledSample integrand =
            compose(cs.weight, ens.state, ens.grid, offset, offset + ens.grid.horizon);
        IntegralPath rough = rough_integral(integrand, rps);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += rough.values[q];
    }
    return total;
}

/// First tangent weight: the forced integral behind d/dx_i of the exponent,
///   int D_x c . Y dr + int (D_x gamma . Y, (D2 gamma beta + D_x gamma') Y
///                           + D_x gamma . (f Y)) dW^s.
IntegralPath tangent_weight(const HybridPathEnsemble& ens, const TangentEnsemble& tg,
                            const CoefficientSet& cs, const RoughPath& rps, double offset) {
    const int M = ens.state.paths;
    const int nodes = ens.state.nodes;
    const int d = cs.state_dim;
    const int n = cs.driver_dim;
    const double cap = offset + ens.grid.horizon;
    IntegralPath total(M, nodes, 1, IntegrandKind::rough);

    if (cs.has_killing()) {
        ControlledSample leb(M, nodes, 1, n);
        parallel_for(M, [&](long pl) {
            const int p = static_cast<int>(pl);
            std::vector<double> cdx(d);
            for (int k = 0; k < nodes; ++k) {
                const double t = clamp_time(offset + ens.grid.node(k), cap);
                cs.killing.eval_dx(t, ens.state.value_at(p, k), cdx);
                auto y = tg.sol.value_at(p, k);
                double acc = 0;
                for (int a = 0; a < d; ++a) acc += cdx[a] * y[a];
                leb.value_at(p, k)[0] = acc;
            }
        });
        IntegralPath part = lebesgue_integral(leb, ens.grid);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += part.values[q];
    }

    if (cs.has_weight()) {
        ControlledSample rough(M, nodes, n, n);
        parallel_for(M, [&](long pl) {
            const int p = static_cast<int>(pl);
            std::vector<double> g1(static_cast<size_t>(n) * d), g2(static_cast<size_t>(n) * d * d);
            std::vector<double> p1(static_cast<size_t>(n) * n * d);
            for (int k = 0; k < nodes; ++k) {
                const double t = clamp_time(offset + ens.grid.node(k), cap);
                auto x = ens.state.value_at(p, k);
                cs.weight.eval_dx(t, x, g1);
                cs.weight.eval_dxx(t, x, g2);
                cs.weight.eval_prime_dx(t, x, p1);
                auto beta = ens.state.gub_at(p, k);
                auto y = tg.sol.value_at(p, k);
                auto gy = tg.sol.gub_at(p, k);
                auto val = rough.value_at(p, k);
                auto gub = rough.gub_at(p, k);
                for (int nu = 0; nu < n; ++nu) {
                    double acc = 0;
                    for (int a = 0; a < d; ++a) acc += g1[static_cast<size_t>(nu) * d + a] * y[a];
                    val[nu] = acc;
                    for (int mu = 0; mu < n; ++mu) {
                        double g = 0;
                        for (int a = 0; a < d; ++a) {
                            double lvl = p1[(static_cast<size_t>(nu) * n + mu) * d + a];
                            for (int b = 0; b < d; ++b)
                                lvl += g2[(static_cast<size_t>(nu) * d + a) * d + b] *
                                       beta[static_cast<size_t>(b) * n + mu];
                            g += lvl * y[a];
                            g += g1[static_cast<size_t>(nu) * d + a] * gy[static_cast<size_t>(a) * n + mu];
                        }
                        gub[static_cast<size_t>(nu) * n + mu] = g;
                    }
                }
            }
        });
        IntegralPath part = rough_integral(rough, rps);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += part.values[q];
    }
    return total;
}

/// Second tangent weight behind d^2/dx_j dx_i of the exponent.
IntegralPath hessian_weight(const HybridPathEnsemble& ens, const TangentEnsemble& yi,
                            const TangentEnsemble& yj, const TangentEnsemble& z,
                            const CoefficientSet& cs, const RoughPath& rps, double offset) {
    const int M = ens.state.paths;
    const int nodes = ens.state.nodes;
    const int d = cs.state_dim;
    const int n = cs.driver_dim;
    const double cap = offset + ens.grid.horizon;
    IntegralPath total(M, nodes, 1, IntegrandKind::rough);

    if (cs.has_killing()) {
        ControlledSample leb(M, nodes, 1, n);
        parallel_for(M, [&](long pl) {
            const int p = static_cast<int>(pl);
            std::vector<double> cdx(d), cdxx(static_cast<size_t>(d) * d);
            for (int k = 0; k < nodes; ++k) {
                const double t = clamp_time(offset + ens.grid.node(k), cap);
                auto x = ens.state.value_at(p, k);
                cs.killing.eval_dx(t, x, cdx);
                cs.killing.eval_dxx(t, x, cdxx);
                auto vi = yi.sol.value_at(p, k);
                auto vj = yj.sol.value_at(p, k);
                auto vz = z.sol.value_at(p, k);
                double acc = 0;
                for (int a = 0; a < d; ++a) {
                    acc += cdx[a] * vz[a];
                    for (int b = 0; b < d; ++b) acc += cdxx[static_cast<size_t>(a) * d + b] * vi[a] * vj[b];
                }
                leb.value_at(p, k)[0] = acc;
            }
        });
        IntegralPath part = lebesgue_integral(leb, ens.grid);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += part.values[q];
    }

    if (cs.has_weight()) {
        ControlledSample rough(M, nodes, n, n);
        parallel_for(M, [&](long pl) {
            const int p = static_cast<int>(pl);
            std::vector<double> g1(static_cast<size_t>(n) * d), g2(static_cast<size_t>(n) * d * d);
            std::vector<double> g3(static_cast<size_t>(n) * d * d * d);
            std::vector<double> p1(static_cast<size_t>(n) * n * d), p2(static_cast<size_t>(n) * n * d * d);
            for (int k = 0; k < nodes; ++k) {
                const double t = clamp_time(offset + ens.grid.node(k), cap);
                auto x = ens.state.value_at(p, k);
                cs.weight.eval_dx(t, x, g1);
                cs.weight.eval_dxx(t, x, g2);
                cs.weight.eval_dxxx(t, x, g3);
                cs.weight.eval_prime_dx(t, x, p1);
                cs.weight.eval_prime_dxx(t, x, p2);
                auto beta = ens.state.gub_at(p, k);
                auto vi = yi.sol.value_at(p, k);
                auto vj = yj.sol.value_at(p, k);
                auto vz = z.sol.value_at(p, k);
                auto gi = yi.sol.gub_at(p, k);
                auto gj = yj.sol.gub_at(p, k);
                auto gz = z.sol.gub_at(p, k);
                auto val = rough.value_at(p, k);
                auto gub = rough.gub_at(p, k);
                for (int nu = 0; nu < n; ++nu) {
                    double acc = 0;
                    for (int a = 0; a < d; ++a) {
                        acc += g1[static_cast<size_t>(nu) * d + a] * vz[a];
                        for (int b = 0; b < d; ++b)
                            acc += g2[(static_cast<size_t>(nu) * d + a) * d + b] * vi[a] * vj[b];
                    }
                    val[nu] = acc;
                    for (int mu = 0; mu < n; ++mu) {
                        double g = 0;
                        for (int a = 0; a < d; ++a) {
                            g += p1[(static_cast<size_t>(nu) * n + mu) * d + a] * vz[a];
                            g += g1[static_cast<size_t>(nu) * d + a] * gz[static_cast<size_t>(a) * n + mu];
                            for (int b = 0; b < d; ++b) {
                                const double hab = g2[(static_cast<size_t>(nu) * d + a) * d + b];
                                double lvl = p2[((static_cast<size_t>(nu) * n + mu) * d + a) * d + b];
                                for (int c = 0; c < d; ++c)
                                    lvl += g3[((static_cast<size_t>(nu) * d + a) * d + b) * d + c] *
                                           beta[static_cast<size_t>(c) * n + mu];
                                g += lvl * vi[a] * vj[b];
                                g += hab * (gi[static_cast<size_t>(a) * n + mu] * vj[b] +
                                            vi[a] * gj[static_cast<size_t>(b) * n + mu]);
                                g += hab * vz[a] * beta[static_cast<size_t>(b) * n + mu];
                            }
                        }
                        gub[static_cast<size_t>(nu) * n + mu] = g;
                    }
                }
            }
        });
        IntegralPath part = rough_integral(rough, rps);
        for (size_t q = 0; q < total.values.size(); ++q) total.values[q] += part.values[q];
    }
    return total;
}

}  // namespace

RsdeCoefficients CoefficientSet::dynamics() const {
    RsdeCoefficients out;
    out.drift = drift;
    out.diffusion = diffusion;
    out.rough = rough;
    return out;
}

void CoefficientSet::validate() const {
    if (!(alpha > 1.0 / 3.0 && alpha <= 0.5))
        throw std::invalid_argument("CoefficientSet: alpha must lie in (1/3, 1/2]");
    const double de = std::min(delta, eta);
    if (!(alpha + de > 0.5))
        throw std::invalid_argument("CoefficientSet: alpha + min(delta, eta) <= 1/2");
    const double extra =
        std::min(std::min((lambda - 2.0) * alpha, (std::min(kappa, theta) - 4.0) * alpha), de);
    if (!(alpha + de + extra > 1.0))
        throw std::invalid_argument("CoefficientSet: second exponent inequality fails");
    if (!payoff.value) throw std::invalid_argument("CoefficientSet: missing payoff");
}

RoughPath shifted_restriction(const RoughPath& rp, int m) {
    const int N = rp.grid.steps;
    if (m < 0 || m >= N) throw std::invalid_argument("shifted_restriction: need 0 <= m < N");
    const int K = N - m;
    RoughPath out(Grid(rp.grid.dt() * K, K), rp.dim);
    out.geometric = rp.geometric;
    std::copy(rp.values.begin() + static_cast<long>(m) * rp.dim,
              rp.values.begin() + static_cast<long>(N + 1) * rp.dim, out.values.begin());
    std::copy(rp.areas.begin() + static_cast<long>(m) * rp.dim * rp.dim, rp.areas.end(),
              out.areas.begin());
    return out;
}

WeightProcess weight_process(const HybridPathEnsemble& ens, const CoefficientSet& cs,
                             const RoughPath& rps, double time_offset) {
    if (ens.state.nodes != rps.grid.nodes())
        throw std::invalid_argument("weight_process: ensemble and driver grids differ");
    WeightProcess wp;
    wp.paths = ens.state.paths;
    wp.nodes = ens.state.nodes;
    wp.driver_dim = rps.dim;
    IntegralPath ip = exponent_path(ens, cs, rps, time_offset);
    wp.exponent = std::move(ip.values);
    wp.derivative.assign(static_cast<size_t>(wp.paths) * wp.nodes * rps.dim, 0.0);
    if (cs.has_weight()) {
        const double cap = time_offset + ens.grid.horizon;
        parallel_for(wp.paths, [&](long pl) {
            const int p = static_cast<int>(pl);
            for (int k = 0; k < wp.nodes; ++k) {
                const double t = clamp_time(time_offset + ens.grid.node(k), cap);
                cs.weight.eval(t, ens.state.value_at(p, k),
                               {wp.derivative.data() + (static_cast<size_t>(p) * wp.nodes + k) * rps.dim,
                                static_cast<size_t>(rps.dim)});
            }
        });
    }
    return wp;
}

PointEstimate estimate_point(int s_node, std::span<const double> x, const CoefficientSet& cs,
                             const RoughPath& driver, int paths, const SeedLedger& ledger,
                             uint64_t mesh_index, bool want_grad, bool want_hess) {
    cs.validate();
    const int d = cs.state_dim;
    const int N = driver.grid.steps;
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument("estimate_point: state size");
    if (s_node < 0 || s_node > N) throw std::invalid_argument("estimate_point: s beyond horizon");
    if (paths < 1) throw std::invalid_argument("estimate_point: need at least one path");

    PointEstimate out;
    if (want_grad) {
        out.grad.assign(d, 0.0);
        out.grad_stderr.assign(d, 0.0);
    }
    if (want_hess) {
        out.hess.assign(static_cast<size_t>(d) * d, 0.0);
        out.hess_stderr.assign(static_cast<size_t>(d) * d, 0.0);
    }

    if (s_node == N) {  // terminal slice: u(T, x) = g(x), no simulation
        double g;
        cs.payoff.eval(driver.grid.horizon, x, {&g, 1});
        out.u = g;
        if (want_grad) cs.payoff.eval_dx(driver.grid.horizon, x, out.grad);
        if (want_hess) cs.payoff.eval_dxx(driver.grid.horizon, x, out.hess);
        return out;
    }

    const RoughPath rps = shifted_restriction(driver, s_node);
    const int K = rps.grid.steps;
    const double s_time = driver.grid.node(s_node);
    const double cap = driver.grid.horizon;
    const RsdeCoefficients dyn = cs.dynamics();
    const bool weighted = cs.has_killing() || cs.has_weight();
    const bool need_tangent = want_grad || want_hess;

    const int n_pairs = d * (d + 1) / 2;
    const int nstat = 1 + (want_grad ? d : 0) + (want_hess ? n_pairs : 0);
    std::vector<double> sum(nstat, 0.0), sumsq(nstat, 0.0);
    std::vector<double> stat(nstat);
    std::vector<double> gval(1), gdx(d), gdxx(static_cast<size_t>(d) * d);

    for (long start = 0; start < paths; start += kBlock) {
        const int B = static_cast<int>(std::min<long>(kBlock, paths - start));
        BrownianPaths bm = brownian_block(B, K, cs.bm_dim, rps.grid.horizon, ledger, mesh_index, start);
        HybridPathEnsemble ens = solve_rsde(dyn, x, rps, bm, s_time, cap);
        IntegralPath expo;
        if (weighted) expo = exponent_path(ens, cs, rps, s_time);

        std::vector<TangentEnsemble> Y;
        std::vector<IntegralPath> J;
        if (need_tangent) {
            for (int i = 0; i < d; ++i) {
                std::vector<double> ei(d, 0.0);
                ei[i] = 1.0;
                Y.push_back(first_variation(ens, dyn, rps, ei, s_time, cap));
                if (weighted) J.push_back(tangent_weight(ens, Y.back(), cs, rps, s_time));
            }
        }
        std::vector<TangentEnsemble> Z;
        std::vector<IntegralPath> K2;
        if (want_hess) {
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) {
                    Z.push_back(second_variation(ens, Y[i], Y[j], dyn, rps, s_time, cap));
                    if (weighted)
                        K2.push_back(hessian_weight(ens, Y[i], Y[j], Z.back(), cs, rps, s_time));
                }
        }

        for (int p = 0; p < B; ++p) {
            auto xe = ens.state.value_at(p, K);
            cs.payoff.eval(cap, xe, gval);
            const double ew = weighted ? std::exp(expo.at(p, K)[0]) : 1.0;
            stat[0] = gval[0] * ew;
            int q = 1;
            if (need_tangent) cs.payoff.eval_dx(cap, xe, gdx);
            if (want_grad) {
                for (int i = 0; i < d; ++i, ++q) {
                    auto y = Y[i].sol.value_at(p, K);
                    double acc = 0;
                    for (int k = 0; k < d; ++k) acc += gdx[k] * y[k];
                    if (weighted) acc += gval[0] * J[i].at(p, K)[0];
                    stat[q] = acc * ew;
                }
            }
            if (want_hess) {
                cs.payoff.eval_dxx(cap, xe, gdxx);
                int pair = 0;
                for (int i = 0; i < d; ++i)
                    for (int j = i; j < d; ++j, ++q, ++pair) {
                        auto vyi = Y[i].sol.value_at(p, K);
                        auto vyj = Y[j].sol.value_at(p, K);
                        auto vz = Z[pair].sol.value_at(p, K);
                        double acc = 0;
                        for (int a = 0; a < d; ++a) {
                            for (int b = 0; b < d; ++b)
                                acc += gdxx[static_cast<size_t>(a) * d + b] * vyi[a] * vyj[b];
                            acc += gdx[a] * vz[a];
                        }
                        if (weighted) {
                            const double ji = J[i].at(p, K)[0];
                            const double jj = J[j].at(p, K)[0];
                            double payoff_dot_yi = 0, payoff_dot_yj = 0;
                            for (int a = 0; a < d; ++a) {
                                payoff_dot_yi += gdx[a] * vyi[a];
                                payoff_dot_yj += gdx[a] * vyj[a];
                            }
                            acc += payoff_dot_yi * jj + payoff_dot_yj * ji;
                            acc += gval[0] * (K2[pair].at(p, K)[0] + ji * jj);
                        }
                        stat[q] = acc * ew;
                    }
            }
            for (int si = 0; si < nstat; ++si) {
                sum[si] += stat[si];
                sumsq[si] += stat[si] * stat[si];
            }
        }
    }

    const double dm = static_cast<double>(paths);
    auto finish = [&](int si, double& value, double& err) {
        value = sum[si] / dm;
        const double var = std::max(0.0, (sumsq[si] - dm * value * value) / std::max(1.0, dm - 1.0));
        err = std::sqrt(var / dm);
    };
    finish(0, out.u, out.u_stderr);
    int q = 1;
    if (want_grad)
        for (int i = 0; i < d; ++i, ++q) finish(q, out.grad[i], out.grad_stderr[i]);
    if (want_hess) {
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j, ++q) {
                double v, e;
                finish(q, v, e);
                out.hess[static_cast<size_t>(i) * d + j] = v;
                out.hess[static_cast<size_t>(j) * d + i] = v;
                out.hess_stderr[static_cast<size_t>(i) * d + j] = e;
                out.hess_stderr[static_cast<size_t>(j) * d + i] = e;
            }
    }
    return out;
}

PointEstimate estimate_u(int s_node, std::span<const double> x, const CoefficientSet& cs,
                         const RoughPath& driver, int paths, const SeedLedger& ledger,
                         uint64_t mesh_index) {
    return estimate_point(s_node, x, cs, driver, paths, ledger, mesh_index, false, false);
}

PointEstimate estimate_u_gradient(int s_node, std::span<const double> x, const CoefficientSet& cs,
                                  const RoughPath& driver, int paths, const SeedLedger& ledger,
                                  uint64_t mesh_index) {
    return estimate_point(s_node, x, cs, driver, paths, ledger, mesh_index, true, false);
}

PointEstimate estimate_u_hessian(int s_node, std::span<const double> x, const CoefficientSet& cs,
                                 const RoughPath& driver, int paths, const SeedLedger& ledger,
                                 uint64_t mesh_index) {
    return estimate_point(s_node, x, cs, driver, paths, ledger, mesh_index, true, true);
}

SolutionSurface build_surface(const CoefficientSet& cs, const RoughPath& driver,
                              std::span<const int> s_nodes, std::span<const double> x_nodes, int paths,
                              const SeedLedger& ledger, bool want_grad, bool want_hess) {
    if (cs.state_dim != 1)
        throw std::invalid_argument("build_surface: tabulated surfaces require state dimension 1");
    SolutionSurface surf;
    surf.s_nodes.assign(s_nodes.begin(), s_nodes.end());
    surf.x_nodes.assign(x_nodes.begin(), x_nodes.end());
    surf.horizon = driver.grid.horizon;
    surf.steps = driver.grid.steps;
    surf.has_grad = want_grad;
    surf.has_hess = want_hess;
    surf.seed = ledger.master;
    surf.paths = paths;
    const size_t cells = s_nodes.size() * x_nodes.size();
    surf.u.assign(cells, 0.0);
    surf.u_stderr.assign(cells, 0.0);
    if (want_grad) {
        surf.grad.assign(cells, 0.0);
        surf.grad_stderr.assign(cells, 0.0);
    }
    if (want_hess) {
        surf.hess.assign(cells, 0.0);
        surf.hess_stderr.assign(cells, 0.0);
    }
    for (size_t si = 0; si < s_nodes.size(); ++si)
        for (size_t q = 0; q < x_nodes.size(); ++q) {
            const double xq = x_nodes[q];
            PointEstimate pe = estimate_point(s_nodes[si], {&xq, 1}, cs, driver, paths, ledger,
                                              static_cast<uint64_t>(q), want_grad, want_hess);
            const size_t cell = si * x_nodes.size() + q;
            surf.u[cell] = pe.u;
            surf.u_stderr[cell] = pe.u_stderr;
            if (want_grad) {
                surf.grad[cell] = pe.grad[0];
                surf.grad_stderr[cell] = pe.grad_stderr[0];
            }
            if (want_hess) {
                surf.hess[cell] = pe.hess[0];
                surf.hess_stderr[cell] = pe.hess_stderr[0];
            }
        }
    return surf;
}

std::string SolutionSurface::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "s,x_1,u,stderr";
    if (has_grad) os << ",du_1";
    if (has_hess) os << ",d2u_11";
    os << "\n";
    for (size_t si = 0; si < s_nodes.size(); ++si)
        for (size_t q = 0; q < x_nodes.size(); ++q) {
            const size_t cell = si * x_nodes.size() + q;
            os << horizon * s_nodes[si] / steps << "," << x_nodes[q] << "," << u[cell] << ","
               << u_stderr[cell];
            if (has_grad) os << "," << grad[cell];
            if (has_hess) os << "," << hess[cell];
            os << "\n";
        }
    return os.str();
}

std::string SolutionSurface::json(const std::string& config_echo) const {
    nlohmann::json j;
    if (!config_echo.empty()) j["config"] = nlohmann::json::parse(config_echo);
    j["seed"] = seed;
    j["paths"] = paths;
    j["horizon"] = horizon;
    j["steps"] = steps;
    j["s_nodes"] = s_nodes;
    j["x_nodes"] = x_nodes;
    j["u"] = u;
    j["u_stderr"] = u_stderr;
    if (has_grad) {
        j["du"] = grad;
        j["du_stderr"] = grad_stderr;
    }
    if (has_hess) {
        j["d2u"] = hess;
        j["d2u_stderr"] = hess_stderr;
    }
    return j.dump(2);
}

MarkovReport markov_consistency(int s_node, int t_node, double x, const CoefficientSet& cs,
                                const RoughPath& driver, int paths, int slice_paths,
                                const SeedLedger& ledger) {
    if (cs.state_dim != 1)
        throw std::invalid_argument("markov_consistency: interpolation requires state dimension 1");
    if (!(0 <= s_node && s_node <= t_node && t_node <= driver.grid.steps))
        throw std::invalid_argument("markov_consistency: need s <= t grid nodes");

    MarkovReport rep;
    PointEstimate direct =
        estimate_point(s_node, {&x, 1}, cs, driver, paths, ledger, 1000000, false, false);
    rep.direct = direct.u;
    rep.direct_stderr = direct.u_stderr;

    if (t_node == s_node) {  // identity
        rep.nested = direct.u;
        rep.nested_stderr = direct.u_stderr;
        rep.discrepancy = 0.0;
        rep.combined_stderr = direct.u_stderr;
        return rep;
    }

    const double tau = driver.grid.node(t_node) - driver.grid.node(s_node);
    const int K = t_node - s_node;
    const double s_time = driver.grid.node(s_node);
    const double cap = driver.grid.horizon;

    // coefficient scales probed around the start point
    double sig_bar = 0.0, b_bar = 0.0, beta_bar = 0.0;
    {
        std::vector<double> buf(std::max(cs.bm_dim, cs.driver_dim) * 1 + 1);
        for (double dx : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
            const double xp = x + dx;
            for (double tp : {s_time, s_time + 0.5 * tau, s_time + tau}) {
                if (cs.has_diffusion()) {
                    cs.diffusion.eval(tp, {&xp, 1}, {buf.data(), static_cast<size_t>(cs.bm_dim)});
                    sig_bar = std::max(sig_bar, frob_norm({buf.data(), static_cast<size_t>(cs.bm_dim)}));
                }
                if (cs.has_drift()) {
                    cs.drift.eval(tp, {&xp, 1}, {buf.data(), 1});
                    b_bar = std::max(b_bar, std::abs(buf[0]));
                }
                if (cs.has_rough()) {
                    cs.rough.eval(tp, {&xp, 1}, {buf.data(), static_cast<size_t>(cs.driver_dim)});
                    beta_bar = std::max(beta_bar, frob_norm({buf.data(), static_cast<size_t>(cs.driver_dim)}));
                }
            }
        }
    }
    double max_disp = 0.0;
    for (int k = 0; k <= K; ++k) {
        double acc = 0.0;
        for (int i = 0; i < driver.dim; ++i) {
            const double dW = driver.values[static_cast<size_t>(s_node + k) * driver.dim + i] -
                              driver.values[static_cast<size_t>(s_node) * driver.dim + i];
            acc += dW * dW;
        }
        max_disp = std::max(max_disp, std::sqrt(acc));
    }
    const double half = 6.0 * sig_bar * std::sqrt(tau) + beta_bar * max_disp + b_bar * tau + 1e-3;
    const int q_count = 129;
    std::vector<double> mesh(q_count);
    for (int q = 0; q < q_count; ++q) mesh[q] = x - half + 2.0 * half * q / (q_count - 1);
    rep.mesh_lo = mesh.front();
    rep.mesh_hi = mesh.back();

    std::vector<double> slice(q_count), slice_err(q_count);
    for (int q = 0; q < q_count; ++q) {
        PointEstimate pe = estimate_point(t_node, {&mesh[q], 1}, cs, driver, slice_paths, ledger,
                                          static_cast<uint64_t>(q), false, false);
        slice[q] = pe.u;
        slice_err[q] = pe.u_stderr;
    }

    // nested pass: simulate to t-s and average e^I u(t, X)
    const RoughPath rps_full = shifted_restriction(driver, s_node);
    RoughPath rps(Grid(rps_full.grid.dt() * K, K), rps_full.dim);
    rps.geometric = rps_full.geometric;
    std::copy(rps_full.values.begin(), rps_full.values.begin() + static_cast<long>(K + 1) * rps.dim,
              rps.values.begin());
    std::copy(rps_full.areas.begin(), rps_full.areas.begin() + static_cast<long>(K) * rps.dim * rps.dim,
              rps.areas.begin());

    const RsdeCoefficients dyn = cs.dynamics();
    const bool weighted = cs.has_killing() || cs.has_weight();
    const double dq = mesh[1] - mesh[0];
    double sum = 0.0, sumsq = 0.0;
    long outside = 0;
    std::vector<double> x0 = {x};
    SeedLedger nested_ledger(mix64(ledger.master ^ 0x6d61726b6f76ULL));
    for (long start = 0; start < paths; start += kBlock) {
        const int B = static_cast<int>(std::min<long>(kBlock, paths - start));
        BrownianPaths bm = brownian_block(B, K, cs.bm_dim, rps.grid.horizon, nested_ledger, 0, start);
        HybridPathEnsemble ens = solve_rsde(dyn, x0, rps, bm, s_time, cap);
        IntegralPath expo;
        if (weighted) expo = exponent_path(ens, cs, rps, s_time);
        for (int p = 0; p < B; ++p) {
            const double xt = ens.state.value_at(p, K)[0];
            double val;
            if (xt <= mesh.front() || xt >= mesh.back()) {
                ++outside;
                const int edge = (xt <= mesh.front()) ? 0 : q_count - 1;
                val = slice[edge];
            } else {
                const int cell = static_cast<int>((xt - mesh.front()) / dq);
                const double w = (xt - mesh[cell]) / dq;
                val = (1.0 - w) * slice[cell] + w * slice[cell + 1];
            }
            const double ew = weighted ? std::exp(expo.at(p, K)[0]) : 1.0;
            const double phi = ew * val;
            sum += phi;
            sumsq += phi * phi;
        }
    }
    rep.out_of_range_fraction = static_cast<double>(outside) / paths;
    if (rep.out_of_range_fraction > 1e-3)
        throw std::runtime_error("markov_consistency: interpolation mesh too narrow");
    rep.nested = sum / paths;
    const double var = std::max(0.0, (sumsq - paths * rep.nested * rep.nested) / (paths - 1.0));
    rep.nested_stderr = std::sqrt(var / paths);
    double slice_err_mean = 0.0;
    for (double e : slice_err) slice_err_mean += e;
    slice_err_mean /= q_count;
    rep.discrepancy = std::abs(rep.direct - rep.nested);
    rep.combined_stderr = std::sqrt(rep.direct_stderr * rep.direct_stderr +
                                    rep.nested_stderr * rep.nested_stderr +
                                    slice_err_mean * slice_err_mean);
    return rep;
}

RobustnessReport robustness_in_driver(const CoefficientSet& cs, const RoughPath& driver_a,
                                      const RoughPath& driver_b, std::span<const int> s_nodes,
                                      std::span<const double> x_nodes, int paths,
                                      const SeedLedger& ledger, bool with_derivatives) {
    RobustnessReport rep;
    rep.rho = rho_alpha(driver_a, driver_b, cs.alpha);
    uint64_t mesh = 0;
    for (int s : s_nodes)
        for (double x : x_nodes) {
            PointEstimate a = estimate_point(s, {&x, 1}, cs, driver_a, paths, ledger, mesh,
                                             with_derivatives, with_derivatives);
            PointEstimate b = estimate_point(s, {&x, 1}, cs, driver_b, paths, ledger, mesh,
                                             with_derivatives, with_derivatives);
            rep.sup_u = std::max(rep.sup_u, std::abs(a.u - b.u));
            if (with_derivatives) {
                for (size_t i = 0; i < a.grad.size(); ++i)
                    rep.sup_grad = std::max(rep.sup_grad, std::abs(a.grad[i] - b.grad[i]));
                for (size_t i = 0; i < a.hess.size(); ++i)
                    rep.sup_hess = std::max(rep.sup_hess, std::abs(a.hess[i] - b.hess[i]));
            }
            ++mesh;
        }
    rep.ratio = (rep.rho.total > 0.0) ? rep.sup_u / rep.rho.total : 0.0;
    return rep;
}

std::vector<MomentProbeRow> exponential_moment_probe(const WeightProcess& weights,
                                                     std::span<const double> p_values) {
    std::vector<MomentProbeRow> rows;
    const int M = weights.paths;
    const int sub = std::max(1, M / 10);
    std::vector<double> sup(M, 0.0);
    for (int p = 0; p < M; ++p) {
        double s = 0.0;
        for (int k = 0; k < weights.nodes; ++k)
            s = std::max(s, std::abs(weights.exponent[static_cast<size_t>(p) * weights.nodes + k]));
        sup[p] = s;
    }
    for (double pv : p_values) {
        MomentProbeRow row;
        row.p = pv;
        double full = 0.0, subsample = 0.0;
        for (int p = 0; p < M; ++p) {
            const double e = std::exp(pv * sup[p]);
            full += e;
            if (p < sub) subsample += e;
        }
        row.full = full / M;
        row.subsample = subsample / sub;
        row.ratio = row.subsample > 0.0 ? row.full / row.subsample : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string moment_probe_csv(std::span<const MomentProbeRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "p,full,subsample,ratio\n";
    for (const auto& r : rows) os << r.p << "," << r.full << "," << r.subsample << "," << r.ratio << "\n";
    return os.str();
}

}  // namespace rfk
