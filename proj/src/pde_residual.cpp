#include "pde_residual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "linalg.hpp"
#include "parallel.hpp"

namespace rfk {

namespace {

void require_d1(const CoefficientSet& cs, const char* who) {
    if (cs.state_dim != 1) throw std::invalid_argument(std::string(who) + ": stencils require d = 1");
}

struct CoeffSlice {
    double b = 0.0;
    double sigma_sq = 0.0;  // sum_a sigma_a^2
    double c = 0.0;
    std::vector<double> beta;        // n
    std::vector<double> beta_dx;     // n
    std::vector<double> gamma;       // n
    std::vector<double> gamma_dx;    // n
    std::vector<double> beta_prime;  // n x n
    std::vector<double> gamma_prime; // n x n
};

CoeffSlice eval_coeffs(const CoefficientSet& cs, double t, double x) {
    CoeffSlice out;
    const int n = cs.driver_dim;
    const int m = cs.bm_dim;
    std::span<const double> xs(&x, 1);
    std::vector<double> buf(std::max(n * n, std::max(n, m)));
    if (cs.has_drift()) {
        cs.drift.eval(t, xs, {buf.data(), 1});
        out.b = buf[0];
    }
    if (cs.has_diffusion()) {
        cs.diffusion.eval(t, xs, {buf.data(), static_cast<size_t>(m)});
        for (int a = 0; a < m; ++a) out.sigma_sq += buf[a] * buf[a];
    }
    if (cs.has_killing()) {
        cs.killing.eval(t, xs, {buf.data(), 1});
        out.c = buf[0];
    }
    out.beta.assign(n, 0.0);
    out.beta_dx.assign(n, 0.0);
    out.gamma.assign(n, 0.0);
    out.gamma_dx.assign(n, 0.0);
    out.beta_prime.assign(static_cast<size_t>(n) * n, 0.0);
    out.gamma_prime.assign(static_cast<size_t>(n) * n, 0.0);
    if (cs.has_rough()) {
        cs.rough.eval(t, xs, out.beta);
        cs.rough.eval_dx(t, xs, out.beta_dx);
        cs.rough.eval_prime(t, xs, out.beta_prime);
    }
    if (cs.has_weight()) {
        cs.weight.eval(t, xs, out.gamma);
        cs.weight.eval_dx(t, xs, out.gamma_dx);
        cs.weight.eval_prime(t, xs, out.gamma_prime);
    }
    return out;
}

}  // namespace

OperatorStencil::OperatorStencil(std::vector<double> x) : mesh(std::move(x)) {
    if (mesh.size() < 5) throw std::invalid_argument("OperatorStencil: mesh too small");
    pitch = mesh[1] - mesh[0];
    for (size_t q = 1; q + 1 < mesh.size(); ++q)
        if (std::abs((mesh[q + 1] - mesh[q]) - pitch) > 1e-9 * (1.0 + std::abs(pitch)))
            throw std::invalid_argument("OperatorStencil: mesh must be uniform");
}

void OperatorStencil::apply_L(std::span<const double> u, const CoefficientSet& cs, double t,
                              std::span<double> out) const {
    require_d1(cs, "apply_L");
    const int Q = size();
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 1; q + 1 < Q; ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        const double du = (u[q + 1] - u[q - 1]) / (2.0 * pitch);
        const double d2u = (u[q + 1] - 2.0 * u[q] + u[q - 1]) / (pitch * pitch);
        out[q] = 0.5 * co.sigma_sq * d2u + co.b * du + co.c * u[q];
    }
}

void OperatorStencil::apply_Gamma(std::span<const double> u, const CoefficientSet& cs, double t, int mu,
                                  std::span<double> out) const {
    require_d1(cs, "apply_Gamma");
    const int Q = size();
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 1; q + 1 < Q; ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        const double du = (u[q + 1] - u[q - 1]) / (2.0 * pitch);
        out[q] = co.beta[mu] * du + co.gamma[mu] * u[q];
    }
}

void OperatorStencil::apply_Gamma_pair(std::span<const double> u, const CoefficientSet& cs, double t,
                                       int mu, int nu, std::span<double> out) const {
    require_d1(cs, "apply_Gamma_pair");
    const int n = cs.driver_dim;
    const int Q = size();
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 1; q + 1 < Q; ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        const double du = (u[q + 1] - u[q - 1]) / (2.0 * pitch);
        const double d2u = (u[q + 1] - 2.0 * u[q] + u[q - 1]) / (pitch * pitch);
        double v = co.beta[mu] * co.beta_dx[nu] * du + co.beta[mu] * co.beta[nu] * d2u +
                   co.beta[mu] * co.gamma_dx[nu] * u[q] + co.beta[mu] * co.gamma[nu] * du +
                   co.gamma[mu] * co.beta[nu] * du + co.gamma[mu] * co.gamma[nu] * u[q];
        v -= co.beta_prime[static_cast<size_t>(mu) * n + nu] * du +
             co.gamma_prime[static_cast<size_t>(mu) * n + nu] * u[q];
        out[q] = v;
    }
}

void OperatorStencil::apply_Gamma_nested(std::span<const double> u, const CoefficientSet& cs, double t,
                                         int mu, int nu, std::span<double> out) const {
    std::vector<double> inner(size(), 0.0);
    apply_Gamma(u, cs, t, nu, inner);
    std::vector<double> outer(size(), 0.0);
    apply_Gamma(inner, cs, t, mu, outer);
    std::fill(out.begin(), out.end(), 0.0);
    const int n = cs.driver_dim;
    for (int q = 2; q + 2 < size(); ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        const double du = (u[q + 1] - u[q - 1]) / (2.0 * pitch);
        out[q] = outer[q] - co.beta_prime[static_cast<size_t>(mu) * n + nu] * du -
                 co.gamma_prime[static_cast<size_t>(mu) * n + nu] * u[q];
    }
}

void OperatorStencil::propagate_abs_Gamma(std::span<const double> err, const CoefficientSet& cs,
                                          double t, int mu, std::span<double> out) const {
    const int Q = size();
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 1; q + 1 < Q; ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        out[q] = std::abs(co.beta[mu]) * (err[q + 1] + err[q - 1]) / (2.0 * pitch) +
                 std::abs(co.gamma[mu]) * err[q];
    }
}

void OperatorStencil::propagate_abs_pair(std::span<const double> err, const CoefficientSet& cs,
                                         double t, int mu, int nu, std::span<double> out) const {
    const int n = cs.driver_dim;
    const int Q = size();
    std::fill(out.begin(), out.end(), 0.0);
    for (int q = 1; q + 1 < Q; ++q) {
        const CoeffSlice co = eval_coeffs(cs, t, mesh[q]);
        const double adu = (err[q + 1] + err[q - 1]) / (2.0 * pitch);
        const double ad2u = (err[q + 1] + 2.0 * err[q] + err[q - 1]) / (pitch * pitch);
        out[q] = std::abs(co.beta[mu] * co.beta_dx[nu]) * adu + std::abs(co.beta[mu] * co.beta[nu]) * ad2u +
                 std::abs(co.beta[mu] * co.gamma_dx[nu]) * err[q] +
                 std::abs(co.beta[mu] * co.gamma[nu]) * adu + std::abs(co.gamma[mu] * co.beta[nu]) * adu +
                 std::abs(co.gamma[mu] * co.gamma[nu]) * err[q] +
                 std::abs(co.beta_prime[static_cast<size_t>(mu) * n + nu]) * adu +
                 std::abs(co.gamma_prime[static_cast<size_t>(mu) * n + nu]) * err[q];
    }
}

namespace {

/// Surface s-nodes must form an arithmetic progression; returns the stride.
int surface_stride(const SolutionSurface& surface) {
    const auto& s = surface.s_nodes;
    if (s.size() < 2) throw std::invalid_argument("residuals: need at least two s slices");
    const int st = s[1] - s[0];
    for (size_t i = 1; i + 1 < s.size(); ++i)
        if (s[i + 1] - s[i] != st)
            throw std::invalid_argument("residuals: surface slices must be uniformly spaced");
    if (st < 1) throw std::invalid_argument("residuals: slice stride must be positive");
    return st;
}

}  // namespace

ResidualReport davie_residual_of_u(const SolutionSurface& surface, const CoefficientSet& cs,
                                   const RoughPath& driver) {
    require_d1(cs, "davie_residual_of_u");
    const int stride = surface_stride(surface);
    const int slices = static_cast<int>(surface.s_nodes.size());
    const int Q = static_cast<int>(surface.x_nodes.size());
    const int n = driver.dim;
    OperatorStencil st(surface.x_nodes);
    const double dt = driver.grid.dt();

    // Lu on every slice once
    std::vector<std::vector<double>> lu(slices, std::vector<double>(Q, 0.0));
    for (int si = 0; si < slices; ++si) {
        const double t = driver.grid.node(surface.s_nodes[si]);
        st.apply_L({surface.u.data() + static_cast<size_t>(si) * Q, static_cast<size_t>(Q)}, cs, t,
                   lu[si]);
    }

    std::vector<int> levels;
    for (int h = 1; h < slices; h *= 2) levels.push_back(h);
    if (levels.size() < 4) throw std::invalid_argument("davie_residual_of_u: insufficient time slices");

    ResidualReport rep;
    std::vector<double> gamma_u(Q), pair_u(Q), g_err(Q), p_err(Q);
    for (int lvl : levels) {
        double acc_sup = 0.0, acc_floor = 0.0;
        int count = 0;
        for (int si = 0; si + lvl < slices; si += std::max(1, lvl / 2)) {
            const int s_node = surface.s_nodes[si];
            const int t_node = surface.s_nodes[si + lvl];
            const double t_time = driver.grid.node(t_node);
            Window w = window(driver, s_node, t_node);
            const double* us = surface.u.data() + static_cast<size_t>(si) * Q;
            const double* ut = surface.u.data() + static_cast<size_t>(si + lvl) * Q;
            const double* es = surface.u_stderr.data() + static_cast<size_t>(si) * Q;
            const double* et = surface.u_stderr.data() + static_cast<size_t>(si + lvl) * Q;

            // residual = u_s - u_t - trapz(L u) - Gamma u_t dW - (GG - G') u_t W2
            std::vector<double> res(Q, 0.0), floor_q(Q, 0.0);
            for (int q = 0; q < Q; ++q) {
                res[q] = us[q] - ut[q];
                floor_q[q] = es[q] + et[q];
            }
            // trapezoid over intermediate slices, refining with the span so the
            // quadrature error stays higher order than the residual sought
            const int sub = std::max(1, lvl / 4);
            for (int r = si; r < si + lvl; r += sub) {
                const double half = 0.5 * sub * stride * dt;
                for (int q = 0; q < Q; ++q) res[q] -= half * (lu[r][q] + lu[r + sub][q]);
            }
            for (int mu = 0; mu < n; ++mu) {
                st.apply_Gamma({ut, static_cast<size_t>(Q)}, cs, t_time, mu, gamma_u);
                st.propagate_abs_Gamma({et, static_cast<size_t>(Q)}, cs, t_time, mu, g_err);
                for (int q = 0; q < Q; ++q) {
                    res[q] -= gamma_u[q] * w.delta[mu];
                    floor_q[q] += g_err[q] * std::abs(w.delta[mu]);
                }
                for (int nu = 0; nu < n; ++nu) {
                    st.apply_Gamma_pair({ut, static_cast<size_t>(Q)}, cs, t_time, mu, nu, pair_u);
                    st.propagate_abs_pair({et, static_cast<size_t>(Q)}, cs, t_time, mu, nu, p_err);
                    const double w2 = w.tensor[static_cast<size_t>(mu) * n + nu];
                    for (int q = 0; q < Q; ++q) {
                        res[q] -= pair_u[q] * w2;
                        floor_q[q] += p_err[q] * std::abs(w2);
                    }
                }
            }
            double sup = 0.0, fl = 0.0;
            for (int q = 2; q + 2 < Q; ++q) {
                sup = std::max(sup, std::abs(res[q]));
                fl = std::max(fl, floor_q[q]);
            }
            acc_sup += sup;
            acc_floor += fl;
            ++count;
        }
        ResidualRow row;
        row.span = lvl * stride * dt;
        row.sup_residual = acc_sup / count;
        row.noise_floor = acc_floor / count;
        rep.rows.push_back(row);
    }

    std::vector<double> hs, ys;
    for (const auto& row : rep.rows)
        if (row.sup_residual > 3.0 * row.noise_floor && row.sup_residual > 0.0) {
            hs.push_back(row.span);
            ys.push_back(row.sup_residual);
        }
    rep.fitted_points = static_cast<int>(hs.size());
    if (rep.fitted_points >= 4) rep.slope = slope_fit(hs, ys).slope;
    return rep;
}

ConditionIiReport condition_ii_check(const SolutionSurface& surface, const CoefficientSet& cs,
                                     const RoughPath& driver) {
    require_d1(cs, "condition_ii_check");
    const int stride = surface_stride(surface);
    const int slices = static_cast<int>(surface.s_nodes.size());
    const int Q = static_cast<int>(surface.x_nodes.size());
    const int n = driver.dim;
    OperatorStencil st(surface.x_nodes);
    const double dt = driver.grid.dt();

    std::vector<int> levels;
    for (int h = 1; h < slices; h *= 2) levels.push_back(h);
    if (levels.size() < 4) throw std::invalid_argument("condition_ii_check: insufficient time slices");

    ConditionIiReport rep;
    std::vector<double> pair_s(Q), pair_t(Q), gam_s(Q), gam_t(Q);
    for (int lvl : levels) {
        double acc1 = 0.0, acc2 = 0.0;
        int count = 0;
        for (int si = 0; si + lvl < slices; si += std::max(1, lvl / 2)) {
            const int s_node = surface.s_nodes[si];
            const int t_node = surface.s_nodes[si + lvl];
            const double s_time = driver.grid.node(s_node);
            const double t_time = driver.grid.node(t_node);
            Window w = window(driver, s_node, t_node);
            const double* us = surface.u.data() + static_cast<size_t>(si) * Q;
            const double* ut = surface.u.data() + static_cast<size_t>(si + lvl) * Q;
            double sup1 = 0.0, sup2 = 0.0;
            for (int mu = 0; mu < n; ++mu) {
                st.apply_Gamma({us, static_cast<size_t>(Q)}, cs, s_time, mu, gam_s);
                st.apply_Gamma({ut, static_cast<size_t>(Q)}, cs, t_time, mu, gam_t);
                std::vector<double> corr(Q, 0.0);
                for (int nu = 0; nu < n; ++nu) {
                    st.apply_Gamma_pair({us, static_cast<size_t>(Q)}, cs, s_time, mu, nu, pair_s);
                    st.apply_Gamma_pair({ut, static_cast<size_t>(Q)}, cs, t_time, mu, nu, pair_t);
                    for (int q = 2; q + 2 < Q; ++q)
                        sup1 = std::max(sup1, std::abs(pair_s[q] - pair_t[q]));
                    for (int q = 0; q < Q; ++q) corr[q] += pair_t[q] * w.delta[nu];
                }
                for (int q = 2; q + 2 < Q; ++q)
                    sup2 = std::max(sup2, std::abs(gam_t[q] - gam_s[q] + corr[q]));
            }
            acc1 += sup1;
            acc2 += sup2;
            ++count;
        }
        rep.spans.push_back(lvl * stride * dt);
        rep.q1.push_back(acc1 / count);
        rep.q2.push_back(acc2 / count);
    }
    if (*std::min_element(rep.q1.begin(), rep.q1.end()) > 0.0)
        rep.slope_q1 = slope_fit(rep.spans, rep.q1).slope;
    if (*std::min_element(rep.q2.begin(), rep.q2.end()) > 0.0)
        rep.slope_q2 = slope_fit(rep.spans, rep.q2).slope;
    return rep;
}

std::vector<SmoothReferenceRow> smooth_case_reference(const CoefficientSet& cs,
                                                      const RoughPath& driver,
                                                      const RoughPath& fine_driver,
                                                      std::span<const int> s_nodes,
                                                      std::span<const double> x_nodes, int paths,
                                                      const SeedLedger& ledger) {
    require_d1(cs, "smooth_case_reference");
    if (!driver.geometric || !fine_driver.geometric)
        throw std::invalid_argument("smooth_case_reference: driver not flagged geometric");
    const int N = driver.grid.steps;
    const int Nf = fine_driver.grid.steps;
    if (Nf % N != 0)
        throw std::invalid_argument("smooth_case_reference: fine grid must refine the coarse grid");
    const int refine = Nf / N;
    const int m = cs.bm_dim;

    std::vector<SmoothReferenceRow> rows;
    uint64_t mesh_index = 0;
    for (int s_node : s_nodes)
        for (double x : x_nodes) {
            SmoothReferenceRow row;
            row.s = driver.grid.node(s_node);
            row.x = x;
            PointEstimate rough = estimate_u(s_node, {&x, 1}, cs, driver, paths, ledger, mesh_index);
            row.u_rough = rough.u;

            // classical route: plain left-point Euler on the fine grid
            const int mf = s_node * refine;
            const int K = Nf - mf;
            const double dtf = fine_driver.grid.dt();
            const double s_time = driver.grid.node(s_node);
            const double cap = driver.grid.horizon;
            const double sq = std::sqrt(dtf);
            std::vector<double> vals(paths);
            parallel_for(paths, [&](long p) {
                Rng rng = ledger.stream("classical", mesh_index, static_cast<uint64_t>(p));
                double xx = x;
                double expo = 0.0;
                std::vector<double> buf(std::max(m, cs.driver_dim) + 1);
                for (int k = 0; k < K; ++k) {
                    double t = s_time + k * dtf;
                    if (t > cap) t = cap;
                    std::span<const double> xs(&xx, 1);
                    double inc = 0.0;
                    if (cs.has_drift()) {
                        cs.drift.eval(t, xs, {buf.data(), 1});
                        inc += buf[0] * dtf;
                    }
                    if (cs.has_diffusion()) {
                        cs.diffusion.eval(t, xs, {buf.data(), static_cast<size_t>(m)});
                        for (int a = 0; a < m; ++a) inc += buf[a] * sq * rng.next_normal();
                    }
                    double cinc = 0.0;
                    if (cs.has_killing()) {
                        cs.killing.eval(t, xs, {buf.data(), 1});
                        cinc += buf[0] * dtf;
                    }
                    for (int i = 0; i < fine_driver.dim; ++i) {
                        const double dW = fine_driver.values[static_cast<size_t>(mf + k + 1) * fine_driver.dim + i] -
                                          fine_driver.values[static_cast<size_t>(mf + k) * fine_driver.dim + i];
                        if (cs.has_rough()) {
                            cs.rough.eval(t, xs, {buf.data(), static_cast<size_t>(cs.driver_dim)});
                            inc += buf[i] * dW;
                        }
                        if (cs.has_weight()) {
                            cs.weight.eval(t, xs, {buf.data(), static_cast<size_t>(cs.driver_dim)});
                            cinc += buf[i] * dW;
                        }
                    }
                    xx += inc;
                    expo += cinc;
                }
                double g;
                std::span<const double> xs(&xx, 1);
                cs.payoff.eval(cap, xs, {&g, 1});
                vals[p] = g * std::exp(expo);
            });
            double sum = 0.0, sumsq = 0.0;
            for (double v : vals) {
                sum += v;
                sumsq += v * v;
            }
            row.u_classical = sum / paths;
            const double var =
                std::max(0.0, (sumsq - paths * row.u_classical * row.u_classical) / (paths - 1.0));
            row.combined_stderr = std::sqrt(var / paths + rough.u_stderr * rough.u_stderr);
            rows.push_back(row);
            ++mesh_index;
        }
    return rows;
}

std::string ResidualReport::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "h,sup_residual,noise_floor,slope\n";
    for (const auto& r : rows) os << r.span << "," << r.sup_residual << "," << r.noise_floor << "," << slope << "\n";
    return os.str();
}

std::string smooth_reference_csv(std::span<const SmoothReferenceRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "s,x,u_rough,u_classical,combined_stderr\n";
    for (const auto& r : rows)
        os << r.s << "," << r.x << "," << r.u_rough << "," << r.u_classical << "," << r.combined_stderr
           << "\n";
    return os.str();
}

}  // namespace rfk
