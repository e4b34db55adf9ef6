#include "integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "linalg.hpp"
#include "parallel.hpp"

namespace rfk {

BrownianPaths sample_brownian(int paths, int steps, int dim, double horizon, const SeedLedger& ledger,
                              std::string_view tag, uint64_t mesh_index) {
    BrownianPaths bp(paths, steps, dim);
    const double sq = std::sqrt(horizon / steps);
    parallel_for(paths, [&](long p) {
        Rng rng = ledger.stream(tag, mesh_index, static_cast<uint64_t>(p));
        double* row = bp.inc.data() + static_cast<size_t>(p) * steps * dim;
        for (int k = 0; k < steps * dim; ++k) row[k] = sq * rng.next_normal();
    });
    return bp;
}

IntegralPath rough_integral(const ControlledSample& phi, const RoughPath& rp) {
    const int n = rp.dim;
    if (phi.driver_dim != n) throw std::invalid_argument("rough_integral: driver dimension mismatch");
    if (phi.nodes != rp.grid.nodes()) throw std::invalid_argument("rough_integral: grid mismatch");
    if (phi.val_dim % n != 0)
        throw std::invalid_argument("rough_integral: integrand must be L(R^n, V)-shaped");
    const int v = phi.val_dim / n;

    IntegralPath out(phi.paths, phi.nodes, v, IntegrandKind::rough);
    parallel_for(phi.paths, [&](long p) {
        for (int k = 0; k < rp.grid.steps; ++k) {
            auto w0 = rp.value(k);
            auto w1 = rp.value(k + 1);
            auto A = rp.area(k);
            auto f = phi.value_at(static_cast<int>(p), k);
            auto fp = phi.gub_at(static_cast<int>(p), k);
            auto prev = out.at(static_cast<int>(p), k);
            auto next = out.at(static_cast<int>(p), k + 1);
            for (int i = 0; i < v; ++i) {
                double acc = prev[i];
                for (int mu = 0; mu < n; ++mu)
                    acc += f[static_cast<size_t>(i) * n + mu] * (w1[mu] - w0[mu]);
                next[i] = acc;
            }
            contract_level2(fp, A, v, n, next);
        }
    });
    return out;
}

IntegralPath ito_integral(const ControlledSample& nu, const BrownianPaths& brownian) {
    const int m = brownian.dim;
    if (nu.paths != brownian.paths || nu.nodes != brownian.steps + 1)
        throw std::invalid_argument("ito_integral: shape mismatch");
    if (nu.val_dim % m != 0) throw std::invalid_argument("ito_integral: integrand must be L(R^m, V)-shaped");
    const int v = nu.val_dim / m;

    IntegralPath out(nu.paths, nu.nodes, v, IntegrandKind::ito);
    parallel_for(nu.paths, [&](long p) {
        for (int k = 0; k < brownian.steps; ++k) {
            auto f = nu.value_at(static_cast<int>(p), k);
            auto db = brownian.at(static_cast<int>(p), k);
            auto prev = out.at(static_cast<int>(p), k);
            auto next = out.at(static_cast<int>(p), k + 1);
            for (int i = 0; i < v; ++i) {
                double acc = prev[i];
                for (int a = 0; a < m; ++a) acc += f[static_cast<size_t>(i) * m + a] * db[a];
                next[i] = acc;
            }
        }
    });
    return out;
}

IntegralPath lebesgue_integral(const ControlledSample& integrand, const Grid& grid) {
    if (integrand.nodes != grid.nodes()) throw std::invalid_argument("lebesgue_integral: grid mismatch");
    const int v = integrand.val_dim;
    const double dt = grid.dt();
    IntegralPath out(integrand.paths, integrand.nodes, v, IntegrandKind::lebesgue);
    parallel_for(integrand.paths, [&](long p) {
        for (int k = 0; k < grid.steps; ++k) {
            auto f = integrand.value_at(static_cast<int>(p), k);
            auto prev = out.at(static_cast<int>(p), k);
            auto next = out.at(static_cast<int>(p), k + 1);
            for (int i = 0; i < v; ++i) next[i] = prev[i] + f[i] * dt;
        }
    });
    return out;
}

ExpansionResidualTable local_expansion_residual(const IntegralPath& ip, const ControlledSample& phi,
                                                const RoughPath& rp, int p) {
    if (p != 2 && p != 4) throw std::invalid_argument("local_expansion_residual: p must be 2 or 4");
    const int n = rp.dim;
    const int v = ip.val_dim;
    if (phi.val_dim != v * n) throw std::invalid_argument("local_expansion_residual: shape mismatch");
    const int N = rp.grid.steps;
    std::vector<int> spans_steps;
    for (int h = 1; 2 * h <= N; h *= 2) spans_steps.push_back(h);
    if (spans_steps.size() < 4)
        throw std::invalid_argument("local_expansion_residual: fewer than 4 dyadic levels");

    ExpansionResidualTable tab;
    std::vector<double> res(v), mean_res(v);
    for (int h : spans_steps) {
        double acc = 0;
        long count = 0;
        double mean_acc = 0;
        long mean_count = 0;
        for (int s = 0; s + h <= N; ++s) {
            Window w = window(rp, s, s + h);
            std::fill(mean_res.begin(), mean_res.end(), 0.0);
            for (int path = 0; path < ip.paths; ++path) {
                auto i0 = ip.at(path, s);
                auto i1 = ip.at(path, s + h);
                auto f = phi.value_at(path, s);
                auto fp = phi.gub_at(path, s);
                for (int q = 0; q < v; ++q) {
                    double r = i1[q] - i0[q];
                    for (int mu = 0; mu < n; ++mu) r -= f[static_cast<size_t>(q) * n + mu] * w.delta[mu];
                    res[q] = r;
                }
                for (int q = 0; q < v; ++q) {
                    double l2 = 0;
                    for (int nu = 0; nu < n; ++nu)
                        for (int mu = 0; mu < n; ++mu)
                            l2 += fp[(static_cast<size_t>(q) * n + nu) * n + mu] * w.tensor[static_cast<size_t>(mu) * n + nu];
                    res[q] -= l2;
                    mean_res[q] += res[q];
                }
                acc += std::pow(frob_norm(res), p);
                ++count;
            }
            for (double& x : mean_res) x /= ip.paths;
            mean_acc += frob_norm(mean_res);
            ++mean_count;
        }
        tab.spans.push_back(h * rp.grid.dt());
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

std::string ExpansionResidualTable::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "h,moment,mean_residual\n";
    for (size_t i = 0; i < spans.size(); ++i)
        os << spans[i] << "," << moment[i] << "," << mean_residual[i] << "\n";
    return os.str();
}

}  // namespace rfk
