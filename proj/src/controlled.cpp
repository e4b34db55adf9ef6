#include "controlled.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "linalg.hpp"
#include "mcstats.hpp"

namespace rfk {

namespace {

double fd_step(double xa) { return std::max(1e-5, 1e-5 * std::abs(xa)); }

/// Enforce Schwarz symmetry on the trailing two indices of a nested
/// finite-difference Hessian block.
void symmetrize_trailing(std::span<double> out, int len, int d) {
    for (int q = 0; q < len; ++q) {
        double* blk = out.data() + static_cast<size_t>(q) * d * d;
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b) {
                const double avg = 0.5 * (blk[static_cast<size_t>(a) * d + b] + blk[static_cast<size_t>(b) * d + a]);
                blk[static_cast<size_t>(a) * d + b] = avg;
                blk[static_cast<size_t>(b) * d + a] = avg;
            }
    }
}

/// Central difference of `fn` (producing `len` outputs) in every state
/// coordinate; out has len * d entries, derivative index trailing.
void central_diff(const std::function<void(double, std::span<const double>, std::span<double>)>& fn,
                  int len, int d, double t, std::span<const double> x, std::span<double> out) {
    std::vector<double> xp(x.begin(), x.end());
    std::vector<double> hi(len), lo(len);
    for (int a = 0; a < d; ++a) {
        const double h = fd_step(x[a]);
        const double keep = xp[a];
        xp[a] = keep + h;
        fn(t, xp, hi);
        xp[a] = keep - h;
        fn(t, xp, lo);
        xp[a] = keep;
        for (int q = 0; q < len; ++q) out[static_cast<size_t>(q) * d + a] = (hi[q] - lo[q]) / (2.0 * h);
    }
}

}  // namespace

void TimeField::eval(double t, std::span<const double> x, std::span<double> out) const {
    if (!value) throw std::invalid_argument("TimeField: missing value callback");
    value(t, x, out);
}

void TimeField::eval_dx(double t, std::span<const double> x, std::span<double> out) const {
    if (dx) {
        dx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval(tt, xx, oo); },
                 size(), state_dim, t, x, out);
}

void TimeField::eval_dxx(double t, std::span<const double> x, std::span<double> out) const {
    if (dxx) {
        dxx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval_dx(tt, xx, oo); },
                 size() * state_dim, state_dim, t, x, out);
    symmetrize_trailing(out, size(), state_dim);
}

void TimeField::eval_dxxx(double t, std::span<const double> x, std::span<double> out) const {
    if (dxxx) {
        dxxx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval_dxx(tt, xx, oo); },
                 size() * state_dim * state_dim, state_dim, t, x, out);
}

void ControlledVectorField::eval(double t, std::span<const double> x, std::span<double> out) const {
    if (!value) throw std::invalid_argument("ControlledVectorField: missing value callback");
    value(t, x, out);
}

void ControlledVectorField::eval_prime(double t, std::span<const double> x, std::span<double> out) const {
    if (prime) {
        prime(t, x, out);
        return;
    }
    std::fill(out.begin(), out.end(), 0.0);
}

void ControlledVectorField::eval_dx(double t, std::span<const double> x, std::span<double> out) const {
    if (dx) {
        dx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval(tt, xx, oo); },
                 size(), state_dim, t, x, out);
}

void ControlledVectorField::eval_dxx(double t, std::span<const double> x, std::span<double> out) const {
    if (dxx) {
        dxx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval_dx(tt, xx, oo); },
                 size() * state_dim, state_dim, t, x, out);
    symmetrize_trailing(out, size(), state_dim);
}

void ControlledVectorField::eval_dxxx(double t, std::span<const double> x, std::span<double> out) const {
    if (dxxx) {
        dxxx(t, x, out);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval_dxx(tt, xx, oo); },
                 size() * state_dim * state_dim, state_dim, t, x, out);
}

void ControlledVectorField::eval_prime_dx(double t, std::span<const double> x, std::span<double> out) const {
    if (prime_dx) {
        prime_dx(t, x, out);
        return;
    }
    if (!prime) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    central_diff([this](double tt, std::span<const double> xx, std::span<double> oo) { eval_prime(tt, xx, oo); },
                 size() * driver_dim, state_dim, t, x, out);
}

void ControlledVectorField::eval_prime_dxx(double t, std::span<const double> x, std::span<double> out) const {
    if (prime_dxx) {
        prime_dxx(t, x, out);
        return;
    }
    if (!prime) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    central_diff(
        [this](double tt, std::span<const double> xx, std::span<double> oo) { eval_prime_dx(tt, xx, oo); },
        size() * driver_dim * state_dim, state_dim, t, x, out);
    symmetrize_trailing(out, size() * driver_dim, state_dim);
}

void ControlledVectorField::eval_self_level2(double t, std::span<const double> x,
                                             std::span<double> out) const {
    const int d = out_dim;
    const int n = driver_dim;
    std::vector<double> val(static_cast<size_t>(d) * n);
    std::vector<double> grad(static_cast<size_t>(d) * n * state_dim);
    eval(t, x, val);
    eval_dx(t, x, grad);
    eval_prime(t, x, out);  // out starts as (beta'_{nu mu})^i
    for (int i = 0; i < d; ++i)
        for (int nu = 0; nu < n; ++nu)
            for (int mu = 0; mu < n; ++mu) {
                double acc = 0;
                for (int a = 0; a < state_dim; ++a)
                    acc += grad[(static_cast<size_t>(i) * n + nu) * state_dim + a] * val[static_cast<size_t>(a) * n + mu];
                out[(static_cast<size_t>(i) * n + nu) * n + mu] += acc;
            }
}

ControlledSample::ControlledSample(int M, int nodes_, int v, int n)
    : paths(M), nodes(nodes_), val_dim(v), driver_dim(n) {
    value.assign(static_cast<size_t>(M) * nodes_ * v, 0.0);
    gub.assign(static_cast<size_t>(M) * nodes_ * v * n, 0.0);
}

ControlledSample compose(const ControlledVectorField& cvf, const ControlledSample& cs,
                         const Grid& grid, double time_offset, double time_cap) {
    if (cs.val_dim != cvf.state_dim)
        throw std::invalid_argument("compose: sample value dimension != field state dimension");
    if (cs.driver_dim != cvf.driver_dim) throw std::invalid_argument("compose: driver dimension mismatch");
    if (cs.nodes != grid.nodes()) throw std::invalid_argument("compose: grid mismatch");

    const int d = cvf.state_dim;
    const int n = cvf.driver_dim;
    const int v = cvf.out_dim * n;
    ControlledSample out(cs.paths, cs.nodes, v, n);

    std::vector<double> grad(static_cast<size_t>(v) * d), pr(static_cast<size_t>(v) * n);
    for (int p = 0; p < cs.paths; ++p) {
        for (int k = 0; k < cs.nodes; ++k) {
            double t = time_offset + grid.node(k);
            if (time_cap >= 0.0 && t > time_cap) t = time_cap;
            auto x = cs.value_at(p, k);
            auto xp = cs.gub_at(p, k);
            cvf.eval(t, x, out.value_at(p, k));
            cvf.eval_dx(t, x, grad);
            cvf.eval_prime(t, x, pr);
            auto z = out.gub_at(p, k);
            for (int q = 0; q < v; ++q)
                for (int nu = 0; nu < n; ++nu) {
                    double acc = pr[static_cast<size_t>(q) * n + nu];
                    for (int a = 0; a < d; ++a)
                        acc += grad[static_cast<size_t>(q) * d + a] * xp[static_cast<size_t>(a) * n + nu];
                    z[static_cast<size_t>(q) * n + nu] = acc;
                }
        }
    }
    return out;
}

RemainderTable remainder_moments(const ControlledSample& cs, const RoughPath& rp, int p) {
    if (p != 2 && p != 4 && p != 8) throw std::invalid_argument("remainder_moments: p must be 2, 4 or 8");
    if (cs.nodes != rp.grid.nodes() || cs.driver_dim != rp.dim)
        throw std::invalid_argument("remainder_moments: grid mismatch");
    const int N = rp.grid.steps;
    std::vector<int> spans_steps;
    for (int h = 1; 2 * h <= N; h *= 2) spans_steps.push_back(h);
    if (spans_steps.size() < 4) throw std::invalid_argument("remainder_moments: fewer than 4 dyadic levels");

    RemainderTable tab;
    tab.p = p;
    const int v = cs.val_dim;
    const int n = cs.driver_dim;
    std::vector<double> rem(v);
    for (int h : spans_steps) {
        double acc_dx = 0, acc_rem = 0;
        long count = 0;
        for (int path = 0; path < cs.paths; ++path) {
            for (int s = 0; s + h <= N; ++s) {
                auto x0 = cs.value_at(path, s);
                auto x1 = cs.value_at(path, s + h);
                auto g = cs.gub_at(path, s);
                auto w0 = rp.value(s);
                auto w1 = rp.value(s + h);
                double ndx = 0;
                for (int q = 0; q < v; ++q) {
                    double r = x1[q] - x0[q];
                    ndx += r * r;
                    for (int mu = 0; mu < n; ++mu) r -= g[static_cast<size_t>(q) * n + mu] * (w1[mu] - w0[mu]);
                    rem[q] = r;
                }
                acc_dx += std::pow(ndx, 0.5 * p);
                acc_rem += std::pow(frob_norm(rem), p);
                ++count;
            }
        }
        tab.spans.push_back(h * rp.grid.dt());
        tab.moment_dx.push_back(std::pow(acc_dx / count, 1.0 / p));
        tab.moment_rem.push_back(std::pow(acc_rem / count, 1.0 / p));
    }

    tab.rem_zero = true;
    for (double m : tab.moment_rem)
        if (m > 0.0) tab.rem_zero = false;
    if (*std::min_element(tab.moment_dx.begin(), tab.moment_dx.end()) > 0.0)
        tab.slope_dx = slope_fit(tab.spans, tab.moment_dx).slope;
    if (*std::min_element(tab.moment_rem.begin(), tab.moment_rem.end()) > 0.0)
        tab.slope_rem = slope_fit(tab.spans, tab.moment_rem).slope;
    return tab;
}

std::string RemainderTable::csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "h,p,moment_dX,moment_RX\n";
    for (size_t i = 0; i < spans.size(); ++i)
        os << spans[i] << "," << p << "," << moment_dx[i] << "," << moment_rem[i] << "\n";
    return os.str();
}

}  // namespace rfk
