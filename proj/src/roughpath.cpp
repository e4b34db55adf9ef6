#include "roughpath.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "linalg.hpp"

namespace rfk {

RoughPath::RoughPath(Grid g, int n) : grid(g), dim(n) {
    if (n < 1) throw std::invalid_argument("RoughPath: dimension must be positive");
    values.assign(static_cast<size_t>(g.nodes()) * n, 0.0);
    areas.assign(static_cast<size_t>(g.steps) * n * n, 0.0);
}

WindowAccumulator::WindowAccumulator(const RoughPath& rp, int left)
    : rp_(rp), left_(left), right_(left) {
    if (left < 0 || left > rp.grid.steps) throw std::out_of_range("WindowAccumulator: left index");
    delta_.assign(rp.dim, 0.0);
    tensor_.assign(static_cast<size_t>(rp.dim) * rp.dim, 0.0);
}

void WindowAccumulator::extend() {
    const int n = rp_.dim;
    const int j = right_;
    if (j >= rp_.grid.steps) throw std::out_of_range("WindowAccumulator: extend past horizon");
    auto a = rp_.area(j);
    auto wj = rp_.value(j);
    auto wj1 = rp_.value(j + 1);
    // Chen: W2_{i,j+1} = W2_{i,j} + A_j + dW_{i,j} (x) dW_{j,j+1}
    for (int mu = 0; mu < n; ++mu) {
        const double dmu = delta_[mu];
        for (int nu = 0; nu < n; ++nu)
            tensor_[static_cast<size_t>(mu) * n + nu] += a[static_cast<size_t>(mu) * n + nu] + dmu * (wj1[nu] - wj[nu]);
    }
    for (int i = 0; i < n; ++i) delta_[i] += wj1[i] - wj[i];
    ++right_;
}

Window window(const RoughPath& rp, int i, int j) {
    if (i < 0 || j < i || j > rp.grid.steps) throw std::out_of_range("window: bad indices");
    WindowAccumulator acc(rp, i);
    while (acc.right() < j) acc.extend();
    Window w;
    w.delta.assign(acc.delta().begin(), acc.delta().end());
    w.tensor.assign(acc.tensor().begin(), acc.tensor().end());
    return w;
}

RoughPath canonical_lift(std::span<const double> fine_samples, int dim, double horizon,
                         int target_steps, int refinement) {
    if (refinement < 1) throw std::invalid_argument("canonical_lift: refinement must be >= 1");
    const long fine_steps = static_cast<long>(target_steps) * refinement;
    if (static_cast<long>(fine_samples.size()) != (fine_steps + 1) * dim)
        throw std::invalid_argument("canonical_lift: sample count does not match R*N+1 nodes");

    RoughPath rp(Grid(horizon, target_steps), dim);
    rp.geometric = true;
    auto fine = [&](long q, int i) { return fine_samples[static_cast<size_t>(q) * dim + i]; };

    for (int k = 0; k <= target_steps; ++k)
        for (int i = 0; i < dim; ++i)
            rp.values[static_cast<size_t>(k) * dim + i] = fine(static_cast<long>(k) * refinement, i);

    std::vector<double> delta(dim);
    for (int k = 0; k < target_steps; ++k) {
        double* A = rp.areas.data() + static_cast<size_t>(k) * dim * dim;
        std::fill(delta.begin(), delta.end(), 0.0);
        const long base = static_cast<long>(k) * refinement;
        for (int q = 0; q < refinement; ++q) {
            // trapezoid fine-step area 1/2 dw (x) dw, composed by Chen
            for (int mu = 0; mu < dim; ++mu) {
                const double dmu = fine(base + q + 1, mu) - fine(base + q, mu);
                for (int nu = 0; nu < dim; ++nu) {
                    const double dnu = fine(base + q + 1, nu) - fine(base + q, nu);
                    A[static_cast<size_t>(mu) * dim + nu] += 0.5 * dmu * dnu + delta[mu] * dnu;
                }
            }
            for (int i = 0; i < dim; ++i) delta[i] += fine(base + q + 1, i) - fine(base + q, i);
        }
    }
    return rp;
}

BrownianLift brownian_ito_lift(int dim, double horizon, int steps, int refinement, Rng& rng) {
    if (!(horizon > 0.0) || steps < 1 || refinement < 2)
        throw std::invalid_argument("brownian_ito_lift: need T > 0, N >= 1, R >= 2");

    BrownianLift out;
    out.path = RoughPath(Grid(horizon, steps), dim);
    out.path.geometric = false;
    out.coarse_increments.assign(static_cast<size_t>(steps) * dim, 0.0);

    const double dt_fine = horizon / (static_cast<double>(steps) * refinement);
    const double sq = std::sqrt(dt_fine);

    std::vector<double> delta(dim), dw(dim);
    for (int k = 0; k < steps; ++k) {
        double* A = out.path.areas.data() + static_cast<size_t>(k) * dim * dim;
        double* inc = out.coarse_increments.data() + static_cast<size_t>(k) * dim;
        std::fill(delta.begin(), delta.end(), 0.0);
        for (int q = 0; q < refinement; ++q) {
            for (int i = 0; i < dim; ++i) dw[i] = sq * rng.next_normal();
            // left-point sums: fine-step area is zero, only the Chen cross term
            for (int mu = 0; mu < dim; ++mu)
                for (int nu = 0; nu < dim; ++nu) A[static_cast<size_t>(mu) * dim + nu] += delta[mu] * dw[nu];
            for (int i = 0; i < dim; ++i) delta[i] += dw[i];
        }
        for (int i = 0; i < dim; ++i) {
            inc[i] = delta[i];
            out.path.values[static_cast<size_t>(k + 1) * dim + i] =
                out.path.values[static_cast<size_t>(k) * dim + i] + delta[i];
        }
    }
    return out;
}

RoughPath geometrize(const RoughPath& rp) {
    RoughPath out = rp;
    const int n = rp.dim;
    for (int k = 0; k < rp.grid.steps; ++k) {
        auto w0 = rp.value(k);
        auto w1 = rp.value(k + 1);
        double* A = out.areas.data() + static_cast<size_t>(k) * n * n;
        for (int mu = 0; mu < n; ++mu)
            for (int nu = mu; nu < n; ++nu) {
                const size_t ij = static_cast<size_t>(mu) * n + nu;
                const size_t ji = static_cast<size_t>(nu) * n + mu;
                const double anti = 0.5 * (A[ij] - A[ji]);
                const double sym = 0.5 * (w1[mu] - w0[mu]) * (w1[nu] - w0[nu]);
                A[ij] = sym + anti;
                A[ji] = sym - anti;
            }
    }
    out.geometric = true;
    return out;
}

RoughPath shift(const RoughPath& rp, int m) {
    if (m < 0 || m > rp.grid.steps) throw std::invalid_argument("shift: s must be a grid node");
    const int n = rp.dim;
    const int N = rp.grid.steps;
    RoughPath out(rp.grid, n);
    out.geometric = rp.geometric;
    for (int k = 0; k <= N; ++k) {
        const int src = std::min(m + k, N);
        for (int i = 0; i < n; ++i)
            out.values[static_cast<size_t>(k) * n + i] = rp.values[static_cast<size_t>(src) * n + i];
    }
    for (int k = 0; k < N; ++k) {
        if (m + k < N) {
            const double* src = rp.areas.data() + static_cast<size_t>(m + k) * n * n;
            std::copy(src, src + static_cast<size_t>(n) * n, out.areas.data() + static_cast<size_t>(k) * n * n);
        }
        // beyond T - s the path is frozen and the window tensor vanishes
    }
    return out;
}

HolderNorms holder_norms(const RoughPath& rp, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("holder_norms: alpha out of (0,1]");
    HolderNorms out;
    const int N = rp.grid.steps;
    const double dt = rp.grid.dt();
    for (int i = 0; i < N; ++i) {
        WindowAccumulator acc(rp, i);
        for (int j = i + 1; j <= N; ++j) {
            acc.extend();
            const double span = dt * (j - i);
            out.level1 = std::max(out.level1, frob_norm(acc.delta()) / std::pow(span, alpha));
            out.level2 = std::max(out.level2, frob_norm(acc.tensor()) / std::pow(span, 2.0 * alpha));
        }
    }
    return out;
}

RhoAlphaReport rho_alpha(const RoughPath& a, const RoughPath& b, double alpha) {
    if (!(a.grid == b.grid) || a.dim != b.dim)
        throw std::invalid_argument("rho_alpha: grid or dimension mismatch");
    RhoAlphaReport rep;
    rep.alpha = alpha;
    const int N = a.grid.steps;
    const double dt = a.grid.dt();
    for (int i = 0; i < N; ++i) {
        WindowAccumulator wa(a, i), wb(b, i);
        for (int j = i + 1; j <= N; ++j) {
            wa.extend();
            wb.extend();
            const double span = dt * (j - i);
            rep.level1_dist = std::max(rep.level1_dist,
                                       frob_dist(wa.delta(), wb.delta()) / std::pow(span, alpha));
            rep.level2_dist = std::max(rep.level2_dist,
                                       frob_dist(wa.tensor(), wb.tensor()) / std::pow(span, 2.0 * alpha));
        }
    }
    rep.total = rep.level1_dist + rep.level2_dist;
    return rep;
}

double chen_defect(const RoughPath& rp, int i, int m, int j) {
    if (!(0 <= i && i <= m && m <= j && j <= rp.grid.steps))
        throw std::out_of_range("chen_defect: need 0 <= i <= m <= j <= N");
    const int n = rp.dim;
    Window full = window(rp, i, j);
    Window left = window(rp, i, m);
    Window right = window(rp, m, j);
    double worst = 0.0;
    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) {
            const size_t q = static_cast<size_t>(mu) * n + nu;
            const double d = full.tensor[q] - left.tensor[q] - right.tensor[q] -
                             left.delta[mu] * right.delta[nu];
            worst = std::max(worst, std::abs(d));
        }
    return worst;
}

double geometric_defect(const RoughPath& rp, int k) {
    const int n = rp.dim;
    auto w0 = rp.value(k);
    auto w1 = rp.value(k + 1);
    auto A = rp.area(k);
    double worst = 0.0;
    for (int mu = 0; mu < n; ++mu)
        for (int nu = 0; nu < n; ++nu) {
            const double sym = 0.5 * (A[static_cast<size_t>(mu) * n + nu] + A[static_cast<size_t>(nu) * n + mu]);
            const double target = 0.5 * (w1[mu] - w0[mu]) * (w1[nu] - w0[nu]);
            worst = std::max(worst, std::abs(sym - target));
        }
    return worst;
}

std::string values_csv(const RoughPath& rp) {
    std::ostringstream os;
    os.precision(17);
    os << "t";
    for (int i = 0; i < rp.dim; ++i) os << ",W_" << (i + 1);
    os << "\n";
    for (int k = 0; k <= rp.grid.steps; ++k) {
        os << rp.grid.node(k);
        for (int i = 0; i < rp.dim; ++i) os << "," << rp.values[static_cast<size_t>(k) * rp.dim + i];
        os << "\n";
    }
    return os.str();
}

std::string areas_csv(const RoughPath& rp) {
    std::ostringstream os;
    os.precision(17);
    os << "k";
    for (int mu = 0; mu < rp.dim; ++mu)
        for (int nu = 0; nu < rp.dim; ++nu) os << ",A_" << (mu + 1) << (nu + 1);
    os << "\n";
    for (int k = 0; k < rp.grid.steps; ++k) {
        os << k;
        auto a = rp.area(k);
        for (size_t q = 0; q < a.size(); ++q) os << "," << a[q];
        os << "\n";
    }
    return os.str();
}

std::string to_json(const RoughPath& rp) {
    nlohmann::json j;
    j["horizon"] = rp.grid.horizon;
    j["steps"] = rp.grid.steps;
    j["dim"] = rp.dim;
    j["geometric"] = rp.geometric;
    j["values"] = rp.values;
    j["areas"] = rp.areas;
    return j.dump();
}

RoughPath rough_path_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RoughPath rp(Grid(j.at("horizon").get<double>(), j.at("steps").get<int>()), j.at("dim").get<int>());
    rp.geometric = j.at("geometric").get<bool>();
    rp.values = j.at("values").get<std::vector<double>>();
    rp.areas = j.at("areas").get<std::vector<double>>();
    if (rp.values.size() != static_cast<size_t>(rp.grid.nodes()) * rp.dim ||
        rp.areas.size() != static_cast<size_t>(rp.grid.steps) * rp.dim * rp.dim)
        throw std::invalid_argument("rough_path_from_json: inconsistent array sizes");
    return rp;
}

}  // namespace rfk
