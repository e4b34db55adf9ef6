#pragma once

#include <string>
#include <vector>

#include "controlled.hpp"
#include "roughpath.hpp"

namespace rfk {

enum class IntegrandKind { rough, ito, lebesgue };

/// Accumulated integral per grid node per path; values_at(p, 0) = 0 and the
/// increment over [t_i, t_j] is values(j) - values(i) by construction.
struct IntegralPath {
    int paths = 0;
    int nodes = 0;
    int val_dim = 1;
    IntegrandKind kind = IntegrandKind::rough;
    std::vector<double> values;  // paths x nodes x val_dim

    IntegralPath() = default;
    IntegralPath(int M, int nodes_, int v, IntegrandKind k)
        : paths(M), nodes(nodes_), val_dim(v), kind(k) {
        values.assign(static_cast<size_t>(M) * nodes_ * v, 0.0);
    }
    std::span<double> at(int p, int k) {
        return {values.data() + (static_cast<size_t>(p) * nodes + k) * val_dim, static_cast<size_t>(val_dim)};
    }
    std::span<const double> at(int p, int k) const {
        return {values.data() + (static_cast<size_t>(p) * nodes + k) * val_dim, static_cast<size_t>(val_dim)};
    }
};

/// Sampled Brownian increments, paths x steps x dim.
struct BrownianPaths {
    int paths = 0;
    int steps = 0;
    int dim = 1;
    std::vector<double> inc;

    BrownianPaths() = default;
    BrownianPaths(int M, int N, int m) : paths(M), steps(N), dim(m) {
        inc.assign(static_cast<size_t>(M) * N * m, 0.0);
    }
    std::span<double> at(int p, int k) {
        return {inc.data() + (static_cast<size_t>(p) * steps + k) * dim, static_cast<size_t>(dim)};
    }
    std::span<const double> at(int p, int k) const {
        return {inc.data() + (static_cast<size_t>(p) * steps + k) * dim, static_cast<size_t>(dim)};
    }
};

BrownianPaths sample_brownian(int paths, int steps, int dim, double horizon, const SeedLedger& ledger,
                              std::string_view tag, uint64_t mesh_index = 0);

/// Compensated-sum rough stochastic integral: per-step increment
/// phi_k dW_k + phi'_k A_k, accumulated. phi.val_dim must be v * n.
IntegralPath rough_integral(const ControlledSample& phi, const RoughPath& rp);

/// Left-point Ito sums of a per-node integrand nu (paths x nodes x (v*m)).
IntegralPath ito_integral(const ControlledSample& nu, const BrownianPaths& brownian);

/// Left-rectangle Lebesgue integral of a per-node integrand (paths x nodes x v).
IntegralPath lebesgue_integral(const ControlledSample& integrand, const Grid& grid);

/// Empirical moments of the one-window expansion residual
/// int_s^t - phi_s dW_{s,t} - phi'_s W2_{s,t} over dyadic spans.
struct ExpansionResidualTable {
    std::vector<double> spans;
    std::vector<double> moment;         // p-th root of mean |residual|^p
    std::vector<double> mean_residual;  // norm of the path-averaged residual
    double slope_moment = 0.0;
    double slope_mean = 0.0;
    bool zero = false;
    std::string csv() const;
};

ExpansionResidualTable local_expansion_residual(const IntegralPath& ip, const ControlledSample& phi,
                                                const RoughPath& rp, int p);

}  // namespace rfk
