#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlled.hpp"
#include "integrator.hpp"
#include "roughpath.hpp"

namespace rfk {

/// Raised by the solvers when a state stops being finite. Coefficients are
/// bounded under the standing assumptions, so this signals a user error.
struct SimulationError : std::runtime_error {
    int path;
    int step;
    SimulationError(int p, int k)
        : std::runtime_error("non-finite state at path " + std::to_string(p) + ", step " +
                             std::to_string(k)),
          path(p),
          step(k) {}
};

/// Hybrid equation coefficients dX = b dt + sigma dB + (beta, beta') dW.
/// A missing value callback means the corresponding term is absent.
struct RsdeCoefficients {
    TimeField drift;                // d
    TimeField diffusion;            // d x m
    ControlledVectorField rough;    // (beta, beta'), d x n

    bool has_drift() const { return static_cast<bool>(drift.value); }
    bool has_diffusion() const { return static_cast<bool>(diffusion.value); }
    bool has_rough() const { return static_cast<bool>(rough.value); }
};

/// M sampled trajectories of (X, beta(X)) plus the Brownian increments that
/// generated them. state.gub holds beta(t_k, X_k), recomputable entrywise.
struct HybridPathEnsemble {
    Grid grid;
    int dim = 1;
    ControlledSample state;      // val_dim = d, gub = beta(t, X)
    BrownianPaths brownian;
    std::vector<uint64_t> path_keys;
};

/// One-step truncated Davie expansion:
///   X_{k+1} = X_k + b dt + sigma dB_k + beta dW_k
///           + (D_x beta . beta + beta') A_k.
/// Coefficient times are time_offset + t_k, clamped at time_cap when >= 0.
/// With beta == 0 this is Euler-Maruyama, bitwise.
HybridPathEnsemble solve_rsde(const RsdeCoefficients& coeffs, std::span<const double> x0,
                              const RoughPath& rp, const BrownianPaths& brownian,
                              double time_offset = 0.0, double time_cap = -1.0);

/// Linear rough SDE coefficients along a frozen base ensemble, evaluated per
/// (path, node). Layouts:
///   G: d x d,  S: m x d x d,  f: (d*n) x d,  fp: (d*n*n) x d.
/// Null callbacks mean zero; `forcing` may be null for no forcing term.
struct LinearCoefficients {
    int dim = 1;
    int driver_dim = 1;
    int bm_dim = 1;
    std::function<void(int p, int k, std::span<double> out)> G;
    std::function<void(int p, int k, std::span<double> out)> S;
    std::function<void(int p, int k, std::span<double> out)> f;
    std::function<void(int p, int k, std::span<double> out)> fp;
    const ControlledSample* forcing = nullptr;  // (F, F'), val_dim = d
};

/// One-step scheme for the linear equation with forcing:
///   Y_{k+1} = Y_k + dF_k + G Y dt + S Y dB + f Y dW
///           + (f' Y + f (f Y + F')) A_k.
/// Returns trajectories with gub = f Y + F' (the solution's Gubinelli
/// derivative). xi is one initial vector per path or a single shared vector.
ControlledSample solve_linear_rsde(const LinearCoefficients& lc, std::span<const double> xi,
                                   const RoughPath& rp, const BrownianPaths& brownian);

/// Davie remainder X^nat over dyadic spans of a reference solution on a finer
/// grid: the span increments minus the one-window expansion at the left edge.
/// Spans start at coarse_factor fine steps. Integral terms are the scheme's
/// own accumulated drift / Ito sums, so the measurement carries no extra
/// quadrature error.
ExpansionResidualTable davie_remainder_scaling(const HybridPathEnsemble& fine,
                                               const RsdeCoefficients& coeffs, const RoughPath& fine_rp,
                                               int p, int coarse_factor = 4, double time_offset = 0.0,
                                               double time_cap = -1.0);

struct StabilityReport {
    double sol_dist = 0.0;    // sup over nodes of L_p distance of states
    double init_dist = 0.0;   // L_p distance of initial conditions
    RhoAlphaReport driver;    // rho_alpha of the two drivers
    double coeff_dist = 0.0;  // caller-supplied coefficient sup-distance
};

/// Common-random-number stability probe between two solved scenarios.
StabilityReport stability_probe(const HybridPathEnsemble& a, const HybridPathEnsemble& b,
                                const RoughPath& rp_a, const RoughPath& rp_b, double alpha, int p,
                                double coeff_dist = 0.0);

/// sup over nodes of the empirical L_p distance between two state arrays.
double ensemble_lp_distance(const ControlledSample& a, const ControlledSample& b, int p);

std::string ensemble_csv(const HybridPathEnsemble& ens);

}  // namespace rfk
