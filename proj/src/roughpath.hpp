#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"
#include "mcstats.hpp"

namespace rfk {

/// Level-2 rough path on a uniform grid. Stores node values and one area
/// tensor per step; every window is rebuilt through Chen's relation, which
/// makes the relation an exact structural invariant of the representation.
///
/// Conventions: values[k*n + i] = W^i(t_k); areas[k*n*n + mu*n + nu] is the
/// step tensor A_k^{mu nu} ~ int_{t_k}^{t_{k+1}} dW^mu_{t_k,r} dW^nu_r.
/// The tensor norm is Frobenius throughout.
struct RoughPath {
    Grid grid;
    int dim = 1;
    std::vector<double> values;  // (N+1) x n
    std::vector<double> areas;   // N x n x n
    bool geometric = false;

    RoughPath() = default;
    RoughPath(Grid g, int n);

    std::span<const double> value(int k) const { return {values.data() + static_cast<size_t>(k) * dim, static_cast<size_t>(dim)}; }
    std::span<const double> area(int k) const {
        return {areas.data() + static_cast<size_t>(k) * dim * dim, static_cast<size_t>(dim) * dim};
    }
};

/// One window (dW_{t_i,t_j}, W2_{t_i,t_j}) of a rough path.
struct Window {
    std::vector<double> delta;   // n
    std::vector<double> tensor;  // n x n
};

/// Incremental Chen accumulation from a fixed left endpoint; extend() moves
/// the right endpoint one grid step at a time in O(n^2).
class WindowAccumulator {
public:
    WindowAccumulator(const RoughPath& rp, int left);
    void extend();  // [i, j] -> [i, j+1]
    int right() const { return right_; }
    std::span<const double> delta() const { return delta_; }
    std::span<const double> tensor() const { return tensor_; }

private:
    const RoughPath& rp_;
    int left_;
    int right_;
    std::vector<double> delta_;
    std::vector<double> tensor_;
};

Window window(const RoughPath& rp, int i, int j);

/// Canonical (Young) lift of a piecewise-smooth path sampled on a refinement
/// grid with R*N steps. Fine-step areas use the trapezoid rule and compose by
/// Chen; the result is weakly geometric.
RoughPath canonical_lift(std::span<const double> fine_samples, int dim, double horizon,
                         int target_steps, int refinement);

struct BrownianLift {
    RoughPath path;
    std::vector<double> coarse_increments;  // N x n, same underlying fine path
};

/// Ito lift of a simulated Brownian path: left-point Levy areas from R
/// sub-steps per coarse step. Not geometric.
BrownianLift brownian_ito_lift(int dim, double horizon, int steps, int refinement, Rng& rng);

/// Replace the symmetric part of every step tensor by 1/2 dW (x) dW, keeping
/// the antisymmetric (Levy area) part. Pathwise weakly geometric output.
RoughPath geometrize(const RoughPath& rp);

/// Time shift to grid node t_m: values advance by m and freeze at W_T, step
/// areas shift and vanish beyond T - s.
RoughPath shift(const RoughPath& rp, int m);

struct HolderNorms {
    double level1 = 0.0;  // sup |dW_{s,t}| / |t-s|^alpha
    double level2 = 0.0;  // sup |W2_{s,t}| / |t-s|^{2 alpha}
};

HolderNorms holder_norms(const RoughPath& rp, double alpha);

struct RhoAlphaReport {
    double alpha = 0.0;
    double level1_dist = 0.0;
    double level2_dist = 0.0;
    double total = 0.0;
};

/// Inhomogeneous alpha-Holder rough path distance over all grid pairs.
RhoAlphaReport rho_alpha(const RoughPath& a, const RoughPath& b, double alpha);

/// Largest per-entry Chen defect over the split i <= m <= j.
double chen_defect(const RoughPath& rp, int i, int m, int j);

/// Largest per-entry deviation of Sym(A_k) from 1/2 dW_k (x) dW_k at step k.
double geometric_defect(const RoughPath& rp, int k);

// CSV / JSON round trip ------------------------------------------------------

std::string values_csv(const RoughPath& rp);
std::string areas_csv(const RoughPath& rp);
std::string to_json(const RoughPath& rp);
RoughPath rough_path_from_json(const std::string& text);

}  // namespace rfk
