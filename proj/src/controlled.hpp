#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grid.hpp"
#include "roughpath.hpp"

namespace rfk {

using FieldFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// Deterministic time-dependent field R x R^d -> R^{rows x cols} with spatial
/// derivatives. Missing derivative callbacks fall back to central differences
/// with step max(1e-5, 1e-5 |x_a|) per coordinate.
///
/// Flat layouts (row-major, trailing derivative indices):
///   value[r*cols + c],  dx[(r*cols + c)*d + a],  dxx[((r*cols+c)*d + a)*d + b], ...
struct TimeField {
    int rows = 1;
    int cols = 1;
    int state_dim = 1;
    FieldFn value;
    FieldFn dx;    // optional
    FieldFn dxx;   // optional
    FieldFn dxxx;  // optional

    int size() const { return rows * cols; }
    void eval(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dxx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dxxx(double t, std::span<const double> x, std::span<double> out) const;
};

/// Deterministic controlled vector field (beta, beta'): beta maps into
/// R^{out_dim x n} and beta' supplies the driver-direction control of its time
/// increments, beta_t - beta_s ~ beta'_{., nu} dW^nu_{s,t}.
///
/// Layouts: value[(i*n + mu)], prime[(i*n + mu)*n + nu] = (beta'_{mu nu})^i,
/// spatial derivatives append trailing state indices as in TimeField.
struct ControlledVectorField {
    int out_dim = 1;
    int driver_dim = 1;
    int state_dim = 1;
    double time_holder = 0.5;  // declared delta
    FieldFn value;
    FieldFn prime;      // optional, zero when absent
    FieldFn dx;         // optional
    FieldFn dxx;        // optional
    FieldFn dxxx;       // optional
    FieldFn prime_dx;   // optional
    FieldFn prime_dxx;  // optional

    int size() const { return out_dim * driver_dim; }
    void eval(double t, std::span<const double> x, std::span<double> out) const;
    void eval_prime(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dxx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_dxxx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_prime_dx(double t, std::span<const double> x, std::span<double> out) const;
    void eval_prime_dxx(double t, std::span<const double> x, std::span<double> out) const;

    /// Full level-2 coefficient of the composed integrand at state x:
    /// out[(i*n + nu)*n + mu] = sum_a dx[(i,nu),a] value[(a? ...)]  -- see .cpp.
    /// This is the Gubinelli derivative of beta(t, X_t) when X' = beta(t, X_t).
    void eval_self_level2(double t, std::span<const double> x, std::span<double> out) const;
};

/// Per-path, per-node pairing (value, Gubinelli derivative) on a grid.
/// gub[(comp)*n + mu] is the driver-direction-mu coefficient of component comp.
struct ControlledSample {
    int paths = 0;
    int nodes = 0;  // N + 1
    int val_dim = 1;
    int driver_dim = 1;
    std::vector<double> value;  // paths x nodes x val_dim
    std::vector<double> gub;    // paths x nodes x val_dim x driver_dim

    ControlledSample() = default;
    ControlledSample(int M, int nodes_, int v, int n);

    std::span<double> value_at(int p, int k) {
        return {value.data() + (static_cast<size_t>(p) * nodes + k) * val_dim, static_cast<size_t>(val_dim)};
    }
    std::span<const double> value_at(int p, int k) const {
        return {value.data() + (static_cast<size_t>(p) * nodes + k) * val_dim, static_cast<size_t>(val_dim)};
    }
    std::span<double> gub_at(int p, int k) {
        return {gub.data() + (static_cast<size_t>(p) * nodes + k) * val_dim * driver_dim,
                static_cast<size_t>(val_dim) * driver_dim};
    }
    std::span<const double> gub_at(int p, int k) const {
        return {gub.data() + (static_cast<size_t>(p) * nodes + k) * val_dim * driver_dim,
                static_cast<size_t>(val_dim) * driver_dim};
    }
};

/// Composition (beta(X), D_x beta(X) X' + beta'(X)) along a sampled controlled
/// path. Times are taken on the grid of `rp` shifted by `time_offset` and
/// clamped at `time_cap` when nonnegative.
ControlledSample compose(const ControlledVectorField& cvf, const ControlledSample& cs,
                         const Grid& grid, double time_offset = 0.0, double time_cap = -1.0);

/// Empirical p-th moment table of |dX_{s,s+h}| and of the remainder
/// |R^X_{s,s+h}| = |dX - X'_s dW| over dyadic spans, with log-log slopes.
struct RemainderTable {
    int p = 2;
    std::vector<double> spans;       // h in time units
    std::vector<double> moment_dx;   // p-th root of mean |dX|^p
    std::vector<double> moment_rem;  // p-th root of mean |R^X|^p
    double slope_dx = 0.0;
    double slope_rem = 0.0;
    bool rem_zero = false;  // remainder exactly zero on every span
    std::string csv() const;
};

RemainderTable remainder_moments(const ControlledSample& cs, const RoughPath& rp, int p);

}  // namespace rfk
