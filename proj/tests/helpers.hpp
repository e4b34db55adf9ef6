#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "controlled.hpp"
#include "roughpath.hpp"

namespace rfk::testing {

/// Sample a closed-form path on the fine grid used by canonical_lift.
inline std::vector<double> sample_path(const std::function<void(double, double*)>& f, int dim,
                                       double horizon, int steps, int refinement) {
    const long fine = static_cast<long>(steps) * refinement;
    std::vector<double> out(static_cast<size_t>(fine + 1) * dim);
    for (long q = 0; q <= fine; ++q) f(horizon * q / fine, out.data() + static_cast<size_t>(q) * dim);
    return out;
}

inline RoughPath canonical_sin(double horizon, int steps, int refinement = 64) {
    auto s = sample_path([](double t, double* w) { w[0] = std::sin(t); }, 1, horizon, steps, refinement);
    return canonical_lift(s, 1, horizon, steps, refinement);
}

inline RoughPath canonical_circle(double horizon, int steps, int refinement = 64) {
    auto s = sample_path(
        [](double t, double* w) {
            w[0] = std::cos(t);
            w[1] = std::sin(t);
        },
        2, horizon, steps, refinement);
    return canonical_lift(s, 2, horizon, steps, refinement);
}

/// n = 1 constant rough coefficient beta(x) = c.
inline ControlledVectorField const_beta(double c, int d = 1) {
    ControlledVectorField cvf;
    cvf.out_dim = d;
    cvf.driver_dim = 1;
    cvf.state_dim = d;
    cvf.value = [c, d](double, std::span<const double>, std::span<double> out) {
        for (int i = 0; i < d; ++i) out[i] = c;
    };
    cvf.dx = [d](double, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
        (void)d;
    };
    cvf.dxx = cvf.dx;
    cvf.dxxx = [](double, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };
    return cvf;
}

/// Scalar beta(x) = c * x (n = d = 1).
inline ControlledVectorField linear_beta(double c) {
    ControlledVectorField cvf;
    cvf.out_dim = cvf.driver_dim = cvf.state_dim = 1;
    cvf.value = [c](double, std::span<const double> x, std::span<double> out) { out[0] = c * x[0]; };
    cvf.dx = [c](double, std::span<const double>, std::span<double> out) { out[0] = c; };
    cvf.dxx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    cvf.dxxx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    return cvf;
}

/// Scalar beta(x) = c * tanh(x) with analytic derivatives (n = d = 1).
inline ControlledVectorField tanh_beta(double c) {
    ControlledVectorField cvf;
    cvf.out_dim = cvf.driver_dim = cvf.state_dim = 1;
    cvf.value = [c](double, std::span<const double> x, std::span<double> out) { out[0] = c * std::tanh(x[0]); };
    cvf.dx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        out[0] = c * (1.0 - th * th);
    };
    cvf.dxx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        out[0] = c * (-2.0 * th * (1.0 - th * th));
    };
    cvf.dxxx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        const double s2 = 1.0 - th * th;
        out[0] = c * (-2.0 * s2 * s2 + 4.0 * th * th * s2);
    };
    return cvf;
}

inline TimeField scalar_field(int d, std::function<double(double, std::span<const double>)> f) {
    TimeField tf;
    tf.rows = 1;
    tf.cols = 1;
    tf.state_dim = d;
    tf.value = [f](double t, std::span<const double> x, std::span<double> out) { out[0] = f(t, x); };
    return tf;
}

inline TimeField const_diffusion(double s, int d = 1, int m = 1) {
    TimeField tf;
    tf.rows = d;
    tf.cols = m;
    tf.state_dim = d;
    tf.value = [s, d, m](double, std::span<const double>, std::span<double> out) {
        for (int i = 0; i < d * m; ++i) out[i] = 0.0;
        for (int i = 0; i < std::min(d, m); ++i) out[static_cast<size_t>(i) * m + i] = s;
    };
    tf.dx = [](double, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };
    tf.dxx = tf.dx;
    return tf;
}

}  // namespace rfk::testing
