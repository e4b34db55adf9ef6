#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace rfk {

inline double frob_norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double frob_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Level-2 contraction of a Gubinelli derivative against a window tensor:
///   out[i] += sum_{mu,nu} gub[(i*n + nu)*n + mu] * w2[mu*n + nu],
/// i.e. the coefficient of the component (i, nu) in driver direction mu pairs
/// with W^{mu nu}. Matches the expansion delta(phi)_{i,nu} ~ gub[(i,nu),mu] dW^mu.
inline void contract_level2(std::span<const double> gub, std::span<const double> w2, int val_dim,
                            int n, std::span<double> out) {
    for (int i = 0; i < val_dim; ++i) {
        double acc = 0;
        for (int nu = 0; nu < n; ++nu)
            for (int mu = 0; mu < n; ++mu) acc += gub[(static_cast<size_t>(i) * n + nu) * n + mu] * w2[static_cast<size_t>(mu) * n + nu];
        out[i] += acc;
    }
}

}  // namespace rfk
