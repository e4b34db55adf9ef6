#pragma once

#include <stdexcept>

namespace rfk {

/// Uniform time grid t_k = k*T/N on [0, T].
struct Grid {
    double horizon = 1.0;
    int steps = 1;

    Grid() = default;
    Grid(double T, int N) : horizon(T), steps(N) {
        if (!(T > 0.0) || N < 1) throw std::invalid_argument("Grid: need T > 0 and N >= 1");
    }

    double dt() const { return horizon / steps; }
    double node(int k) const { return horizon * k / steps; }
    int nodes() const { return steps + 1; }

    bool operator==(const Grid& o) const { return horizon == o.horizon && steps == o.steps; }
};

}  // namespace rfk
