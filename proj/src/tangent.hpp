#pragma once

#include <functional>
#include <vector>

#include "rsde.hpp"

namespace rfk {

/// First or second variation trajectories of an RSDE solution. sol.gub holds
/// the solution's Gubinelli derivative f Y + F'.
struct TangentEnsemble {
    int direction_i = -1;
    int direction_j = -1;  // >= 0 only for second variations
    ControlledSample sol;
};

/// Linearized coefficients along a frozen base ensemble:
///   G = D_x b(X), S = D_x sigma(X),
///   (f, f') = (D_x beta(X), D^2_xx beta(X) beta(X) + D_x beta'(X)).
/// The returned callbacks capture `coeffs` and `base` by reference; both must
/// outlive the result.
LinearCoefficients tangent_linearization(const RsdeCoefficients& coeffs, const HybridPathEnsemble& base,
                                         double time_offset = 0.0, double time_cap = -1.0);

/// Solves the first-variation linear RSDE with xi = direction, no forcing.
TangentEnsemble first_variation(const HybridPathEnsemble& base, const RsdeCoefficients& coeffs,
                                const RoughPath& rp, std::span<const double> direction,
                                double time_offset = 0.0, double time_cap = -1.0);

/// Second-variation forcing (F^{ij}, phi^{ij}) built from the base path and
/// two first variations; integrals assembled with the integrator module.
ControlledSample second_variation_forcing(const HybridPathEnsemble& base, const TangentEnsemble& yi,
                                          const TangentEnsemble& yj, const RsdeCoefficients& coeffs,
                                          const RoughPath& rp, double time_offset = 0.0,
                                          double time_cap = -1.0);

/// Solves the forced linear RSDE for Z^{ij} with Z_0 = 0.
TangentEnsemble second_variation(const HybridPathEnsemble& base, const TangentEnsemble& yi,
                                 const TangentEnsemble& yj, const RsdeCoefficients& coeffs,
                                 const RoughPath& rp, double time_offset = 0.0, double time_cap = -1.0);

struct FdCheckReport {
    double pathwise_rel_error = 0.0;  // mean over paths of |Y - FD| / scale
    double mean_rel_error = 0.0;      // relative error of the path averages
    double step = 0.0;                // the h actually used
    bool cancellation_suspected = false;
};

/// Compare a tangent ensemble against common-random-number differences of a
/// re-solver closure at the terminal node. h <= 0 picks the default step
/// 1e-2 (1 + |x0|); order 2 is the central difference, order 4 its Richardson
/// extrapolation.
FdCheckReport fd_check(const std::function<ControlledSample(std::span<const double> x0)>& solve_at,
                       std::span<const double> x0, const TangentEnsemble& tangent, double h,
                       int order = 2);

}  // namespace rfk
