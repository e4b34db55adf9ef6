#pragma once

#include <string>
#include <vector>

#include "feynman_kac.hpp"

namespace rfk {

/// Central-difference stencils for the operators L, Gamma, Gamma Gamma - Gamma'
/// on a uniform one-dimensional x-mesh. Interior validity: one cell for the
/// direct formulas, two cells for nested Gamma applications.
struct OperatorStencil {
    std::vector<double> mesh;
    double pitch = 0.0;

    explicit OperatorStencil(std::vector<double> x);

    int size() const { return static_cast<int>(mesh.size()); }

    /// L u = 1/2 tr(sigma sigma^T D^2 u) + b . D u + c u, central differences.
    void apply_L(std::span<const double> u, const CoefficientSet& cs, double t,
                 std::span<double> out) const;

    /// Gamma_mu u = beta_mu . D u + gamma_mu u.
    void apply_Gamma(std::span<const double> u, const CoefficientSet& cs, double t, int mu,
                     std::span<double> out) const;

    /// Direct coordinate assembly of (Gamma_mu Gamma_nu - Gamma'_{mu nu}) u
    /// (six explicit terms minus the prime part), not nested stencils.
    void apply_Gamma_pair(std::span<const double> u, const CoefficientSet& cs, double t, int mu, int nu,
                          std::span<double> out) const;

    /// Nested route Gamma_mu (Gamma_nu u) for cross-validation; valid on a
    /// two-cell interior margin.
    void apply_Gamma_nested(std::span<const double> u, const CoefficientSet& cs, double t, int mu,
                            int nu, std::span<double> out) const;

    /// Worst-case linear propagation of per-node noise through apply_Gamma and
    /// the pair stencil, used for residual noise floors.
    void propagate_abs_Gamma(std::span<const double> err, const CoefficientSet& cs, double t, int mu,
                             std::span<double> out) const;
    void propagate_abs_pair(std::span<const double> err, const CoefficientSet& cs, double t, int mu,
                            int nu, std::span<double> out) const;
};

struct ResidualRow {
    double span = 0.0;
    double sup_residual = 0.0;
    double noise_floor = 0.0;
};

struct ResidualReport {
    std::vector<ResidualRow> rows;
    double slope = 0.0;       // fitted on rows above 3x the noise floor
    int fitted_points = 0;
    std::string csv() const;
};

/// Davie expansion defect of the surface:
///   u_s - u_t - int_s^t L_r u_r dr - Gamma u_t dW - (GG - Gamma') u_t W2,
/// sup over the interior mesh, grouped by dyadic span.
ResidualReport davie_residual_of_u(const SolutionSurface& surface, const CoefficientSet& cs,
                                   const RoughPath& driver);

struct ConditionIiReport {
    std::vector<double> spans;
    std::vector<double> q1;  // sup |(GG - G')u_s - (GG - G')u_t|
    std::vector<double> q2;  // sup |Gamma u_t - Gamma u_s + (GG - G')u_t dW|
    double slope_q1 = 0.0;
    double slope_q2 = 0.0;
};

ConditionIiReport condition_ii_check(const SolutionSurface& surface, const CoefficientSet& cs,
                                     const RoughPath& driver);

struct SmoothReferenceRow {
    double s = 0.0;
    double x = 0.0;
    double u_rough = 0.0;
    double u_classical = 0.0;
    double combined_stderr = 0.0;
};

/// Rough Feynman-Kac values against a classical fine-Euler route in which the
/// canonical driver acts through plain left-point increments (no level-2
/// compensation). Requires a weakly geometric driver.
std::vector<SmoothReferenceRow> smooth_case_reference(const CoefficientSet& cs,
                                                      const RoughPath& driver,
                                                      const RoughPath& fine_driver,
                                                      std::span<const int> s_nodes,
                                                      std::span<const double> x_nodes, int paths,
                                                      const SeedLedger& ledger);

std::string smooth_reference_csv(std::span<const SmoothReferenceRow> rows);

}  // namespace rfk
