#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsde.hpp"
#include "tangent.hpp"

namespace rfk {

/// Full coefficient tuple (b, sigma, c, (beta, beta'), (gamma, gamma'), g) of
/// the terminal value problem, with the declared regularity exponents. A
/// missing value callback marks the corresponding term as absent.
struct CoefficientSet {
    int state_dim = 1;
    int driver_dim = 1;
    int bm_dim = 1;

    TimeField drift;                 // b, d
    TimeField diffusion;             // sigma, d x m
    TimeField killing;               // c, scalar
    ControlledVectorField rough;     // (beta, beta'), d x n
    ControlledVectorField weight;    // (gamma, gamma'), 1 x n
    TimeField payoff;                // g, scalar, time ignored

    double alpha = 0.45;
    double delta = 0.45;   // time regularity of (beta, beta')
    double eta = 0.45;     // time regularity of (gamma, gamma')
    double lambda = 3.0;   // payoff regularity
    double kappa = 5.0;    // spatial regularity of beta
    double theta = 5.0;    // spatial regularity of gamma

    bool has_drift() const { return static_cast<bool>(drift.value); }
    bool has_diffusion() const { return static_cast<bool>(diffusion.value); }
    bool has_killing() const { return static_cast<bool>(killing.value); }
    bool has_rough() const { return static_cast<bool>(rough.value); }
    bool has_weight() const { return static_cast<bool>(weight.value); }

    RsdeCoefficients dynamics() const;

    /// Checks the standing exponent inequalities; throws std::invalid_argument
    /// when they fail.
    void validate() const;
};

/// Per-path trajectory of the Feynman-Kac exponent I and of its Gubinelli
/// derivative gamma(t, X_t).
struct WeightProcess {
    int paths = 0;
    int nodes = 0;
    int driver_dim = 1;
    std::vector<double> exponent;    // paths x nodes, I[0] = 0
    std::vector<double> derivative;  // paths x nodes x n, gamma(t_k, X_k)

    double at(int p, int k) const { return exponent[static_cast<size_t>(p) * nodes + k]; }
};

/// Exponent process along a solved ensemble on the shifted driver:
/// I = int c dr + int (gamma(X), D_x gamma(X) beta(X) + gamma'(X)) dW^s.
WeightProcess weight_process(const HybridPathEnsemble& ens, const CoefficientSet& cs,
                             const RoughPath& rp_shifted, double time_offset);

/// Driver restricted to the shifted sub-interval [0, T - t_m] (m grid steps
/// dropped, nothing frozen: the solvers run only to the new horizon).
RoughPath shifted_restriction(const RoughPath& rp, int m);

struct PointEstimate {
    double u = 0.0;
    double u_stderr = 0.0;
    std::vector<double> grad, grad_stderr;  // d entries when requested
    std::vector<double> hess, hess_stderr;  // d*d entries when requested
};

/// Monte Carlo estimator of u(s, x) = E[g(X_{T-s}) e^{I_{T-s}}] plus, on
/// request, the tangent-process gradient and Hessian estimators. Substreams
/// are keyed by (mesh_index, absolute path index), so a fixed ledger gives
/// common random numbers across s and bit-stable results for any thread count.
PointEstimate estimate_point(int s_node, std::span<const double> x, const CoefficientSet& cs,
                             const RoughPath& driver, int paths, const SeedLedger& ledger,
                             uint64_t mesh_index, bool want_grad, bool want_hess);

PointEstimate estimate_u(int s_node, std::span<const double> x, const CoefficientSet& cs,
                         const RoughPath& driver, int paths, const SeedLedger& ledger,
                         uint64_t mesh_index = 0);
PointEstimate estimate_u_gradient(int s_node, std::span<const double> x, const CoefficientSet& cs,
                                  const RoughPath& driver, int paths, const SeedLedger& ledger,
                                  uint64_t mesh_index = 0);
PointEstimate estimate_u_hessian(int s_node, std::span<const double> x, const CoefficientSet& cs,
                                 const RoughPath& driver, int paths, const SeedLedger& ledger,
                                 uint64_t mesh_index = 0);

/// Tabulated u (and derivatives) on s-slices of the driver grid over a
/// uniform one-dimensional x-mesh.
struct SolutionSurface {
    std::vector<int> s_nodes;
    std::vector<double> x_nodes;
    double horizon = 1.0;
    int steps = 1;
    bool has_grad = false;
    bool has_hess = false;
    std::vector<double> u, u_stderr;        // s x q
    std::vector<double> grad, grad_stderr;  // s x q
    std::vector<double> hess, hess_stderr;  // s x q
    uint64_t seed = 0;
    int paths = 0;

    double value(int si, int q) const { return u[static_cast<size_t>(si) * x_nodes.size() + q]; }
    std::string csv() const;
    std::string json(const std::string& config_echo) const;
};

SolutionSurface build_surface(const CoefficientSet& cs, const RoughPath& driver,
                              std::span<const int> s_nodes, std::span<const double> x_nodes, int paths,
                              const SeedLedger& ledger, bool want_grad, bool want_hess);

struct MarkovReport {
    double direct = 0.0;
    double direct_stderr = 0.0;
    double nested = 0.0;
    double nested_stderr = 0.0;
    double discrepancy = 0.0;
    double combined_stderr = 0.0;
    double out_of_range_fraction = 0.0;
    double mesh_lo = 0.0, mesh_hi = 0.0;
};

/// Compares u(s, x) against E[e^{I_{t-s}} u(t, X^{s,x}_{t-s})] with u(t, .)
/// tabulated on a covering mesh and interpolated linearly (state dim 1).
MarkovReport markov_consistency(int s_node, int t_node, double x, const CoefficientSet& cs,
                                const RoughPath& driver, int paths, int slice_paths,
                                const SeedLedger& ledger);

struct RobustnessReport {
    double sup_u = 0.0;
    double sup_grad = 0.0;
    double sup_hess = 0.0;
    RhoAlphaReport rho;
    double ratio = 0.0;  // sup_u / rho.total, 0 when both vanish
};

/// Common-seed solution distance between two drivers over an (s, x) mesh.
RobustnessReport robustness_in_driver(const CoefficientSet& cs, const RoughPath& driver_a,
                                      const RoughPath& driver_b, std::span<const int> s_nodes,
                                      std::span<const double> x_nodes, int paths,
                                      const SeedLedger& ledger, bool with_derivatives);

struct MomentProbeRow {
    double p = 0.0;
    double full = 0.0;      // E[exp(p sup_t |I_t|)] at M paths
    double subsample = 0.0; // same at the first M/10 paths
    double ratio = 0.0;
};

std::vector<MomentProbeRow> exponential_moment_probe(const WeightProcess& weights,
                                                     std::span<const double> p_values);

std::string moment_probe_csv(std::span<const MomentProbeRow> rows);

}  // namespace rfk
