#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rfk {

uint64_t mix64(uint64_t x);

/// Counter-based RNG stream. splitmix64 core, Box-Muller normals.
class Rng {
public:
    explicit Rng(uint64_t key) : state_(key) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    /// Uniform on (0, 1].
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double next_normal();

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Deterministic substream derivation: key = hash(master, tag, mesh, path).
/// Rederivation is bit-stable across runs and independent of thread count.
struct SeedLedger {
    uint64_t master = 0;

    SeedLedger() = default;
    explicit SeedLedger(uint64_t m) : master(m) {}

    uint64_t key(std::string_view tag, uint64_t mesh_index = 0, uint64_t path_index = 0) const;
    Rng stream(std::string_view tag, uint64_t mesh_index = 0, uint64_t path_index = 0) const {
        return Rng(key(tag, mesh_index, path_index));
    }
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least squares on (log h, log y). Requires >= 4 strictly positive pairs.
SlopeFit slope_fit(std::span<const double> h, std::span<const double> y);

struct MeanCi {
    double mean = 0.0;
    double halfwidth = 0.0;
    double stderr_ = 0.0;
};

/// Normal-approximation confidence interval at the given level.
MeanCi mean_ci(std::span<const double> samples, double level = 0.99);

double sample_mean(std::span<const double> samples);
double sample_stddev(std::span<const double> samples);

/// Inverse standard normal CDF (Acklam rational approximation).
double normal_quantile(double p);

}  // namespace rfk
