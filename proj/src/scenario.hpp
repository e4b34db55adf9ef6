#pragma once

#include <string>
#include <vector>

#include "feynman_kac.hpp"

namespace rfk {

/// Bundled coefficient presets, alphabetical. All are one-dimensional in
/// state; drivers decide the rough dimension (1 here throughout).
std::vector<std::string> preset_names();

/// Builds a preset coefficient set. Throws UnknownPreset for unknown names.
CoefficientSet make_preset(const std::string& name);

struct UnknownPreset : std::invalid_argument {
    explicit UnknownPreset(const std::string& name);
};

struct DriverSpec {
    std::string kind = "brownian_strat";  // brownian_ito | brownian_strat |
                                          // canonical:sin | canonical:circle |
                                          // canonical:line | pure_area
    int dim = 1;
    double horizon = 1.0;
    int steps = 256;
    int refinement = 32;
};

/// Materializes a driver from its spec; Brownian kinds draw from the ledger
/// under the "driver" tag.
RoughPath build_driver(const DriverSpec& spec, const SeedLedger& ledger);

/// Closed-form sample paths used by the canonical driver kinds; exposed for
/// perturbation probes.
std::vector<double> canonical_samples(const std::string& kind, int dim, double horizon, long fine_steps);

struct MeshSpec {
    std::vector<int> s_nodes = {0};
    double x_min = -0.5;
    double x_max = 0.5;
    int x_count = 5;

    std::vector<double> x_nodes() const;
};

struct ScenarioConfig {
    std::string scenario = "heat";
    DriverSpec driver;
    std::string preset = "heat";
    MeshSpec mesh;
    int paths = 10000;
    int slice_paths = 5000;
    uint64_t seed = 1;
    int threads = 2;
    std::vector<std::string> outputs = {"u"};
    std::string out_dir = "out";
    std::string format = "csv";  // csv | json
    int markov_s = 0;
    int markov_t = -1;  // -1: N/2
    double markov_x = 0.0;
    std::vector<double> robustness_eps = {1e-2, 1e-3};

    bool wants(const std::string& what) const;
    void validate() const;  // counts positive, format known, exponents via preset
};

ScenarioConfig config_from_json(const std::string& text);
std::string config_to_json(const ScenarioConfig& cfg);

}  // namespace rfk
