#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace rfk {

namespace {

TimeField zero_free_scalar(double value) {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [value](double, std::span<const double>, std::span<double> out) { out[0] = value; };
    tf.dx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    tf.dxx = tf.dx;
    tf.dxxx = tf.dx;
    return tf;
}

TimeField cos_payoff() {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [](double, std::span<const double> x, std::span<double> out) { out[0] = std::cos(x[0]); };
    tf.dx = [](double, std::span<const double> x, std::span<double> out) { out[0] = -std::sin(x[0]); };
    tf.dxx = [](double, std::span<const double> x, std::span<double> out) { out[0] = -std::cos(x[0]); };
    tf.dxxx = [](double, std::span<const double> x, std::span<double> out) { out[0] = std::sin(x[0]); };
    return tf;
}

TimeField identity_payoff() {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [](double, std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
    tf.dx = [](double, std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    tf.dxx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    tf.dxxx = tf.dxx;
    return tf;
}

TimeField scaled_tanh_field(double c) {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [c](double, std::span<const double> x, std::span<double> out) {
        out[0] = c * std::tanh(x[0]);
    };
    tf.dx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        out[0] = c * (1.0 - th * th);
    };
    tf.dxx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        out[0] = -2.0 * c * th * (1.0 - th * th);
    };
    tf.dxxx = [c](double, std::span<const double> x, std::span<double> out) {
        const double th = std::tanh(x[0]);
        const double s2 = 1.0 - th * th;
        out[0] = c * (-2.0 * s2 * s2 + 4.0 * th * th * s2);
    };
    return tf;
}

TimeField scaled_cos_field(double c, double base = 0.0) {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [c, base](double, std::span<const double> x, std::span<double> out) {
        out[0] = base + c * std::cos(x[0]);
    };
    tf.dx = [c](double, std::span<const double> x, std::span<double> out) { out[0] = -c * std::sin(x[0]); };
    tf.dxx = [c](double, std::span<const double> x, std::span<double> out) { out[0] = -c * std::cos(x[0]); };
    tf.dxxx = [c](double, std::span<const double> x, std::span<double> out) { out[0] = c * std::sin(x[0]); };
    return tf;
}

TimeField linear_field(double slope) {
    TimeField tf;
    tf.rows = tf.cols = tf.state_dim = 1;
    tf.value = [slope](double, std::span<const double> x, std::span<double> out) { out[0] = slope * x[0]; };
    tf.dx = [slope](double, std::span<const double>, std::span<double> out) { out[0] = slope; };
    tf.dxx = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    tf.dxxx = tf.dxx;
    return tf;
}

ControlledVectorField const_cvf(double c, int out_dim = 1) {
    ControlledVectorField cvf;
    cvf.out_dim = out_dim;
    cvf.driver_dim = 1;
    cvf.state_dim = 1;
    cvf.value = [c, out_dim](double, std::span<const double>, std::span<double> out) {
        for (int i = 0; i < out_dim; ++i) out[i] = c;
    };
    cvf.dx = [](double, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };
    cvf.dxx = cvf.dx;
    cvf.dxxx = cvf.dx;
    return cvf;
}

ControlledVectorField tanh_cvf(double c) {
    ControlledVectorField cvf;
    cvf.out_dim = cvf.driver_dim = cvf.state_dim = 1;
    TimeField tf = scaled_tanh_field(c);
    cvf.value = tf.value;
    cvf.dx = tf.dx;
    cvf.dxx = tf.dxx;
    cvf.dxxx = tf.dxxx;
    return cvf;
}

ControlledVectorField cos_cvf(double c) {
    ControlledVectorField cvf;
    cvf.out_dim = cvf.driver_dim = cvf.state_dim = 1;
    TimeField tf = scaled_cos_field(c);
    cvf.value = tf.value;
    cvf.dx = tf.dx;
    cvf.dxx = tf.dxx;
    cvf.dxxx = tf.dxxx;
    return cvf;
}

ControlledVectorField linear_cvf(double slope) {
    ControlledVectorField cvf;
    cvf.out_dim = cvf.driver_dim = cvf.state_dim = 1;
    TimeField tf = linear_field(slope);
    cvf.value = tf.value;
    cvf.dx = tf.dx;
    cvf.dxx = tf.dxx;
    cvf.dxxx = tf.dxxx;
    return cvf;
}

}  // namespace

UnknownPreset::UnknownPreset(const std::string& name)
    : std::invalid_argument("unknown preset '" + name + "'; available: " + [] {
          std::string all;
          for (const auto& p : preset_names()) {
              if (!all.empty()) all += ", ";
              all += p;
          }
          return all;
      }()) {}

std::vector<std::string> preset_names() {
    return {"exp_weight", "full_hybrid", "gbm", "heat", "smooth_reference", "tanh", "transport"};
}

CoefficientSet make_preset(const std::string& name) {
    CoefficientSet cs;
    cs.state_dim = 1;
    cs.driver_dim = 1;
    cs.bm_dim = 1;
    if (name == "heat") {
        cs.diffusion = zero_free_scalar(1.0);
        cs.payoff = cos_payoff();
    } else if (name == "transport") {
        cs.rough = const_cvf(1.0);
        cs.payoff = cos_payoff();
    } else if (name == "exp_weight") {
        cs.rough = const_cvf(1.0);
        cs.weight = const_cvf(0.5);
        cs.payoff = cos_payoff();
    } else if (name == "gbm") {
        cs.drift = linear_field(0.05);
        cs.diffusion = linear_field(0.2);
        cs.payoff = identity_payoff();
    } else if (name == "tanh") {
        cs.drift = scaled_tanh_field(0.5);
        cs.diffusion = zero_free_scalar(0.3);
        cs.rough = tanh_cvf(0.4);
        cs.payoff = cos_payoff();
    } else if (name == "full_hybrid") {
        cs.drift = scaled_tanh_field(0.3);
        cs.diffusion = scaled_cos_field(0.1, 0.3);
        cs.killing = scaled_cos_field(0.1);
        cs.rough = tanh_cvf(0.5);
        cs.weight = cos_cvf(0.2);
        cs.payoff = cos_payoff();
    } else if (name == "smooth_reference") {
        cs.rough = linear_cvf(1.0);
        cs.weight = const_cvf(0.3);
        cs.payoff = cos_payoff();
    } else {
        throw UnknownPreset(name);
    }
    return cs;
}

std::vector<double> canonical_samples(const std::string& kind, int dim, double horizon,
                                      long fine_steps) {
    std::vector<double> out(static_cast<size_t>(fine_steps + 1) * dim, 0.0);
    for (long q = 0; q <= fine_steps; ++q) {
        const double t = horizon * q / fine_steps;
        double* w = out.data() + static_cast<size_t>(q) * dim;
        if (kind == "canonical:sin") {
            w[0] = std::sin(t);
        } else if (kind == "canonical:circle") {
            if (dim < 2) throw std::invalid_argument("canonical:circle needs dim >= 2");
            w[0] = std::cos(t);
            w[1] = std::sin(t);
        } else if (kind == "canonical:line") {
            for (int i = 0; i < dim; ++i) w[i] = t;
        } else {
            throw std::invalid_argument("unknown canonical driver kind '" + kind + "'");
        }
    }
    return out;
}

RoughPath build_driver(const DriverSpec& spec, const SeedLedger& ledger) {
    if (spec.steps < 1 || spec.dim < 1 || !(spec.horizon > 0.0))
        throw std::invalid_argument("driver spec: counts must be positive");
    if (spec.kind == "brownian_ito" || spec.kind == "brownian_strat") {
        Rng rng = ledger.stream("driver");
        auto lift = brownian_ito_lift(spec.dim, spec.horizon, spec.steps, spec.refinement, rng);
        return spec.kind == "brownian_ito" ? lift.path : geometrize(lift.path);
    }
    if (spec.kind.rfind("canonical:", 0) == 0) {
        auto samples = canonical_samples(spec.kind, spec.dim, spec.horizon,
                                         static_cast<long>(spec.steps) * spec.refinement);
        return canonical_lift(samples, spec.dim, spec.horizon, spec.steps, spec.refinement);
    }
    if (spec.kind == "pure_area") {
        if (spec.dim < 2) throw std::invalid_argument("pure_area driver needs dim >= 2");
        RoughPath rp(Grid(spec.horizon, spec.steps), spec.dim);
        rp.geometric = true;
        const double q = 1.0;
        for (int k = 0; k < spec.steps; ++k) {
            double* a = rp.areas.data() + static_cast<size_t>(k) * spec.dim * spec.dim;
            a[1] = q * rp.grid.dt();
            a[static_cast<size_t>(spec.dim)] = -q * rp.grid.dt();
        }
        return rp;
    }
    throw std::invalid_argument("unknown driver kind '" + spec.kind + "'");
}

std::vector<double> MeshSpec::x_nodes() const {
    std::vector<double> out(x_count);
    for (int q = 0; q < x_count; ++q)
        out[q] = (x_count == 1) ? x_min : x_min + (x_max - x_min) * q / (x_count - 1);
    return out;
}

bool ScenarioConfig::wants(const std::string& what) const {
    return std::find(outputs.begin(), outputs.end(), what) != outputs.end();
}

void ScenarioConfig::validate() const {
    if (paths < 1 || slice_paths < 1 || mesh.x_count < 1 || threads < 1)
        throw std::invalid_argument("config: counts must be positive");
    if (format != "csv" && format != "json") throw std::invalid_argument("config: unknown format");
    for (int s : mesh.s_nodes)
        if (s < 0 || s > driver.steps) throw std::invalid_argument("config: s node outside the grid");
    make_preset(preset).validate();  // exponent inequalities at load
}

ScenarioConfig config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ScenarioConfig cfg;
    cfg.scenario = j.value("scenario", cfg.scenario);
    if (j.contains("driver")) {
        const auto& dj = j.at("driver");
        cfg.driver.kind = dj.value("kind", cfg.driver.kind);
        cfg.driver.dim = dj.value("dim", cfg.driver.dim);
        cfg.driver.horizon = dj.value("T", cfg.driver.horizon);
        cfg.driver.steps = dj.value("N", cfg.driver.steps);
        cfg.driver.refinement = dj.value("refinement", cfg.driver.refinement);
    }
    if (j.contains("coefficients")) cfg.preset = j.at("coefficients").value("preset", cfg.preset);
    if (j.contains("mesh")) {
        const auto& mj = j.at("mesh");
        cfg.mesh.s_nodes = mj.value("s_nodes", cfg.mesh.s_nodes);
        cfg.mesh.x_min = mj.value("x_min", cfg.mesh.x_min);
        cfg.mesh.x_max = mj.value("x_max", cfg.mesh.x_max);
        cfg.mesh.x_count = mj.value("x_count", cfg.mesh.x_count);
    }
    cfg.paths = j.value("paths", cfg.paths);
    cfg.slice_paths = j.value("slice_paths", cfg.slice_paths);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.outputs = j.value("outputs", cfg.outputs);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.format = j.value("format", cfg.format);
    cfg.markov_s = j.value("markov_s", cfg.markov_s);
    cfg.markov_t = j.value("markov_t", cfg.markov_t);
    cfg.markov_x = j.value("markov_x", cfg.markov_x);
    cfg.robustness_eps = j.value("robustness_eps", cfg.robustness_eps);
    return cfg;
}

std::string config_to_json(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["scenario"] = cfg.scenario;
    j["driver"] = {{"kind", cfg.driver.kind},
                   {"dim", cfg.driver.dim},
                   {"T", cfg.driver.horizon},
                   {"N", cfg.driver.steps},
                   {"refinement", cfg.driver.refinement}};
    j["coefficients"] = {{"preset", cfg.preset}};
    j["mesh"] = {{"s_nodes", cfg.mesh.s_nodes},
                 {"x_min", cfg.mesh.x_min},
                 {"x_max", cfg.mesh.x_max},
                 {"x_count", cfg.mesh.x_count}};
    j["paths"] = cfg.paths;
    j["slice_paths"] = cfg.slice_paths;
    j["seed"] = cfg.seed;
    j["outputs"] = cfg.outputs;
    j["format"] = cfg.format;
    j["markov_s"] = cfg.markov_s;
    j["markov_t"] = cfg.markov_t;
    j["markov_x"] = cfg.markov_x;
    j["robustness_eps"] = cfg.robustness_eps;
    return j.dump(2);
}

}  // namespace rfk
