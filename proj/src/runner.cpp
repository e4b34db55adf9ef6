#include "runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "parallel.hpp"
#include "pde_residual.hpp"

namespace rfk {

namespace {

uint64_t fnv1a_bytes(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

struct ArtifactWriter {
    std::filesystem::path dir;
    nlohmann::json hashes = nlohmann::json::object();

    void write(const std::string& name, const std::string& content) {
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / name, std::ios::binary);
        out << content;
        hashes[name] = hex64(fnv1a_bytes(content));
    }
};

RoughPath perturb_driver(const RoughPath& base, double eps) {
    // add a smooth component and restore weak geometricity of the sum
    const int N = base.grid.steps;
    RoughPath out = base;
    for (int k = 0; k <= N; ++k) {
        const double t = base.grid.node(k);
        out.values[static_cast<size_t>(k) * base.dim] += eps * std::sin(2.0 * t);
    }
    return base.geometric ? geometrize(out) : out;
}

}  // namespace

std::string list_presets_text() {
    std::string out;
    for (const auto& name : preset_names()) {
        out += name;
        out += "\n";
    }
    return out;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
    RunResult res;
    try {
        set_max_threads(cfg.threads);
        CoefficientSet cs = make_preset(cfg.preset);
        cfg.validate();
        SeedLedger ledger(cfg.seed);
        RoughPath driver = build_driver(cfg.driver, ledger);
        const int N = driver.grid.steps;

        ArtifactWriter out{cfg.out_dir};
        const std::string config_echo = config_to_json(cfg);

        const bool want_grad = cfg.wants("grad");
        const bool want_hess = cfg.wants("hess");
        if (cfg.wants("u") || want_grad || want_hess) {
            auto xs = cfg.mesh.x_nodes();
            auto surf = build_surface(cs, driver, cfg.mesh.s_nodes, xs, cfg.paths, ledger, want_grad,
                                      want_hess);
            if (cfg.format == "json")
                out.write("surface.json", surf.json(config_echo));
            else
                out.write("surface.csv", surf.csv());
        }

        if (cfg.wants("residuals")) {
            std::vector<int> slices;
            const int stride = std::max(1, N / 64);
            for (int k = 0; k <= N; k += stride) slices.push_back(k);
            auto xs = cfg.mesh.x_nodes();
            auto surf = build_surface(cs, driver, slices, xs, cfg.slice_paths, ledger, false, false);
            auto davie = davie_residual_of_u(surf, cs, driver);
            out.write("residuals.csv", davie.csv());
            auto cond = condition_ii_check(surf, cs, driver);
            std::ostringstream os;
            os.precision(17);
            os << "h,q1,q2,slope_q1,slope_q2\n";
            for (size_t i = 0; i < cond.spans.size(); ++i)
                os << cond.spans[i] << "," << cond.q1[i] << "," << cond.q2[i] << "," << cond.slope_q1
                   << "," << cond.slope_q2 << "\n";
            out.write("condition_ii.csv", os.str());
        }

        if (cfg.wants("markov")) {
            const int t_node = cfg.markov_t >= 0 ? cfg.markov_t : N / 2;
            auto rep = markov_consistency(cfg.markov_s, t_node, cfg.markov_x, cs, driver, cfg.paths,
                                          cfg.slice_paths, ledger);
            std::ostringstream os;
            os.precision(17);
            os << "direct,direct_stderr,nested,nested_stderr,discrepancy,combined_stderr,out_of_range\n"
               << rep.direct << "," << rep.direct_stderr << "," << rep.nested << ","
               << rep.nested_stderr << "," << rep.discrepancy << "," << rep.combined_stderr << ","
               << rep.out_of_range_fraction << "\n";
            out.write("markov.csv", os.str());
        }

        if (cfg.wants("robustness")) {
            auto xs = cfg.mesh.x_nodes();
            std::ostringstream os;
            os.precision(17);
            os << "eps,sup_u,rho_alpha,ratio\n";
            for (double eps : cfg.robustness_eps) {
                RoughPath other = perturb_driver(driver, eps);
                auto rep = robustness_in_driver(cs, driver, other, cfg.mesh.s_nodes, xs, cfg.paths,
                                                ledger, false);
                os << eps << "," << rep.sup_u << "," << rep.rho.total << "," << rep.ratio << "\n";
            }
            out.write("robustness.csv", os.str());
        }

        if (cfg.wants("moments")) {
            BrownianPaths bm(cfg.paths, N, cs.bm_dim);
            const double sq = std::sqrt(driver.grid.dt());
            parallel_for(cfg.paths, [&](long p) {
                Rng rng = ledger.stream("moments", 0, static_cast<uint64_t>(p));
                double* row = bm.inc.data() + static_cast<size_t>(p) * N * cs.bm_dim;
                for (int k = 0; k < N * cs.bm_dim; ++k) row[k] = sq * rng.next_normal();
            });
            std::vector<double> x0(cs.state_dim, cfg.markov_x);
            auto ens = solve_rsde(cs.dynamics(), x0, driver, bm);
            auto wp = weight_process(ens, cs, driver, 0.0);
            const double ps[] = {1.0, 2.0, 4.0};
            auto rows = exponential_moment_probe(wp, ps);
            out.write("moments.csv", moment_probe_csv(rows));
        }

        if (cfg.wants("driver")) {
            out.write("driver_values.csv", values_csv(driver));
            out.write("driver_areas.csv", areas_csv(driver));
            out.write("driver.json", to_json(driver));
        }

        nlohmann::json manifest;
        manifest["config"] = nlohmann::json::parse(config_echo);
        manifest["artifacts"] = out.hashes;
        out.write("manifest.json", manifest.dump(2));
        res.message = "wrote " + std::to_string(out.hashes.size()) + " artifact(s) to " + cfg.out_dir;
        return res;
    } catch (const UnknownPreset& e) {
        return {2, e.what()};
    } catch (const SimulationError& e) {
        return {4, e.what()};
    } catch (const std::invalid_argument& e) {
        return {3, e.what()};
    }
}

}  // namespace rfk
