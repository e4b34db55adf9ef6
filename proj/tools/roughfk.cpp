#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "runner.hpp"

namespace {

void usage() {
    std::cerr << "usage:\n"
                 "  roughfk run --config PATH [--seed U64] [--threads K] [--out DIR]\n"
                 "  roughfk list-presets\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        usage();
        return 1;
    }
    const std::string mode = argv[1];
    if (mode == "list-presets") {
        std::cout << rfk::list_presets_text();
        return 0;
    }
    if (mode != "run") {
        usage();
        return 1;
    }

    std::string config_path, out_dir;
    uint64_t seed = 0;
    bool has_seed = false;
    int threads = 0;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto need_value = [&](const char* flag) -> const char* {
            if (i + 1 >= argc) {
                std::cerr << flag << " requires a value\n";
                std::exit(1);
            }
            return argv[++i];
        };
        if (arg == "--config") {
            config_path = need_value("--config");
        } else if (arg == "--seed") {
            seed = std::strtoull(need_value("--seed"), nullptr, 10);
            has_seed = true;
        } else if (arg == "--threads") {
            threads = std::atoi(need_value("--threads"));
        } else if (arg == "--out") {
            out_dir = need_value("--out");
        } else {
            std::cerr << "unknown argument: " << arg << "\n";
            usage();
            return 1;
        }
    }
    if (config_path.empty()) {
        usage();
        return 1;
    }

    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot read config: " << config_path << "\n";
        return 3;
    }
    std::ostringstream buf;
    buf << in.rdbuf();

    rfk::ScenarioConfig cfg;
    try {
        cfg = rfk::config_from_json(buf.str());
    } catch (const std::exception& e) {
        std::cerr << "config parse error: " << e.what() << "\n";
        return 3;
    }
    if (has_seed) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    auto result = rfk::run_scenario(cfg);
    if (result.exit_code == 0)
        std::cout << result.message << "\n";
    else
        std::cerr << result.message << "\n";
    return result.exit_code;
}
