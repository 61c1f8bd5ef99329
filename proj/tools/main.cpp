#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flexlora/presets.hpp"
#include "flexlora/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_flag) {
    flexlora::Config cfg;
    try {
        cfg = flexlora::Config::from_file(config_path);
        for (const std::string& kv : overrides) {
            cfg.apply_override(kv);
        }
    } catch (const flexlora::InvalidConfig& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    const std::string out_dir = !out_flag.empty() ? out_flag : cfg.get_str("run.out", "out");
    try {
        flexlora::run_config(cfg, out_dir);
        std::printf("wrote %s/rounds.csv, %s/spectra.csv, %s/summary.json\n", out_dir.c_str(),
                    out_dir.c_str(), out_dir.c_str());
        return 0;
    } catch (const flexlora::InvalidConfig& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int cmd_verify(bool inject_fault) {
    const auto results = flexlora::run_verification(inject_fault);
    bool all_ok = true;
    for (const auto& r : results) {
        if (r.passed) {
            std::printf("[PASS] %s\n", r.name.c_str());
        } else {
            std::printf("[FAIL] %s: %s\n", r.name.c_str(), r.detail.c_str());
            all_ok = false;
        }
    }
    return all_ok ? 0 : 1;
}

int cmd_sweep(const std::string& preset, const std::string& out_dir,
              const std::vector<std::uint64_t>& seeds) {
    if (!flexlora::is_known_preset(preset)) {
        std::fprintf(stderr, "error: unknown sweep preset: %s\n", preset.c_str());
        return 2;
    }
    try {
        flexlora::run_sweep(preset, out_dir, seeds);
        std::printf("wrote %s/rounds.csv, %s/summary.json\n", out_dir.c_str(), out_dir.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexlora: federated low-rank adapter aggregation simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "key-value config file")->required();
    run->add_option("--set", overrides, "override config entries (key=value)");
    run->add_option("--out", out_dir, "output directory (overrides run.out)");

    bool inject_fault = false;
    auto* verify = app.add_subcommand("verify", "run the numerical invariant suites");
    verify->add_flag("--inject-fault", inject_fault,
                     "flip a sign inside decompose; the roundtrip suite must then fail");

    std::string preset;
    std::string sweep_out = "out";
    std::vector<std::uint64_t> seeds;
    auto* sweep = app.add_subcommand("sweep", "run a named experiment grid");
    sweep->add_option("preset", preset, "table2 | fig5a | fig4b | table4 | fig6")->required();
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--seeds", seeds, "seed list override");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, overrides, out_dir);
    if (verify->parsed()) return cmd_verify(inject_fault);
    return cmd_sweep(preset, sweep_out, seeds);
}
