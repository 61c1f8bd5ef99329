#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexlora/config.hpp"

#include "json.hpp"

namespace flexlora {

/// Baseline world/federation settings shared by the experiment presets.
Config preset_base_config();

/// Runs a config (one experiment per seed in run.seeds) and writes
/// rounds.csv, spectra.csv, and summary.json into out_dir.
nlohmann::json run_config(const Config& cfg, const std::string& out_dir);

/// Named experiment grids. Each writes rounds.csv and summary.json (and
/// spectra.csv where spectra are the point) into out_dir and returns the
/// summary. Known presets: table2, fig5a, fig4b, table4, fig6.
nlohmann::json run_sweep(const std::string& preset, const std::string& out_dir,
                         std::vector<std::uint64_t> seeds = {});

bool is_known_preset(const std::string& name);

}  // namespace flexlora
