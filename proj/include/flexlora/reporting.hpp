#pragma once

#include <string>
#include <vector>

#include "flexlora/federation.hpp"

namespace flexlora {

struct RoundRow {
    int round = 0;
    std::string strategy;
    std::string distribution;
    std::uint64_t seed = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double zeroshot_loss = 0.0;
    double cost_per_round = 0.0;
};

struct SpectraRow {
    int round = 0;
    int layer = 0;
    int index = 0;  // 1-based rank
    double sigma = 0.0;
    double error_ratio = 0.0;  // tail norm after `index` over full norm
};

std::string format_number(double v);

/// rounds.csv: fixed column order, header comment row carrying the config
/// hash and seeds.
void write_rounds_csv(const std::string& path, const std::string& header_comment,
                      const std::vector<RoundRow>& rows);

void write_spectra_csv(const std::string& path, const std::string& header_comment,
                       const std::vector<SpectraRow>& rows);

std::vector<RoundRow> to_rows(const std::vector<RoundReport>& reports, const std::string& strategy,
                              const std::string& distribution, std::uint64_t seed);

std::vector<SpectraRow> to_spectra_rows(const std::vector<RoundReport>& reports);

}  // namespace flexlora
