#include "flexlora/reporting.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace flexlora {

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write file: " + path);
    }
    return out;
}

}  // namespace

void write_rounds_csv(const std::string& path, const std::string& header_comment,
                      const std::vector<RoundRow>& rows) {
    std::ofstream out = open_out(path);
    out << "# " << header_comment << "\n";
    out << "round,strategy,distribution,seed,train_loss,val_loss,zeroshot_loss,cost_per_round\n";
    for (const RoundRow& r : rows) {
        out << r.round << ',' << r.strategy << ',' << r.distribution << ',' << r.seed << ','
            << format_number(r.train_loss) << ',' << format_number(r.val_loss) << ','
            << format_number(r.zeroshot_loss) << ',' << format_number(r.cost_per_round) << '\n';
    }
}

void write_spectra_csv(const std::string& path, const std::string& header_comment,
                       const std::vector<SpectraRow>& rows) {
    std::ofstream out = open_out(path);
    out << "# " << header_comment << "\n";
    out << "round,layer,index,sigma,error_ratio\n";
    for (const SpectraRow& r : rows) {
        out << r.round << ',' << r.layer << ',' << r.index << ',' << format_number(r.sigma) << ','
            << format_number(r.error_ratio) << '\n';
    }
}

std::vector<RoundRow> to_rows(const std::vector<RoundReport>& reports, const std::string& strategy,
                              const std::string& distribution, std::uint64_t seed) {
    std::vector<RoundRow> rows;
    rows.reserve(reports.size());
    for (const RoundReport& r : reports) {
        rows.push_back({r.round, strategy, distribution, seed, r.train_loss, r.val_loss,
                        r.zeroshot_loss, r.cost_per_round});
    }
    return rows;
}

std::vector<SpectraRow> to_spectra_rows(const std::vector<RoundReport>& reports) {
    std::vector<SpectraRow> rows;
    for (const RoundReport& r : reports) {
        for (std::size_t layer = 0; layer < r.spectra.size(); ++layer) {
            const std::vector<double>& sigma = r.spectra[layer];
            double total = 0.0;
            for (double s : sigma) total += s * s;
            // tail mass after each retained rank, smallest-first for accuracy
            std::vector<double> tail(sigma.size() + 1, 0.0);
            for (int j = static_cast<int>(sigma.size()) - 1; j >= 0; --j) {
                tail[j] = tail[j + 1] + sigma[j] * sigma[j];
            }
            for (std::size_t j = 0; j < sigma.size(); ++j) {
                const double ratio = total > 0.0 ? std::sqrt(tail[j + 1]) / std::sqrt(total) : 0.0;
                rows.push_back({r.round, static_cast<int>(layer), static_cast<int>(j + 1), sigma[j], ratio});
            }
        }
    }
    return rows;
}

}  // namespace flexlora
