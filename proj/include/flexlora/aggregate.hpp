#pragma once

#include <vector>

#include "flexlora/adapter.hpp"

namespace flexlora {

/// One client's upload: per-layer adapters plus its dataset size n^i,
/// which drives the aggregation weight.
struct Contribution {
    int client_id = 0;
    std::vector<LoraAdapter> adapters;  // one per tunable layer
    long long sample_count = 0;
};

/// Per-layer full-size global deltas W_g.
struct GlobalDelta {
    std::vector<Matrix> layers;
};

/// Per-layer global factors for the factor-averaging strategies.
struct GlobalFactors {
    std::vector<LoraAdapter> layers;  // (B_g, A_g) packed as adapters
};

/// Composes each client's full delta s*B*A and averages with weights
/// n^i / sum n^j. Ranks may differ arbitrarily. Contributions are reduced
/// in client_id order regardless of input order.
GlobalDelta aggregate_flexlora(const std::vector<Contribution>& contribs);

/// Elementwise weighted average of B and A. Requires identical ranks per
/// layer across all contributions (the bucket-effect constraint).
GlobalFactors aggregate_naive(const std::vector<Contribution>& contribs);

/// Zero-pads each B on columns and each A on rows to the max rank per
/// layer, then averages elementwise.
GlobalFactors aggregate_hetlora(const std::vector<Contribution>& contribs);

/// Truncates global factors to a client's per-layer rank budget: first r
/// columns of B_g and first r rows of A_g.
std::vector<LoraAdapter> hetlora_distribute(const GlobalFactors& g, const std::vector<int>& ranks);

/// Rank-r^i truncations of each layer's W_g per client. The SVD of each
/// layer is computed once and indexed per client.
std::vector<std::vector<LoraAdapter>> redistribute(const GlobalDelta& delta,
                                                   const std::vector<std::vector<int>>& client_ranks,
                                                   double s);

/// Shrinks the adapter rank to the smallest r' whose leading spectral mass
/// of s*B*A reaches decay * total mass; never below rank 1.
LoraAdapter hetlora_prune(const LoraAdapter& adapter, double decay);

}  // namespace flexlora
