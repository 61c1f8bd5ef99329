#include "flexlora/aggregate.hpp"

#include <algorithm>
#include <cmath>

namespace flexlora {

namespace {

// Contributions are reduced in client_id order for determinism.
std::vector<const Contribution*> sorted_view(const std::vector<Contribution>& contribs) {
    if (contribs.empty()) {
        throw NoContributions("aggregate: empty contribution list");
    }
    std::vector<const Contribution*> view;
    view.reserve(contribs.size());
    for (const Contribution& c : contribs) {
        if (c.sample_count < 1) {
            throw InvalidConfig("aggregate: sample_count must be >= 1");
        }
        if (c.adapters.size() != contribs.front().adapters.size()) {
            throw ShapeMismatch("aggregate: layer counts differ");
        }
        view.push_back(&c);
    }
    std::stable_sort(view.begin(), view.end(),
                     [](const Contribution* a, const Contribution* b) { return a->client_id < b->client_id; });
    return view;
}

std::vector<double> normalized_weights(const std::vector<const Contribution*>& view) {
    double total = 0.0;
    for (const Contribution* c : view) total += static_cast<double>(c->sample_count);
    std::vector<double> w;
    w.reserve(view.size());
    for (const Contribution* c : view) w.push_back(static_cast<double>(c->sample_count) / total);
    return w;
}

}  // namespace

GlobalDelta aggregate_flexlora(const std::vector<Contribution>& contribs) {
    const auto view = sorted_view(contribs);
    const auto weights = normalized_weights(view);
    const std::size_t num_layers = view[0]->adapters.size();

    GlobalDelta out;
    out.layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::vector<Matrix> deltas;
        deltas.reserve(view.size());
        for (const Contribution* c : view) {
            deltas.push_back(compose(c->adapters[l]));
        }
        out.layers.push_back(weighted_sum(deltas, weights));
    }
    return out;
}

GlobalFactors aggregate_naive(const std::vector<Contribution>& contribs) {
    const auto view = sorted_view(contribs);
    const auto weights = normalized_weights(view);
    const std::size_t num_layers = view[0]->adapters.size();

    for (const Contribution* c : view) {
        for (std::size_t l = 0; l < num_layers; ++l) {
            if (c->adapters[l].rank != view[0]->adapters[l].rank) {
                throw HeterogeneousRanksUnsupported(
                    "aggregate_naive: decomposed-matrix averaging requires identical ranks per layer");
            }
        }
    }

    GlobalFactors out;
    out.layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::vector<Matrix> ups, downs;
        ups.reserve(view.size());
        downs.reserve(view.size());
        for (const Contribution* c : view) {
            ups.push_back(c->adapters[l].up);
            downs.push_back(c->adapters[l].down);
        }
        out.layers.emplace_back(weighted_sum(ups, weights), weighted_sum(downs, weights),
                                view[0]->adapters[l].scaling);
    }
    return out;
}

GlobalFactors aggregate_hetlora(const std::vector<Contribution>& contribs) {
    const auto view = sorted_view(contribs);
    const auto weights = normalized_weights(view);
    const std::size_t num_layers = view[0]->adapters.size();

    GlobalFactors out;
    out.layers.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        int r_max = 0;
        for (const Contribution* c : view) r_max = std::max(r_max, c->adapters[l].rank);
        std::vector<Matrix> ups, downs;
        ups.reserve(view.size());
        downs.reserve(view.size());
        for (const Contribution* c : view) {
            const LoraAdapter& a = c->adapters[l];
            Matrix up(a.up.rows(), r_max);
            for (int i = 0; i < a.up.rows(); ++i) {
                for (int j = 0; j < a.rank; ++j) up(i, j) = a.up(i, j);
            }
            Matrix down(r_max, a.down.cols());
            for (int i = 0; i < a.rank; ++i) {
                for (int j = 0; j < a.down.cols(); ++j) down(i, j) = a.down(i, j);
            }
            ups.push_back(std::move(up));
            downs.push_back(std::move(down));
        }
        out.layers.emplace_back(weighted_sum(ups, weights), weighted_sum(downs, weights),
                                view[0]->adapters[l].scaling);
    }
    return out;
}

std::vector<LoraAdapter> hetlora_distribute(const GlobalFactors& g, const std::vector<int>& ranks) {
    if (ranks.size() != g.layers.size()) {
        throw ShapeMismatch("hetlora_distribute: one rank per layer required");
    }
    std::vector<LoraAdapter> out;
    out.reserve(g.layers.size());
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const LoraAdapter& a = g.layers[l];
        const int r = ranks[l];
        if (r < 1) {
            throw RankOutOfRange("hetlora_distribute: rank must be >= 1");
        }
        // leading r columns/rows of the global factors; zero-padded when the
        // client budget exceeds the current global rank
        const int copy = std::min(r, a.rank);
        Matrix up(a.up.rows(), r);
        for (int i = 0; i < a.up.rows(); ++i) {
            for (int j = 0; j < copy; ++j) up(i, j) = a.up(i, j);
        }
        Matrix down(r, a.down.cols());
        for (int i = 0; i < copy; ++i) {
            for (int j = 0; j < a.down.cols(); ++j) down(i, j) = a.down(i, j);
        }
        out.emplace_back(std::move(up), std::move(down), a.scaling);
    }
    return out;
}

std::vector<std::vector<LoraAdapter>> redistribute(const GlobalDelta& delta,
                                                   const std::vector<std::vector<int>>& client_ranks,
                                                   double s) {
    std::vector<SvdFactors> factors;  // one SVD per layer, indexed per client
    factors.reserve(delta.layers.size());
    for (const Matrix& w : delta.layers) {
        factors.push_back(svd(w));
    }
    std::vector<std::vector<LoraAdapter>> out;
    out.reserve(client_ranks.size());
    for (const std::vector<int>& ranks : client_ranks) {
        if (ranks.size() != delta.layers.size()) {
            throw ShapeMismatch("redistribute: one rank per layer required");
        }
        std::vector<LoraAdapter> adapters;
        adapters.reserve(ranks.size());
        for (std::size_t l = 0; l < ranks.size(); ++l) {
            adapters.push_back(decompose(factors[l], ranks[l], s));
        }
        out.push_back(std::move(adapters));
    }
    return out;
}

LoraAdapter hetlora_prune(const LoraAdapter& adapter, double decay) {
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw InvalidDecay("hetlora_prune: decay must be in (0, 1]");
    }
    const SvdFactors f = svd(compose(adapter));
    double total = 0.0;
    for (double s : f.sigma) total += s * s;
    if (total == 0.0) {
        // zero delta: keep a rank-1 carrier
        return decompose(f, 1, adapter.scaling);
    }
    const double target = decay * std::sqrt(total);
    double lead = 0.0;
    int r = adapter.rank;
    for (int j = 0; j < adapter.rank; ++j) {
        lead += f.sigma[j] * f.sigma[j];
        if (std::sqrt(lead) >= target) {
            r = j + 1;
            break;
        }
    }
    return decompose(f, r, adapter.scaling);
}

}  // namespace flexlora
