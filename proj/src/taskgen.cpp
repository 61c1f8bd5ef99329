#include "flexlora/taskgen.hpp"

#include <algorithm>

namespace flexlora {

namespace {

Matrix gaussian_matrix(Rng& rng, int rows, int cols, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * rng.gaussian();
    return m;
}

void validate(const WorldConfig& cfg) {
    if (cfg.num_clients < 1 || cfg.num_task_archetypes < 1 ||
        cfg.num_task_archetypes > cfg.num_clients) {
        throw InvalidConfig("world: need 1 <= num_task_archetypes <= num_clients");
    }
    if (cfg.noise_sigma < 0.0) {
        throw InvalidConfig("world: noise_sigma must be non-negative");
    }
    if (cfg.shared_rank < 0 || cfg.archetype_rank < 0) {
        throw InvalidConfig("world: teacher ranks must be non-negative");
    }
    if (cfg.samples_min < 10 || cfg.samples_max < cfg.samples_min) {
        throw InvalidConfig("world: need samples_max >= samples_min >= 10");
    }
    if (cfg.input_dim < 1 || cfg.hidden_dim < 1 || cfg.output_dim < 1) {
        throw InvalidConfig("world: model dims must be positive");
    }
    for (const LayerShape& s : cfg.layer_shapes()) {
        if (cfg.teacher_rank() > std::min(s.out_dim, s.in_dim)) {
            throw InvalidConfig("world: teacher rank exceeds layer dimensions");
        }
    }
    if (cfg.dirichlet_alpha <= 0.0) {
        throw InvalidConfig("world: dirichlet_alpha must be positive");
    }
}

}  // namespace

ToyModel World::base_model() const {
    ToyModel m;
    for (const Matrix& b : bases) {
        m.layers.push_back({b, std::nullopt});
    }
    return m;
}

World gen_world(const WorldConfig& cfg) {
    validate(cfg);
    World w;
    w.cfg = cfg;

    const auto shapes = cfg.layer_shapes();
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Rng rng = Rng::derive(cfg.seed, {streams::kWorldBase, l});
        // base entries ~ N(0, 1/in_dim) keep pre-activations unit scale
        w.bases.push_back(gaussian_matrix(rng, shapes[l].out_dim, shapes[l].in_dim,
                                          1.0 / std::sqrt(static_cast<double>(shapes[l].in_dim))));
    }

    std::vector<Matrix> shared_deltas;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Rng rng = Rng::derive(cfg.seed, {streams::kWorldShared, l});
        const Matrix g1 = gaussian_matrix(rng, shapes[l].out_dim, std::max(cfg.shared_rank, 1), 1.0);
        const Matrix g2 = gaussian_matrix(rng, std::max(cfg.shared_rank, 1), shapes[l].in_dim, 1.0);
        if (cfg.shared_rank == 0) {
            shared_deltas.emplace_back(shapes[l].out_dim, shapes[l].in_dim);
        } else {
            shared_deltas.push_back(
                scale(matmul(g1, g2), cfg.shared_scale / std::sqrt(static_cast<double>(cfg.shared_rank))));
        }
    }

    for (int t = 0; t < cfg.num_task_archetypes; ++t) {
        std::vector<Matrix> deltas;
        for (std::size_t l = 0; l < shapes.size(); ++l) {
            Rng rng = Rng::derive(cfg.seed, {streams::kWorldArchetype, static_cast<std::uint64_t>(t), l});
            Matrix specific(shapes[l].out_dim, shapes[l].in_dim);
            if (cfg.archetype_rank > 0 && cfg.archetype_scale != 0.0) {
                const Matrix g1 = gaussian_matrix(rng, shapes[l].out_dim, cfg.archetype_rank, 1.0);
                const Matrix g2 = gaussian_matrix(rng, cfg.archetype_rank, shapes[l].in_dim, 1.0);
                specific = scale(matmul(g1, g2),
                                 cfg.archetype_scale / std::sqrt(static_cast<double>(cfg.archetype_rank)));
            }
            deltas.push_back(add(shared_deltas[l], specific));
        }
        w.archetype_deltas.push_back(std::move(deltas));
    }

    w.client_archetype.resize(cfg.num_clients);
    if (cfg.mode == AssignmentMode::Meta) {
        for (int i = 0; i < cfg.num_clients; ++i) {
            w.client_archetype[i] = i % cfg.num_task_archetypes;
        }
    } else {
        w.client_mixture.resize(cfg.num_clients);
        for (int i = 0; i < cfg.num_clients; ++i) {
            Rng rng = Rng::derive(cfg.seed, {streams::kWorldAssign, static_cast<std::uint64_t>(i)});
            w.client_mixture[i] = rng.dirichlet(cfg.dirichlet_alpha, cfg.num_task_archetypes);
            w.client_archetype[i] = static_cast<int>(
                std::max_element(w.client_mixture[i].begin(), w.client_mixture[i].end()) -
                w.client_mixture[i].begin());
        }
    }

    Rng sample_rng = Rng::derive(cfg.seed, {streams::kWorldSamples});
    w.client_samples.resize(cfg.num_clients);
    for (int i = 0; i < cfg.num_clients; ++i) {
        w.client_samples[i] =
            cfg.samples_min +
            static_cast<int>(sample_rng.below(static_cast<std::uint64_t>(cfg.samples_max - cfg.samples_min + 1)));
    }
    return w;
}

Matrix teacher_forward(const World& world, int archetype, const Matrix& inputs) {
    ToyModel m;
    for (std::size_t l = 0; l < world.bases.size(); ++l) {
        m.layers.push_back({add(world.bases[l], world.archetype_deltas[archetype][l]), std::nullopt});
    }
    return forward(m, inputs);
}

ClientDataset gen_client_dataset(const World& world, int client_id, int n) {
    if (n < 10) {
        throw DatasetTooSmall("gen_client_dataset: need n >= 10 for non-empty splits");
    }
    const WorldConfig& cfg = world.cfg;
    Rng rng = Rng::derive(cfg.seed, {streams::kClientData, static_cast<std::uint64_t>(client_id)});

    Matrix x = gaussian_matrix(rng, n, cfg.input_dim, 1.0);

    std::vector<int> archetypes(n, world.client_archetype[client_id]);
    if (cfg.mode == AssignmentMode::Mixture) {
        const std::vector<double>& mix = world.client_mixture[client_id];
        for (int i = 0; i < n; ++i) {
            archetypes[i] = rng.categorical(mix);
        }
    }

    // teacher outputs, grouped per archetype for one forward pass each
    Matrix y(n, cfg.output_dim);
    for (int t = 0; t < cfg.num_task_archetypes; ++t) {
        std::vector<int> rows;
        for (int i = 0; i < n; ++i) {
            if (archetypes[i] == t) rows.push_back(i);
        }
        if (rows.empty()) continue;
        Matrix xt(static_cast<int>(rows.size()), cfg.input_dim);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (int c = 0; c < cfg.input_dim; ++c) xt(static_cast<int>(r), c) = x(rows[r], c);
        }
        const Matrix yt = teacher_forward(world, t, xt);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (int c = 0; c < cfg.output_dim; ++c) y(rows[r], c) = yt(static_cast<int>(r), c);
        }
    }
    if (cfg.noise_sigma > 0.0) {
        for (double& v : y.data()) v += cfg.noise_sigma * rng.gaussian();
    }

    const int n_val = n / 10;
    const int n_test = n / 10;
    const int n_train = n - n_val - n_test;

    auto slice = [&](int begin, int count) {
        Matrix xs(count, cfg.input_dim);
        Matrix ys(count, cfg.output_dim);
        for (int r = 0; r < count; ++r) {
            for (int c = 0; c < cfg.input_dim; ++c) xs(r, c) = x(begin + r, c);
            for (int c = 0; c < cfg.output_dim; ++c) ys(r, c) = y(begin + r, c);
        }
        return Batch{std::move(xs), std::move(ys)};
    };

    ClientDataset ds;
    ds.train = slice(0, n_train);
    ds.val = slice(n_train, n_val);
    ds.test = slice(n_train + n_val, n_test);
    ds.archetype = world.client_archetype[client_id];
    ds.sample_count = n;
    return ds;
}

ClientDataset gen_client_dataset(const World& world, int client_id) {
    return gen_client_dataset(world, client_id, world.client_samples[client_id]);
}

std::vector<int> unseen_pool(const World& world, int count, std::uint64_t seed,
                             const std::set<int>& trained) {
    if (count == 0) return {};
    std::vector<int> complement;
    for (int i = 0; i < world.cfg.num_clients; ++i) {
        if (!trained.contains(i)) complement.push_back(i);
    }
    if (static_cast<int>(complement.size()) < count) {
        throw PoolExhausted("unseen_pool: not enough never-trained clients remain");
    }
    Rng rng(seed);
    return rng.sample_without_replacement(std::move(complement), static_cast<std::size_t>(count));
}

}  // namespace flexlora
