#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "flexlora/model.hpp"

namespace flexlora {

enum class AssignmentMode {
    Meta,     // one archetype per client
    Mixture,  // Dirichlet(alpha) mixture proportions per client
};

struct WorldConfig {
    int num_clients = 100;
    int num_task_archetypes = 8;
    int shared_rank = 2;       // rank of the teacher component common to all archetypes
    int archetype_rank = 2;    // rank of the archetype-specific component
    double shared_scale = 0.15;     // entry stddev of the shared delta
    double archetype_scale = 0.08;  // entry stddev of the specific deltas
    double noise_sigma = 0.05;
    int samples_min = 60;
    int samples_max = 140;
    double dirichlet_alpha = 0.5;
    AssignmentMode mode = AssignmentMode::Meta;
    // model dims: input -> hidden -> output with tanh between the two layers
    int input_dim = 32;
    int hidden_dim = 32;
    int output_dim = 16;
    std::uint64_t seed = 1;

    int teacher_rank() const { return shared_rank + archetype_rank; }
    std::vector<LayerShape> layer_shapes() const {
        return {{hidden_dim, input_dim}, {output_dim, hidden_dim}};
    }
};

/// Frozen bases, per-archetype low-rank teacher deltas, and client
/// assignments. All randomness derives from cfg.seed.
struct World {
    WorldConfig cfg;
    std::vector<Matrix> bases;                          // frozen, per layer
    std::vector<std::vector<Matrix>> archetype_deltas;  // [archetype][layer]
    std::vector<int> client_archetype;                  // meta mode (and mixture argmax)
    std::vector<std::vector<double>> client_mixture;    // mixture mode proportions
    std::vector<int> client_samples;                    // n^i

    ToyModel base_model() const;
};

struct ClientDataset {
    Batch train, val, test;
    int archetype = 0;
    int sample_count = 0;
};

World gen_world(const WorldConfig& cfg);

/// Teacher output for one archetype: forward through base + delta.
Matrix teacher_forward(const World& world, int archetype, const Matrix& inputs);

/// Standard-normal inputs, teacher targets plus Gaussian noise, 8:1:1
/// split (val/test floor(n/10) each, remainder to train).
ClientDataset gen_client_dataset(const World& world, int client_id, int n);
ClientDataset gen_client_dataset(const World& world, int client_id);  // n = world sample count

/// Samples `count` clients that are not in `trained`; the result is
/// disjoint from every training participant so far.
std::vector<int> unseen_pool(const World& world, int count, std::uint64_t seed,
                             const std::set<int>& trained);

}  // namespace flexlora
