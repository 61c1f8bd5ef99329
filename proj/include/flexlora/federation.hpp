#pragma once

#include <array>
#include <map>
#include <set>
#include <string>

#include "flexlora/aggregate.hpp"
#include "flexlora/taskgen.hpp"

namespace flexlora {

enum class Strategy { Naive, FlexLora, HetLora };

/// Mixture weights over the four LoRA configuration types.
struct ResourceDistribution {
    std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};

    static ResourceDistribution uniform() { return {{0.25, 0.25, 0.25, 0.25}}; }
    static ResourceDistribution heavy_tail_light() { return {{0.70, 0.10, 0.10, 0.10}}; }
    static ResourceDistribution normal() { return {{0.15, 0.35, 0.35, 0.15}}; }
    static ResourceDistribution heavy_tail_strong() { return {{0.10, 0.10, 0.10, 0.70}}; }
    static ResourceDistribution point_mass(int type);
    static ResourceDistribution by_name(const std::string& name);

    void validate() const;
};

/// Per-layer rank budgets for the four configuration types.
struct RankPalette {
    std::array<std::vector<int>, 4> ranks;

    /// Toy default: Type1 = r2 all layers, Type2 = r4 all layers,
    /// Type3 = r4 first layer / r8 second, Type4 = r8 all layers.
    static RankPalette toy_default() {
        RankPalette p;
        p.ranks = {{{2, 2}, {4, 4}, {4, 8}, {8, 8}}};
        return p;
    }
};

struct ClientProfile {
    int client_id = 0;
    int config_type = 0;          // index into the palette
    std::vector<int> ranks;       // per-layer budget
    long long sample_count = 0;   // n^i
    OptimizerKind optimizer = OptimizerKind::Sgd;
};

struct FedConfig {
    Strategy strategy = Strategy::FlexLora;
    ResourceDistribution distribution = ResourceDistribution::uniform();
    RankPalette palette = RankPalette::toy_default();
    double participation_rate = 0.05;
    int fixed_participants = 0;  // when > 0, overrides participation_rate
    int max_rounds = 50;
    int early_stop_patience = 3;
    double scaling = 1.0;        // the LoRA constant s
    double hetlora_decay = 0.99;
    double loss_threshold = 0.0;  // <= 0: auto, 1.5x the noise floor
    int zeroshot_pool = 10;
    bool budgeted_deploy = false;  // truncate the delta per unseen client's budget
    int population = 0;            // clients eligible for training; 0 = all
    OptimizerConfig opt;
    std::uint64_t seed = 1;
};

struct RoundReport {
    int round = 0;
    std::vector<int> participants;  // sampled client ids, ascending
    double train_loss = 0.0;
    double val_loss = 0.0;
    double zeroshot_loss = 0.0;
    double cost_per_round = 0.0;  // mean trainable/base parameter ratio
    std::vector<std::vector<double>> spectra;  // per layer, sigma of W_g
    struct Phi {
        int client_id;
        int layer;
        int rank;
        double value;
    };
    std::vector<Phi> phi;  // per participant per layer truncation errors
};

struct ExperimentResult {
    std::vector<RoundReport> rounds;
    int stopping_round = 0;        // rounds actually executed
    int rounds_to_threshold = -1;  // -1 when the threshold was never reached
    double total_cost = 0.0;       // summed cost up to the threshold round (all rounds if unreached)
    bool threshold_reached = false;
    double final_val_loss = 0.0;
    double final_zeroshot_loss = 0.0;
};

/// Mutable federation state threaded through rounds.
struct FederationState {
    const World* world = nullptr;
    FedConfig cfg;
    std::vector<ClientProfile> profiles;
    std::set<int> trained;               // every client that ever participated
    std::vector<int> zeroshot_clients;   // held-out pool, fixed at init, never trained
    // FlexLoRA: the global delta and its per-layer SVD (computed once per round).
    GlobalDelta global_delta;
    std::vector<SvdFactors> global_factors_svd;
    bool has_global = false;
    // Naive / HETLORA: global factor pairs.
    GlobalFactors global_factors;
    // cached datasets, generated lazily
    std::map<int, ClientDataset> datasets;

    const ClientDataset& dataset(int client_id);
    int population() const;
};

/// i.i.d. categorical draws of configuration types per client.
std::vector<ClientProfile> assign_resources(const ResourceDistribution& dist, const RankPalette& palette,
                                            const World& world, OptimizerKind opt, std::uint64_t seed);

FederationState init_federation(const World& world, const FedConfig& cfg);

RoundReport run_round(FederationState& state, int round);

ExperimentResult run_experiment(const World& world, const FedConfig& cfg,
                                std::vector<RoundReport>* sink = nullptr);

/// True once `vals` shows `patience` consecutive entries without improving
/// on the best value seen so far.
bool should_stop(const std::vector<double>& vals, int patience);

/// Noise-floor loss of the regression task: 0.5 * sigma^2 * output_dim.
double noise_floor(const WorldConfig& cfg);

struct ScalingResult {
    std::vector<int> pool_sizes;
    std::vector<double> mean_zeroshot;          // per pool size, mean over seeds
    std::vector<std::vector<double>> per_seed;  // [size][seed]
    bool fitted = false;
    double a1 = 0.0, a2 = 0.0, a3 = 0.0;  // |C| = A1/eps^2 (A2 - log(eps - A3))
    double fit_residual = 0.0;
};

/// Zero-shot loss vs number of federating clients, with a least-squares fit
/// of the client-count/generalization functional form.
ScalingResult client_scaling_experiment(const World& world, const FedConfig& cfg,
                                        const std::vector<int>& pool_sizes,
                                        const std::vector<std::uint64_t>& seeds);

}  // namespace flexlora
