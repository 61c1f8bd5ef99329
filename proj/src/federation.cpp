#include "flexlora/federation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace flexlora {

ResourceDistribution ResourceDistribution::point_mass(int type) {
    if (type < 0 || type > 3) {
        throw InvalidDistribution("point_mass: type must be in [0, 3]");
    }
    ResourceDistribution d{{0.0, 0.0, 0.0, 0.0}};
    d.weights[type] = 1.0;
    return d;
}

ResourceDistribution ResourceDistribution::by_name(const std::string& name) {
    if (name == "uniform") return uniform();
    if (name == "heavytail_light") return heavy_tail_light();
    if (name == "normal") return normal();
    if (name == "heavytail_strong") return heavy_tail_strong();
    if (name == "type1") return point_mass(0);
    if (name == "type2") return point_mass(1);
    if (name == "type3") return point_mass(2);
    if (name == "type4") return point_mass(3);
    throw InvalidDistribution("unknown resource distribution: " + name);
}

void ResourceDistribution::validate() const {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InvalidDistribution("mixture weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidDistribution("mixture weights must sum to 1");
    }
}

double noise_floor(const WorldConfig& cfg) {
    return 0.5 * cfg.noise_sigma * cfg.noise_sigma * cfg.output_dim;
}

bool should_stop(const std::vector<double>& vals, int patience) {
    double best = std::numeric_limits<double>::infinity();
    int streak = 0;
    for (double v : vals) {
        if (v < best) {
            best = v;
            streak = 0;
        } else {
            ++streak;
        }
    }
    return streak >= patience;
}

std::vector<ClientProfile> assign_resources(const ResourceDistribution& dist, const RankPalette& palette,
                                            const World& world, OptimizerKind opt, std::uint64_t seed) {
    dist.validate();
    const auto shapes = world.cfg.layer_shapes();
    for (const auto& ranks : palette.ranks) {
        if (ranks.size() != shapes.size()) {
            throw InvalidConfig("palette: one rank per layer required");
        }
        for (std::size_t l = 0; l < ranks.size(); ++l) {
            if (ranks[l] < 1 || ranks[l] > std::min(shapes[l].out_dim, shapes[l].in_dim)) {
                throw RankOutOfRange("palette: rank outside layer bounds");
            }
        }
    }
    Rng rng = Rng::derive(seed, {streams::kResourceAssign});
    std::vector<ClientProfile> profiles(world.cfg.num_clients);
    for (int i = 0; i < world.cfg.num_clients; ++i) {
        const int type = rng.categorical(dist.weights);
        const int n = world.client_samples[i];
        profiles[i] = ClientProfile{
            .client_id = i,
            .config_type = type,
            .ranks = palette.ranks[type],
            .sample_count = n - 2 * (n / 10),  // training-split size
            .optimizer = opt,
        };
    }
    return profiles;
}

const ClientDataset& FederationState::dataset(int client_id) {
    auto it = datasets.find(client_id);
    if (it == datasets.end()) {
        it = datasets.emplace(client_id, gen_client_dataset(*world, client_id)).first;
    }
    return it->second;
}

int FederationState::population() const {
    const int total = world->cfg.num_clients;
    return cfg.population > 0 ? std::min(cfg.population, total) : total;
}

FederationState init_federation(const World& world, const FedConfig& cfg) {
    if (!(cfg.participation_rate > 0.0 && cfg.participation_rate <= 1.0)) {
        throw InvalidConfig("participation_rate must be in (0, 1]");
    }
    FederationState state;
    state.world = &world;
    state.cfg = cfg;
    state.profiles = assign_resources(cfg.distribution, cfg.palette, world, cfg.opt.kind, cfg.seed);

    // The zero-shot pool is fixed up front and excluded from training, so
    // every round evaluates generalization on the same never-seen clients.
    if (cfg.zeroshot_pool > 0) {
        if (cfg.zeroshot_pool >= world.cfg.num_clients) {
            throw PoolExhausted("init_federation: zeroshot_pool must leave clients to train");
        }
        Rng rng = Rng::derive(cfg.seed, {streams::kZeroShot});
        std::vector<int> candidates;
        for (int i = state.population(); i < world.cfg.num_clients; ++i) candidates.push_back(i);
        if (static_cast<int>(candidates.size()) < cfg.zeroshot_pool) {
            candidates.resize(world.cfg.num_clients);
            std::iota(candidates.begin(), candidates.end(), 0);
        }
        state.zeroshot_clients = rng.sample_without_replacement(
            std::move(candidates), static_cast<std::size_t>(cfg.zeroshot_pool));
        std::sort(state.zeroshot_clients.begin(), state.zeroshot_clients.end());
    }
    return state;
}

namespace {

std::vector<std::optional<LoraAdapter>> round_zero_adapters(const FederationState& state, int client_id,
                                                            int round) {
    // standard LoRA start: up = 0, down ~ N(0, 1/r), so the delta is zero
    const auto shapes = state.world->cfg.layer_shapes();
    const ClientProfile& prof = state.profiles[client_id];
    std::vector<std::optional<LoraAdapter>> out;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const int r = prof.ranks[l];
        Rng rng = Rng::derive(state.cfg.seed, {streams::kAdapterInit, static_cast<std::uint64_t>(round),
                                               static_cast<std::uint64_t>(client_id), l});
        Matrix up(shapes[l].out_dim, r);
        Matrix down(r, shapes[l].in_dim);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
        for (double& v : down.data()) v = stddev * rng.gaussian();
        out.emplace_back(LoraAdapter(std::move(up), std::move(down), state.cfg.scaling));
    }
    return out;
}

std::vector<std::optional<LoraAdapter>> distribute_to(const FederationState& state, int client_id,
                                                      int round) {
    if (!state.has_global) {
        return round_zero_adapters(state, client_id, round);
    }
    const ClientProfile& prof = state.profiles[client_id];
    std::vector<std::optional<LoraAdapter>> out;
    switch (state.cfg.strategy) {
        case Strategy::FlexLora:
            for (std::size_t l = 0; l < state.global_factors_svd.size(); ++l) {
                out.emplace_back(decompose(state.global_factors_svd[l], prof.ranks[l], state.cfg.scaling));
            }
            break;
        case Strategy::Naive:
            for (const LoraAdapter& a : state.global_factors.layers) {
                out.emplace_back(a);
            }
            break;
        case Strategy::HetLora: {
            for (LoraAdapter& a : hetlora_distribute(state.global_factors, prof.ranks)) {
                out.emplace_back(std::move(a));
            }
            break;
        }
    }
    return out;
}

/// Current global delta per layer (composed for the factor strategies).
std::vector<Matrix> global_delta_matrices(const FederationState& state) {
    std::vector<Matrix> out;
    if (!state.has_global) {
        const auto shapes = state.world->cfg.layer_shapes();
        for (const LayerShape& s : shapes) out.emplace_back(s.out_dim, s.in_dim);
        return out;
    }
    if (state.cfg.strategy == Strategy::FlexLora) {
        return state.global_delta.layers;
    }
    for (const LoraAdapter& a : state.global_factors.layers) {
        out.push_back(compose(a));
    }
    return out;
}

ToyModel deployed_model(const World& world, const std::vector<Matrix>& delta) {
    ToyModel m;
    for (std::size_t l = 0; l < world.bases.size(); ++l) {
        m.layers.push_back({add(world.bases[l], delta[l]), std::nullopt});
    }
    return m;
}

double mean_loss_over(FederationState& state, const std::vector<int>& clients, const ToyModel& model,
                      bool use_test) {
    if (clients.empty()) return 0.0;
    double sum = 0.0;
    for (int id : clients) {
        const ClientDataset& ds = state.dataset(id);
        sum += loss(model, use_test ? ds.test : ds.val);
    }
    return sum / clients.size();
}

double parameter_cost(const World& world, const ClientProfile& prof) {
    const auto shapes = world.cfg.layer_shapes();
    double adapter_params = 0.0;
    double base_params = 0.0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        adapter_params += static_cast<double>(prof.ranks[l]) * (shapes[l].out_dim + shapes[l].in_dim);
        base_params += static_cast<double>(shapes[l].out_dim) * shapes[l].in_dim;
    }
    return adapter_params / base_params;
}

}  // namespace

RoundReport run_round(FederationState& state, int round) {
    const World& world = *state.world;
    const FedConfig& cfg = state.cfg;
    const int population = state.population();

    Rng sample_rng = Rng::derive(cfg.seed, {streams::kRoundSample, static_cast<std::uint64_t>(round)});
    std::vector<int> eligible;
    {
        const std::set<int> held_out(state.zeroshot_clients.begin(), state.zeroshot_clients.end());
        for (int i = 0; i < population; ++i) {
            if (!held_out.contains(i)) eligible.push_back(i);
        }
    }
    const int want = std::min<int>(
        static_cast<int>(eligible.size()),
        cfg.fixed_participants > 0 ? cfg.fixed_participants
                                   : static_cast<int>(std::ceil(cfg.participation_rate * population)));
    std::vector<int> participants =
        sample_rng.sample_without_replacement(std::move(eligible), static_cast<std::size_t>(want));
    std::sort(participants.begin(), participants.end());

    if (cfg.strategy == Strategy::Naive) {
        for (int id : participants) {
            if (state.profiles[id].ranks != state.profiles[participants[0]].ranks) {
                throw HeterogeneousRanksUnsupported(
                    "run_round: naive aggregation cannot mix heterogeneous ranks (bucket effect)");
            }
        }
    }

    const ToyModel base = world.base_model();
    std::vector<Contribution> contribs;
    double train_loss_sum = 0.0;
    for (int id : participants) {
        const ClientDataset& ds = state.dataset(id);
        const ClientProfile& prof = state.profiles[id];
        auto init = distribute_to(state, id, round);
        OptimizerConfig opt = cfg.opt;
        opt.kind = prof.optimizer;
        const std::uint64_t train_seed = Rng::derive(cfg.seed, {streams::kLocalTrain,
                                                                static_cast<std::uint64_t>(round),
                                                                static_cast<std::uint64_t>(id)})
                                             .next_u64();
        LocalUpdateResult res = local_update(base, init, ds.train, opt, train_seed);
        train_loss_sum += res.final_train_loss;

        Contribution c;
        c.client_id = id;
        c.sample_count = prof.sample_count;
        for (auto& a : res.adapters) {
            LoraAdapter adapter = std::move(*a);
            if (cfg.strategy == Strategy::HetLora) {
                adapter = hetlora_prune(adapter, cfg.hetlora_decay);
            }
            c.adapters.push_back(std::move(adapter));
        }
        contribs.push_back(std::move(c));
        state.trained.insert(id);
    }

    RoundReport report;
    report.round = round;
    report.participants = participants;
    report.train_loss = train_loss_sum / participants.size();

    // aggregate
    if (cfg.strategy == Strategy::FlexLora) {
        state.global_delta = aggregate_flexlora(contribs);
        state.global_factors_svd.clear();
        for (const Matrix& w : state.global_delta.layers) {
            state.global_factors_svd.push_back(svd(w));  // once per layer per round
        }
        for (std::size_t l = 0; l < state.global_factors_svd.size(); ++l) {
            const SvdFactors& f = state.global_factors_svd[l];
            report.spectra.push_back(f.sigma);
            for (int id : participants) {
                const int r = state.profiles[id].ranks[l];
                report.phi.push_back({id, static_cast<int>(l), r, truncation_error(f, r)});
            }
        }
    } else {
        state.global_factors =
            cfg.strategy == Strategy::Naive ? aggregate_naive(contribs) : aggregate_hetlora(contribs);
        for (const LoraAdapter& a : state.global_factors.layers) {
            report.spectra.push_back(svd(compose(a)).sigma);
        }
    }
    state.has_global = true;

    // evaluation
    const std::vector<Matrix> delta = global_delta_matrices(state);
    const ToyModel deployed = deployed_model(world, delta);

    std::vector<int> val_clients;
    {
        const std::set<int> held_out(state.zeroshot_clients.begin(), state.zeroshot_clients.end());
        for (int i = 0; i < population; ++i) {
            if (!held_out.contains(i)) val_clients.push_back(i);
        }
    }
    report.val_loss = mean_loss_over(state, val_clients, deployed, /*use_test=*/false);

    const std::vector<int>& pool = state.zeroshot_clients;
    if (cfg.budgeted_deploy) {
        double sum = 0.0;
        for (int id : pool) {
            std::vector<Matrix> budgeted;
            for (std::size_t l = 0; l < delta.size(); ++l) {
                budgeted.push_back(truncate(svd(delta[l]), state.profiles[id].ranks[l]));
            }
            const ToyModel m = deployed_model(world, budgeted);
            sum += loss(m, state.dataset(id).test);
        }
        report.zeroshot_loss = pool.empty() ? 0.0 : sum / pool.size();
    } else {
        report.zeroshot_loss = mean_loss_over(state, pool, deployed, /*use_test=*/true);
    }

    double cost = 0.0;
    for (int id : participants) {
        cost += parameter_cost(world, state.profiles[id]);
    }
    report.cost_per_round = cost / participants.size();
    return report;
}

ExperimentResult run_experiment(const World& world, const FedConfig& cfg,
                                std::vector<RoundReport>* sink) {
    FederationState state = init_federation(world, cfg);
    const double threshold = cfg.loss_threshold > 0.0 ? cfg.loss_threshold : 1.5 * noise_floor(world.cfg);

    ExperimentResult result;
    std::vector<double> val_history;
    for (int round = 0; round < cfg.max_rounds; ++round) {
        RoundReport report = run_round(state, round);
        val_history.push_back(report.val_loss);
        if (!result.threshold_reached) {
            result.total_cost += report.cost_per_round;
            if (report.val_loss <= threshold) {
                result.threshold_reached = true;
                result.rounds_to_threshold = round + 1;
            }
        }
        result.rounds.push_back(report);
        if (sink) sink->push_back(std::move(report));
        if (should_stop(val_history, cfg.early_stop_patience)) {
            break;
        }
    }
    result.stopping_round = static_cast<int>(result.rounds.size());
    if (!result.rounds.empty()) {
        // early stopping restores the best-validation round's model
        std::size_t best = 0;
        for (std::size_t i = 1; i < result.rounds.size(); ++i) {
            if (result.rounds[i].val_loss < result.rounds[best].val_loss) best = i;
        }
        result.final_val_loss = result.rounds[best].val_loss;
        result.final_zeroshot_loss = result.rounds[best].zeroshot_loss;
    }
    return result;
}

namespace {

/// Minimal Nelder-Mead for the 3-parameter scaling-law fit.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, int iters) {
    const int n = static_cast<int>(x0.size());
    std::vector<std::vector<double>> simplex{x0};
    for (int i = 0; i < n; ++i) {
        auto p = x0;
        p[i] += (p[i] != 0.0 ? 0.1 * std::abs(p[i]) : 0.1);
        simplex.push_back(p);
    }
    std::vector<double> fv(simplex.size());
    for (std::size_t i = 0; i < simplex.size(); ++i) fv[i] = f(simplex[i]);

    for (int it = 0; it < iters; ++it) {
        std::vector<int> order(simplex.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (int idx : order) {
            s2.push_back(simplex[idx]);
            f2.push_back(fv[idx]);
        }
        simplex = s2;
        fv = f2;

        std::vector<double> centroid(n, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;
        }
        auto combine = [&](double coef) {
            std::vector<double> p(n);
            for (int j = 0; j < n; ++j) p[j] = centroid[j] + coef * (simplex[n][j] - centroid[j]);
            return p;
        };
        const auto refl = combine(-1.0);
        const double f_refl = f(refl);
        if (f_refl < fv[0]) {
            const auto exp_p = combine(-2.0);
            const double f_exp = f(exp_p);
            if (f_exp < f_refl) {
                simplex[n] = exp_p;
                fv[n] = f_exp;
            } else {
                simplex[n] = refl;
                fv[n] = f_refl;
            }
        } else if (f_refl < fv[n - 1]) {
            simplex[n] = refl;
            fv[n] = f_refl;
        } else {
            const auto contr = combine(0.5);
            const double f_contr = f(contr);
            if (f_contr < fv[n]) {
                simplex[n] = contr;
                fv[n] = f_contr;
            } else {
                for (int i = 1; i <= n; ++i) {
                    for (int j = 0; j < n; ++j) simplex[i][j] = 0.5 * (simplex[i][j] + simplex[0][j]);
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    const auto best = std::min_element(fv.begin(), fv.end());
    return simplex[static_cast<std::size_t>(best - fv.begin())];
}

}  // namespace

ScalingResult client_scaling_experiment(const World& world, const FedConfig& cfg,
                                        const std::vector<int>& pool_sizes,
                                        const std::vector<std::uint64_t>& seeds) {
    ScalingResult result;
    result.pool_sizes = pool_sizes;
    for (int size : pool_sizes) {
        if (size > world.cfg.num_clients) {
            throw InvalidConfig("client_scaling: pool size exceeds world clients");
        }
        std::vector<double> losses;
        for (std::uint64_t seed : seeds) {
            FedConfig c = cfg;
            c.population = size;
            // constant participation rate: larger federations average more
            // client updates per round
            c.fixed_participants = std::max(1, size / 10);
            c.seed = seed;
            const ExperimentResult r = run_experiment(world, c);
            losses.push_back(r.final_zeroshot_loss);
        }
        result.per_seed.push_back(losses);
        result.mean_zeroshot.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) /
                                       losses.size());
    }

    if (pool_sizes.size() >= 3) {
        const double eps_min = *std::min_element(result.mean_zeroshot.begin(), result.mean_zeroshot.end());
        auto objective = [&](const std::vector<double>& theta) {
            const double a1 = std::exp(theta[0]);
            const double a2 = theta[1];
            const double a3 = eps_min - std::exp(theta[2]);
            double err = 0.0;
            for (std::size_t i = 0; i < result.pool_sizes.size(); ++i) {
                const double eps = result.mean_zeroshot[i];
                const double predicted = a1 / (eps * eps) * (a2 - std::log(eps - a3));
                const double r = predicted - result.pool_sizes[i];
                err += r * r;
            }
            return err;
        };
        const std::vector<double> theta0{0.0, 1.0, std::log(std::max(eps_min * 0.5, 1e-9))};
        const auto theta = nelder_mead(objective, theta0, 800);
        result.fitted = true;
        result.a1 = std::exp(theta[0]);
        result.a2 = theta[1];
        result.a3 = eps_min - std::exp(theta[2]);
        result.fit_residual = std::sqrt(objective(theta) / pool_sizes.size());
    }
    return result;
}

}  // namespace flexlora
