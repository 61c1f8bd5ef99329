#include "flexlora/verify.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <sstream>

#include "flexlora/aggregate.hpp"
#include "flexlora/federation.hpp"
#include "flexlora/reporting.hpp"

namespace flexlora {

namespace {

Matrix random_matrix(std::uint64_t seed, int rows, int cols, double stddev = 1.0) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * rng.gaussian();
    return m;
}

double max_abs_dev_from_identity(const Matrix& g) {
    double worst = 0.0;
    for (int i = 0; i < g.rows(); ++i) {
        for (int j = 0; j < g.cols(); ++j) {
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

double rel_fro_diff(const Matrix& a, const Matrix& b) {
    const double ref = frobenius_norm(b);
    return frobenius_norm(sub(a, b)) / (ref > 0.0 ? ref : 1.0);
}

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

SuiteResult run_suite(const std::string& name, const std::function<void(Check&)>& body) {
    Check c;
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail = std::string("exception: ") + e.what();
    }
    return {name, c.ok, c.detail};
}

void suite_svd_orthonormality(Check& c) {
    const std::vector<std::pair<int, int>> shapes{{2, 2}, {5, 4}, {4, 5}, {16, 16},
                                                  {33, 17}, {17, 33}, {64, 64}, {128, 128}};
    std::uint64_t seed = 100;
    for (const auto& [rows, cols] : shapes) {
        const Matrix w = random_matrix(seed++, rows, cols);
        const SvdFactors f = svd(w);
        c.expect(max_abs_dev_from_identity(matmul(transpose(f.u), f.u)) <= 1e-10,
                 "U^T U deviates from identity");
        c.expect(max_abs_dev_from_identity(matmul(transpose(f.v), f.v)) <= 1e-10,
                 "V^T V deviates from identity");
        c.expect(rel_fro_diff(truncate(f, f.k()), w) <= 1e-10, "reconstruction error too large");
        for (int j = 0; j < f.k(); ++j) {
            c.expect(f.sigma[j] >= 0.0, "negative singular value");
            if (j > 0) c.expect(f.sigma[j] <= f.sigma[j - 1], "sigma not non-increasing");
        }
    }
}

void suite_svd_tail_formula(Check& c) {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        const Matrix w = random_matrix(seed, 16, 12);
        const SvdFactors f = svd(w);
        const double fro = frobenius_norm(w);
        double prev = std::numeric_limits<double>::infinity();
        for (int r = 1; r <= f.k(); ++r) {
            const double err = truncation_error(f, r);
            c.expect(std::abs(err - frobenius_norm(sub(truncate(f, r), w))) <= 1e-10 * fro,
                     "tail formula mismatch");
            c.expect(err <= prev + 1e-12 * fro, "truncation error not monotone in rank");
            prev = err;
        }
        c.expect(truncation_error(f, f.k()) <= 1e-10 * fro, "tail at full rank not zero");
    }
}

void suite_svd_determinism(Check& c) {
    const Matrix w = random_matrix(21, 24, 17);
    const SvdFactors a = svd(w);
    const SvdFactors b = svd(w);
    c.expect(a.u.data() == b.u.data() && a.sigma == b.sigma && a.v.data() == b.v.data(),
             "repeated SVD is not bit-identical");
}

void suite_adapter_roundtrip(Check& c) {
    for (std::uint64_t seed : {31ULL, 32ULL}) {
        const Matrix w = random_matrix(seed, 20, 14);
        const SvdFactors f = svd(w);
        for (int r : {1, 3, 7, 14}) {
            const Matrix target = truncate(f, r);
            Matrix prev;
            bool have_prev = false;
            for (double s : {0.5, 1.0, 16.0}) {
                const Matrix got = compose(decompose(w, r, s));
                c.expect(rel_fro_diff(got, target) <= 1e-10, "compose(decompose) != truncated SVD");
                if (have_prev) {
                    c.expect(rel_fro_diff(got, prev) <= 1e-12, "decompose depends on scaling s");
                }
                prev = got;
                have_prev = true;
                const SvdFactors fg = svd(got);
                if (r < fg.k()) {
                    c.expect(fg.sigma[r] <= 1e-10 * (fg.sigma[0] > 0 ? fg.sigma[0] : 1.0),
                             "composed delta exceeds rank budget");
                }
            }
        }
    }
}

std::vector<Contribution> seeded_contributions(std::uint64_t seed, int count,
                                               const std::vector<int>& ranks_per_client) {
    std::vector<Contribution> contribs;
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        Contribution c;
        c.client_id = i;
        c.sample_count = 5 + static_cast<long long>(rng.below(40));
        const int r = ranks_per_client[i % ranks_per_client.size()];
        c.adapters.emplace_back(random_matrix(rng.next_u64(), 12, r, 0.3),
                                random_matrix(rng.next_u64(), r, 10, 0.3), 1.0);
        c.adapters.emplace_back(random_matrix(rng.next_u64(), 8, r, 0.3),
                                random_matrix(rng.next_u64(), r, 12, 0.3), 1.0);
        contribs.push_back(std::move(c));
    }
    return contribs;
}

void suite_aggregate_order_and_weights(Check& c) {
    auto contribs = seeded_contributions(41, 5, {1, 2, 4});
    const GlobalDelta base = aggregate_flexlora(contribs);

    // permutation invariance
    std::vector<Contribution> permuted{contribs[3], contribs[0], contribs[4], contribs[1], contribs[2]};
    const GlobalDelta shuffled = aggregate_flexlora(permuted);
    for (std::size_t l = 0; l < base.layers.size(); ++l) {
        double worst = 0.0;
        for (std::size_t i = 0; i < base.layers[l].data().size(); ++i) {
            worst = std::max(worst, std::abs(base.layers[l].data()[i] - shuffled.layers[l].data()[i]));
        }
        c.expect(worst <= 1e-12, "aggregation is order-dependent");
    }

    // linearity against the dense weighted_sum kernel
    double total = 0.0;
    for (const auto& ct : contribs) total += static_cast<double>(ct.sample_count);
    for (std::size_t l = 0; l < base.layers.size(); ++l) {
        std::vector<Matrix> deltas;
        std::vector<double> weights;
        double wsum = 0.0;
        for (const auto& ct : contribs) {
            deltas.push_back(compose(ct.adapters[l]));
            weights.push_back(static_cast<double>(ct.sample_count) / total);
            wsum += weights.back();
        }
        c.expect(std::abs(wsum - 1.0) <= 1e-12, "aggregation weights do not sum to 1");
        c.expect(rel_fro_diff(base.layers[l], weighted_sum(deltas, weights)) <= 1e-14,
                 "flexlora average deviates from weighted_sum");
    }
}

void suite_aggregate_homogeneous_consistency(Check& c) {
    // identical clients at equal rank: all strategies agree
    auto contribs = seeded_contributions(51, 1, {3});
    contribs.push_back(contribs[0]);
    contribs.back().client_id = 1;
    contribs.push_back(contribs[0]);
    contribs.back().client_id = 2;

    const GlobalDelta flex = aggregate_flexlora(contribs);
    const GlobalFactors naive = aggregate_naive(contribs);
    const GlobalFactors het = aggregate_hetlora(contribs);
    for (std::size_t l = 0; l < flex.layers.size(); ++l) {
        c.expect(rel_fro_diff(compose(naive.layers[l]), flex.layers[l]) <= 1e-10,
                 "naive disagrees with flexlora on identical clients");
        c.expect(rel_fro_diff(compose(het.layers[l]), flex.layers[l]) <= 1e-10,
                 "hetlora disagrees with flexlora on identical clients");
    }
}

void suite_redistribution_fidelity(Check& c) {
    const Matrix w = random_matrix(61, 24, 18);
    GlobalDelta delta;
    delta.layers.push_back(w);
    const SvdFactors f = svd(w);
    const std::vector<std::vector<int>> budgets{{1}, {3}, {8}, {18}};
    const auto adapters = redistribute(delta, budgets, 4.0);
    for (std::size_t i = 0; i < budgets.size(); ++i) {
        const double err = frobenius_norm(sub(compose(adapters[i][0]), w));
        const double expected = truncation_error(f, budgets[i][0]);
        const double ref = std::max(expected, 1e-12);
        c.expect(std::abs(err - expected) / ref <= 1e-9 || std::abs(err - expected) <= 1e-12,
                 "redistribution error differs from truncation_error");
    }
}

ToyModel small_random_model(Rng& rng, int& param_count) {
    const int p0 = 2 + static_cast<int>(rng.below(15));
    const int h = 2 + static_cast<int>(rng.below(15));
    const int out = 2 + static_cast<int>(rng.below(15));
    ToyModel m;
    const std::vector<LayerShape> shapes{{h, p0}, {out, h}};
    param_count = 0;
    for (const LayerShape& s : shapes) {
        const int max_rank = std::min({4, s.out_dim, s.in_dim});
        const int r = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rank)));
        Matrix base = random_matrix(rng.next_u64(), s.out_dim, s.in_dim, 1.0 / std::sqrt(s.in_dim));
        LoraAdapter a(random_matrix(rng.next_u64(), s.out_dim, r, 0.2),
                      random_matrix(rng.next_u64(), r, s.in_dim, 0.2), 1.0 + rng.uniform());
        param_count += s.out_dim * r + r * s.in_dim;
        m.layers.push_back({std::move(base), std::move(a)});
    }
    return m;
}

double max_gradient_rel_error(const ToyModel& model, const Batch& batch, double l2) {
    const AdapterGrads analytic = grads(model, batch, l2);
    const double h = 1e-5;
    double worst = 0.0;
    ToyModel work = model;
    for (std::size_t l = 0; l < work.layers.size(); ++l) {
        if (!work.layers[l].adapter) continue;
        for (int which = 0; which < 2; ++which) {
            Matrix& param = which == 0 ? work.layers[l].adapter->up : work.layers[l].adapter->down;
            const Matrix& g = which == 0 ? analytic.layers[l]->first : analytic.layers[l]->second;
            for (std::size_t i = 0; i < param.data().size(); ++i) {
                const double orig = param.data()[i];
                param.data()[i] = orig + h;
                const double lp = loss(work, batch, l2);
                param.data()[i] = orig - h;
                const double lm = loss(work, batch, l2);
                param.data()[i] = orig;
                const double fd = (lp - lm) / (2.0 * h);
                const double scale = std::max({std::abs(fd), std::abs(g.data()[i]), 1e-6});
                worst = std::max(worst, std::abs(fd - g.data()[i]) / scale);
            }
        }
    }
    return worst;
}

void suite_gradient_check(Check& c) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(700 + seed);
        int params = 0;
        const ToyModel m = small_random_model(rng, params);
        const int n = 3;
        Batch batch{random_matrix(rng.next_u64(), n, m.layers[0].base.cols()),
                    random_matrix(rng.next_u64(), n, m.layers.back().base.rows())};
        const double l2 = seed % 5 == 0 ? 1e-3 : 0.0;
        const double worst = max_gradient_rel_error(m, batch, l2);
        std::ostringstream os;
        os << "gradient check failed at seed " << seed << " (rel err " << worst << ")";
        c.expect(worst <= 1e-5, os.str());
    }
}

void suite_local_update(Check& c) {
    Rng rng(900);
    int params = 0;
    const ToyModel m = small_random_model(rng, params);
    Batch data{random_matrix(rng.next_u64(), 24, m.layers[0].base.cols()),
               random_matrix(rng.next_u64(), 24, m.layers.back().base.rows())};

    std::vector<std::optional<LoraAdapter>> init;
    for (const auto& layer : m.layers) init.push_back(layer.adapter);

    OptimizerConfig opt;
    opt.learning_rate = 1e-3;
    opt.batch_size = 24;  // full batch
    opt.epochs = 1;

    // frozen bases and determinism
    const LocalUpdateResult r1 = local_update(m, init, data, opt, 42);
    const LocalUpdateResult r2 = local_update(m, init, data, opt, 42);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        c.expect(r1.adapters[l]->up.data() == r2.adapters[l]->up.data() &&
                     r1.adapters[l]->down.data() == r2.adapters[l]->down.data(),
                 "local_update not deterministic for a fixed seed");
    }

    // one small full-batch SGD step never increases the loss (20 seeds)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng mrng(1000 + seed);
        int pc = 0;
        ToyModel model = small_random_model(mrng, pc);
        Batch batch{random_matrix(mrng.next_u64(), 16, model.layers[0].base.cols()),
                    random_matrix(mrng.next_u64(), 16, model.layers.back().base.rows())};
        std::vector<std::optional<LoraAdapter>> adapters;
        for (const auto& layer : model.layers) adapters.push_back(layer.adapter);
        const double before = loss(model, batch);
        OptimizerConfig step;
        step.learning_rate = 1e-3;
        step.batch_size = batch.size();
        const LocalUpdateResult res = local_update(model, adapters, batch, step, seed);
        c.expect(res.final_train_loss <= before + 1e-12, "full-batch SGD step increased the loss");
    }
}

void suite_taskgen(Check& c) {
    WorldConfig cfg;
    cfg.num_clients = 16;
    cfg.num_task_archetypes = 4;
    cfg.seed = 7;
    const World w1 = gen_world(cfg);
    const World w2 = gen_world(cfg);
    for (std::size_t l = 0; l < w1.bases.size(); ++l) {
        c.expect(w1.bases[l].data() == w2.bases[l].data(), "world generation not reproducible");
    }
    const ClientDataset d1 = gen_client_dataset(w1, 3, 50);
    const ClientDataset d2 = gen_client_dataset(w2, 3, 50);
    c.expect(d1.train.inputs.data() == d2.train.inputs.data(), "datasets not reproducible");
    c.expect(d1.train.size() == 40 && d1.val.size() == 5 && d1.test.size() == 5,
             "8:1:1 split sizes wrong");

    // heterogeneity dial: pairwise teacher distance grows with archetype scale
    double prev = -1.0;
    for (double scale : {0.02, 0.08, 0.2}) {
        WorldConfig c2 = cfg;
        c2.archetype_scale = scale;
        const World w = gen_world(c2);
        double dist = 0.0;
        int pairs = 0;
        for (int a = 0; a < c2.num_task_archetypes; ++a) {
            for (int b = a + 1; b < c2.num_task_archetypes; ++b) {
                for (std::size_t l = 0; l < w.bases.size(); ++l) {
                    dist += frobenius_norm(sub(w.archetype_deltas[a][l], w.archetype_deltas[b][l]));
                }
                ++pairs;
            }
        }
        dist /= pairs;
        c.expect(dist > prev, "teacher heterogeneity not increasing in archetype scale");
        prev = dist;
    }
}

void suite_federation_round(Check& c) {
    WorldConfig wcfg;
    wcfg.num_clients = 24;
    wcfg.num_task_archetypes = 4;
    wcfg.seed = 5;
    const World world = gen_world(wcfg);

    FedConfig fcfg;
    fcfg.strategy = Strategy::FlexLora;
    fcfg.distribution = ResourceDistribution::uniform();
    fcfg.participation_rate = 0.25;
    fcfg.max_rounds = 2;
    fcfg.zeroshot_pool = 4;
    fcfg.opt.epochs = 1;
    fcfg.seed = 5;

    FederationState state = init_federation(world, fcfg);
    for (int round = 0; round < 2; ++round) {
        const RoundReport r = run_round(state, round);
        // no client twice in a round
        for (std::size_t i = 1; i < r.participants.size(); ++i) {
            c.expect(r.participants[i] > r.participants[i - 1], "participant sampled twice");
        }
        // cost identity recomputable from profiles alone
        const auto shapes = world.cfg.layer_shapes();
        double base_params = 0.0;
        for (const LayerShape& s : shapes) base_params += static_cast<double>(s.out_dim) * s.in_dim;
        double cost = 0.0;
        for (int id : r.participants) {
            double ap = 0.0;
            for (std::size_t l = 0; l < shapes.size(); ++l) {
                ap += static_cast<double>(state.profiles[id].ranks[l]) *
                      (shapes[l].out_dim + shapes[l].in_dim);
            }
            cost += ap / base_params;
        }
        cost /= r.participants.size();
        c.expect(std::abs(cost - r.cost_per_round) <= 1e-12, "cost accounting identity violated");

        // recorded phi matches the truncation error of the fresh W_g
        for (const RoundReport::Phi& phi : r.phi) {
            const double expected = truncation_error(state.global_factors_svd[phi.layer], phi.rank);
            const double ref = std::max(expected, 1e-12);
            c.expect(std::abs(phi.value - expected) / ref <= 1e-9, "phi deviates from truncation error");
        }
    }

    // strategy-agnostic plumbing: point-mass distribution, identical seeds
    FedConfig naive_cfg = fcfg;
    naive_cfg.strategy = Strategy::Naive;
    naive_cfg.distribution = ResourceDistribution::point_mass(0);
    FedConfig flex_cfg = naive_cfg;
    flex_cfg.strategy = Strategy::FlexLora;
    FederationState sn = init_federation(world, naive_cfg);
    FederationState sf = init_federation(world, flex_cfg);
    const RoundReport rn = run_round(sn, 0);
    const RoundReport rf = run_round(sf, 0);
    c.expect(rn.participants == rf.participants, "participant sets differ across strategies");
}

}  // namespace

std::vector<SuiteResult> run_verification(bool inject_fault) {
    std::vector<SuiteResult> results;
    results.push_back(run_suite("lowrank.orthonormality_reconstruction", suite_svd_orthonormality));
    results.push_back(run_suite("lowrank.tail_formula", suite_svd_tail_formula));
    results.push_back(run_suite("lowrank.determinism", suite_svd_determinism));
    if (inject_fault) {
        testhooks::flip_decompose_sign.store(true);
    }
    results.push_back(run_suite("adapter.roundtrip", suite_adapter_roundtrip));
    testhooks::flip_decompose_sign.store(false);
    results.push_back(run_suite("aggregate.order_and_weights", suite_aggregate_order_and_weights));
    results.push_back(
        run_suite("aggregate.homogeneous_consistency", suite_aggregate_homogeneous_consistency));
    results.push_back(run_suite("aggregate.redistribution_fidelity", suite_redistribution_fidelity));
    results.push_back(run_suite("model.gradient_check", suite_gradient_check));
    results.push_back(run_suite("model.local_update", suite_local_update));
    results.push_back(run_suite("taskgen.reproducibility", suite_taskgen));
    results.push_back(run_suite("federation.round_invariants", suite_federation_round));
    return results;
}

}  // namespace flexlora
