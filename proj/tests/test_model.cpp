#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "flexlora/model.hpp"

using namespace flexlora;

namespace {

ToyModel two_layer_model(std::uint64_t seed, int in, int hid, int out, int rank) {
    ToyModel m;
    m.layers.push_back({oracle::random_matrix(seed, hid, in, 0.3),
                        LoraAdapter(oracle::random_matrix(seed + 1, hid, rank, 0.2),
                                    oracle::random_matrix(seed + 2, rank, in, 0.2), 1.0)});
    m.layers.push_back({oracle::random_matrix(seed + 3, out, hid, 0.3),
                        LoraAdapter(oracle::random_matrix(seed + 4, out, rank, 0.2),
                                    oracle::random_matrix(seed + 5, rank, hid, 0.2), 1.0)});
    return m;
}

Batch random_batch(std::uint64_t seed, int n, int in, int out) {
    return Batch{oracle::random_matrix(seed, n, in), oracle::random_matrix(seed + 9, n, out)};
}

double total_loss(const ToyModel& m, const Batch& b, double l2) { return loss(m, b, l2); }

}  // namespace

TEST_CASE("loss on a hand-computed example") {
    // one layer, identity base, no adapter: prediction == input
    ToyModel m;
    m.layers.push_back({Matrix::identity(2), std::nullopt});
    Batch b{Matrix(1, 2), Matrix(1, 2)};
    b.inputs(0, 0) = 3.0;
    b.inputs(0, 1) = 4.0;
    // residual (3, 4): 0.5 * 25 = 12.5
    CHECK(loss(m, b) == doctest::Approx(12.5).epsilon(1e-14));
}

TEST_CASE("forward applies tanh between layers but not after the last") {
    ToyModel m;
    m.layers.push_back({Matrix::identity(1), std::nullopt});
    m.layers.push_back({Matrix::identity(1), std::nullopt});
    Matrix x(1, 1);
    x(0, 0) = 2.0;
    const Matrix y = forward(m, x);
    CHECK(y(0, 0) == doctest::Approx(std::tanh(2.0)).epsilon(1e-14));
}

TEST_CASE("gradient of a 1x1 linear adapter by hand") {
    // single layer, base 0, adapter up*down with up=u, down=v: pred = u*v*x
    ToyModel m;
    Matrix up(1, 1), down(1, 1);
    up(0, 0) = 2.0;
    down(0, 0) = 3.0;
    m.layers.push_back({Matrix(1, 1), LoraAdapter(up, down, 1.0)});
    Batch b{Matrix(1, 1), Matrix(1, 1)};
    b.inputs(0, 0) = 1.0;
    b.targets(0, 0) = 0.0;
    // pred = 6, residual 6; dL/dup = residual * down * x = 18, dL/ddown = 12
    const AdapterGrads g = grads(m, b);
    REQUIRE(g.layers[0].has_value());
    CHECK(g.layers[0]->first(0, 0) == doctest::Approx(18.0).epsilon(1e-12));
    CHECK(g.layers[0]->second(0, 0) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
    const double h = 1e-6;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ToyModel m = two_layer_model(seed * 100, 5, 4, 3, 2);
        const Batch b = random_batch(seed * 100 + 50, 7, 5, 3);
        const double l2 = 0.01;
        const AdapterGrads g = grads(m, b, l2);
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            REQUIRE(g.layers[l].has_value());
            auto check_block = [&](Matrix& param, const Matrix& grad) {
                for (int i = 0; i < param.rows(); ++i) {
                    for (int j = 0; j < param.cols(); ++j) {
                        const double orig = param(i, j);
                        param(i, j) = orig + h;
                        const double up_loss = total_loss(m, b, l2);
                        param(i, j) = orig - h;
                        const double dn_loss = total_loss(m, b, l2);
                        param(i, j) = orig;
                        const double fd = (up_loss - dn_loss) / (2.0 * h);
                        const double scale = std::max({std::abs(fd), std::abs(grad(i, j)), 1e-6});
                        CHECK(std::abs(fd - grad(i, j)) / scale < 1e-5);
                    }
                }
            };
            check_block(m.layers[l].adapter->up, g.layers[l]->first);
            check_block(m.layers[l].adapter->down, g.layers[l]->second);
        }
    }
}

TEST_CASE("local update with lr=0 returns the initial adapters") {
    const ToyModel m = two_layer_model(7, 5, 4, 3, 2);
    const Batch b = random_batch(77, 12, 5, 3);
    std::vector<std::optional<LoraAdapter>> init{m.layers[0].adapter, m.layers[1].adapter};
    OptimizerConfig opt;
    opt.learning_rate = 0.0;
    opt.epochs = 2;
    const LocalUpdateResult res = local_update(m, init, b, opt, 99);
    for (std::size_t l = 0; l < init.size(); ++l) {
        CHECK(res.adapters[l]->up.data() == init[l]->up.data());
        CHECK(res.adapters[l]->down.data() == init[l]->down.data());
    }
}

TEST_CASE("one SGD step on the full batch is definitional") {
    ToyModel m = two_layer_model(8, 4, 4, 2, 2);
    const Batch b = random_batch(88, 3, 4, 2);
    std::vector<std::optional<LoraAdapter>> init{m.layers[0].adapter, m.layers[1].adapter};
    OptimizerConfig opt;
    opt.kind = OptimizerKind::Sgd;
    opt.learning_rate = 0.05;
    opt.epochs = 1;
    opt.batch_size = 3;  // one step over everything
    const LocalUpdateResult res = local_update(m, init, b, opt, 5);

    // expected: theta - lr * grad on the (shuffled == identical) batch
    ToyModel with = m;
    const AdapterGrads g = grads(with, b);
    for (std::size_t l = 0; l < init.size(); ++l) {
        for (int i = 0; i < init[l]->up.rows(); ++i) {
            for (int j = 0; j < init[l]->up.cols(); ++j) {
                const double expect = init[l]->up(i, j) - 0.05 * g.layers[l]->first(i, j);
                CHECK(res.adapters[l]->up(i, j) == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("local update is deterministic in the seed") {
    const ToyModel m = two_layer_model(9, 5, 4, 3, 2);
    const Batch b = random_batch(99, 20, 5, 3);
    std::vector<std::optional<LoraAdapter>> init{m.layers[0].adapter, m.layers[1].adapter};
    OptimizerConfig opt;
    opt.kind = OptimizerKind::Adam;
    opt.learning_rate = 0.01;
    opt.epochs = 3;
    const LocalUpdateResult r1 = local_update(m, init, b, opt, 1234);
    const LocalUpdateResult r2 = local_update(m, init, b, opt, 1234);
    const LocalUpdateResult r3 = local_update(m, init, b, opt, 1235);
    CHECK(r1.adapters[0]->up.data() == r2.adapters[0]->up.data());
    CHECK(r1.final_train_loss == r2.final_train_loss);
    CHECK(r1.adapters[0]->up.data() != r3.adapters[0]->up.data());
}

TEST_CASE("local update decreases the loss on a learnable task") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ToyModel m = two_layer_model(seed * 11, 6, 5, 3, 3);
        // targets produced by a perturbed copy of the model: learnable
        ToyModel teacher = m;
        teacher.layers[0].adapter->up = scale(teacher.layers[0].adapter->up, 1.5);
        Batch b{oracle::random_matrix(seed * 11 + 5, 30, 6), Matrix(30, 3)};
        b.targets = forward(teacher, b.inputs);

        std::vector<std::optional<LoraAdapter>> init{m.layers[0].adapter, m.layers[1].adapter};
        const double before = loss(m, b);
        OptimizerConfig opt;
        opt.kind = OptimizerKind::Adam;
        opt.learning_rate = 0.02;
        opt.epochs = 5;
        const LocalUpdateResult res = local_update(m, init, b, opt, seed);
        ToyModel after = m;
        after.layers[0].adapter = res.adapters[0];
        after.layers[1].adapter = res.adapters[1];
        CHECK(loss(after, b) < before);
    }
}

TEST_CASE("frozen bases stay untouched by local updates") {
    ToyModel m = two_layer_model(13, 5, 4, 3, 2);
    const Matrix base0 = m.layers[0].base;
    const Batch b = random_batch(14, 16, 5, 3);
    std::vector<std::optional<LoraAdapter>> init{m.layers[0].adapter, m.layers[1].adapter};
    OptimizerConfig opt;
    opt.epochs = 2;
    (void)local_update(m, init, b, opt, 4);
    CHECK(m.layers[0].base.data() == base0.data());
}

TEST_CASE("empty batches are rejected") {
    const ToyModel m = two_layer_model(15, 4, 4, 2, 2);
    const Batch empty{Matrix(), Matrix()};
    CHECK_THROWS_AS(loss(m, empty), EmptyBatch);
}
