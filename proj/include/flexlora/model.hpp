#pragma once

#include <optional>
#include <vector>

#include "flexlora/adapter.hpp"
#include "flexlora/rng.hpp"

namespace flexlora {

/// Frozen linear layers with tanh between them (none after the last),
/// each optionally carrying a LoRA adapter. Bases are d x p (out x in);
/// inputs are row-major batches (samples x features).
struct ToyModel {
    struct Layer {
        Matrix base;  // frozen during FL
        std::optional<LoraAdapter> adapter;
    };
    std::vector<Layer> layers;
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 1;
    int batch_size = 4;
    double l2_adapter_penalty = 0.0;
    bool lr_linear_decay = false;  // linear decay to 0 over the local steps
};

struct Batch {
    Matrix inputs;   // n x p0
    Matrix targets;  // n x d_last

    int size() const { return inputs.rows(); }
};

/// Per-layer adapter gradients; entries are set only for layers that carry
/// an adapter.
struct AdapterGrads {
    std::vector<std::optional<std::pair<Matrix, Matrix>>> layers;  // (dUp, dDown)
};

Matrix forward(const ToyModel& model, const Matrix& inputs);

/// Mean over samples of 0.5 * ||prediction - target||^2, plus the optional
/// L2 penalty on adapter entries.
double loss(const ToyModel& model, const Batch& batch, double l2_adapter_penalty = 0.0);

AdapterGrads grads(const ToyModel& model, const Batch& batch, double l2_adapter_penalty = 0.0);

struct LocalUpdateResult {
    std::vector<std::optional<LoraAdapter>> adapters;
    double final_train_loss = 0.0;
};

/// Local training: epochs x ceil(n / batch_size) optimizer steps over
/// seeded shuffles. Optimizer state starts from zero each call; bases are
/// untouched.
LocalUpdateResult local_update(const ToyModel& model,
                               const std::vector<std::optional<LoraAdapter>>& adapters_init,
                               const Batch& dataset, const OptimizerConfig& opt, std::uint64_t seed);

}  // namespace flexlora
