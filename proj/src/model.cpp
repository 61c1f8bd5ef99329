#include "flexlora/model.hpp"

#include <cmath>
#include <numeric>

namespace flexlora {

namespace {

Matrix effective_weight(const ToyModel::Layer& layer) {
    if (layer.adapter) {
        return add(layer.base, compose(*layer.adapter));
    }
    return layer.base;
}

Matrix tanh_elem(const Matrix& z) {
    Matrix out = z;
    for (double& v : out.data()) v = std::tanh(v);
    return out;
}

struct ForwardCache {
    std::vector<Matrix> layer_inputs;  // X_l, input to layer l
    Matrix predictions;                // pre-activation output of the last layer
};

ForwardCache forward_cached(const ToyModel& model, const Matrix& inputs) {
    ForwardCache cache;
    Matrix x = inputs;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Matrix w = effective_weight(model.layers[l]);
        if (x.cols() != w.cols()) {
            throw ShapeMismatch("forward: input width does not match layer in_dim");
        }
        cache.layer_inputs.push_back(x);
        Matrix z = matmul(x, transpose(w));
        if (l + 1 < model.layers.size()) {
            x = tanh_elem(z);
        } else {
            cache.predictions = std::move(z);
        }
    }
    return cache;
}

double adapter_penalty_term(const ToyModel& model, double l2) {
    if (l2 == 0.0) return 0.0;
    double s = 0.0;
    for (const auto& layer : model.layers) {
        if (!layer.adapter) continue;
        for (double v : layer.adapter->up.data()) s += v * v;
        for (double v : layer.adapter->down.data()) s += v * v;
    }
    return l2 * s;
}

}  // namespace

Matrix forward(const ToyModel& model, const Matrix& inputs) {
    return forward_cached(model, inputs).predictions;
}

double loss(const ToyModel& model, const Batch& batch, double l2_adapter_penalty) {
    if (batch.size() < 1) {
        throw EmptyBatch("loss: empty batch");
    }
    const Matrix pred = forward(model, batch.inputs);
    if (!pred.same_shape(batch.targets)) {
        throw ShapeMismatch("loss: prediction/target shapes differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const double r = pred.data()[i] - batch.targets.data()[i];
        s += r * r;
    }
    return 0.5 * s / batch.size() + adapter_penalty_term(model, l2_adapter_penalty);
}

AdapterGrads grads(const ToyModel& model, const Batch& batch, double l2_adapter_penalty) {
    if (batch.size() < 1) {
        throw EmptyBatch("grads: empty batch");
    }
    const ForwardCache cache = forward_cached(model, batch.inputs);
    if (!cache.predictions.same_shape(batch.targets)) {
        throw ShapeMismatch("grads: prediction/target shapes differ");
    }
    const int n = batch.size();
    const int num_layers = static_cast<int>(model.layers.size());

    // dZ for the last layer; no activation after it.
    Matrix dz = sub(cache.predictions, batch.targets);
    for (double& v : dz.data()) v /= n;

    AdapterGrads out;
    out.layers.resize(num_layers);
    for (int l = num_layers - 1; l >= 0; --l) {
        const ToyModel::Layer& layer = model.layers[l];
        const Matrix& x = cache.layer_inputs[l];
        if (layer.adapter) {
            const LoraAdapter& a = *layer.adapter;
            const Matrix dw = matmul(transpose(dz), x);  // d x p
            Matrix d_up = scale(matmul(dw, transpose(a.down)), a.scaling);
            Matrix d_down = scale(matmul(transpose(a.up), dw), a.scaling);
            if (l2_adapter_penalty != 0.0) {
                d_up = add(d_up, scale(a.up, 2.0 * l2_adapter_penalty));
                d_down = add(d_down, scale(a.down, 2.0 * l2_adapter_penalty));
            }
            out.layers[l] = std::make_pair(std::move(d_up), std::move(d_down));
        }
        if (l > 0) {
            const Matrix w = effective_weight(layer);
            Matrix dx = matmul(dz, w);  // n x p
            // x = tanh(z_{l-1}); d tanh = 1 - x^2
            for (std::size_t i = 0; i < dx.data().size(); ++i) {
                const double t = x.data()[i];
                dx.data()[i] *= 1.0 - t * t;
            }
            dz = std::move(dx);
        }
    }
    return out;
}

namespace {

struct AdamState {
    Matrix m_up, v_up, m_down, v_down;
};

void adam_step(Matrix& param, Matrix& m, Matrix& v, const Matrix& g, const OptimizerConfig& opt,
               double lr, int t) {
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < param.data().size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = opt.beta1 * m.data()[i] + (1.0 - opt.beta1) * gi;
        v.data()[i] = opt.beta2 * v.data()[i] + (1.0 - opt.beta2) * gi * gi;
        const double mhat = m.data()[i] / bc1;
        const double vhat = v.data()[i] / bc2;
        param.data()[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
    }
}

void sgd_step(Matrix& param, const Matrix& g, double lr) {
    for (std::size_t i = 0; i < param.data().size(); ++i) {
        param.data()[i] -= lr * g.data()[i];
    }
}

Batch take_rows(const Batch& dataset, const std::vector<int>& idx, int begin, int end) {
    Matrix x(end - begin, dataset.inputs.cols());
    Matrix y(end - begin, dataset.targets.cols());
    for (int r = begin; r < end; ++r) {
        for (int c = 0; c < x.cols(); ++c) x(r - begin, c) = dataset.inputs(idx[r], c);
        for (int c = 0; c < y.cols(); ++c) y(r - begin, c) = dataset.targets(idx[r], c);
    }
    return Batch{std::move(x), std::move(y)};
}

}  // namespace

LocalUpdateResult local_update(const ToyModel& model,
                               const std::vector<std::optional<LoraAdapter>>& adapters_init,
                               const Batch& dataset, const OptimizerConfig& opt, std::uint64_t seed) {
    if (dataset.size() < 1) {
        throw EmptyBatch("local_update: empty dataset");
    }
    if (adapters_init.size() != model.layers.size()) {
        throw ShapeMismatch("local_update: one adapter slot per layer required");
    }

    ToyModel work = model;
    for (std::size_t l = 0; l < work.layers.size(); ++l) {
        work.layers[l].adapter = adapters_init[l];
    }

    std::vector<AdamState> adam(work.layers.size());
    for (std::size_t l = 0; l < work.layers.size(); ++l) {
        if (work.layers[l].adapter) {
            const LoraAdapter& a = *work.layers[l].adapter;
            adam[l] = AdamState{Matrix(a.up.rows(), a.up.cols()), Matrix(a.up.rows(), a.up.cols()),
                                Matrix(a.down.rows(), a.down.cols()), Matrix(a.down.rows(), a.down.cols())};
        }
    }

    Rng rng(seed);
    const int n = dataset.size();
    const int bs = opt.batch_size;
    const int batches_per_epoch = (n + bs - 1) / bs;
    const long long total_steps = static_cast<long long>(opt.epochs) * batches_per_epoch;

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    long long step = 0;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        rng.shuffle(idx);
        for (int b = 0; b < batches_per_epoch; ++b) {
            const int begin = b * bs;
            const int end = std::min(n, begin + bs);
            const Batch batch = take_rows(dataset, idx, begin, end);
            const AdapterGrads g = grads(work, batch, opt.l2_adapter_penalty);
            const double lr = opt.lr_linear_decay
                                  ? opt.learning_rate * (1.0 - static_cast<double>(step) / total_steps)
                                  : opt.learning_rate;
            ++step;
            for (std::size_t l = 0; l < work.layers.size(); ++l) {
                if (!g.layers[l]) continue;
                LoraAdapter& a = *work.layers[l].adapter;
                const auto& [d_up, d_down] = *g.layers[l];
                if (opt.kind == OptimizerKind::Adam) {
                    adam_step(a.up, adam[l].m_up, adam[l].v_up, d_up, opt, lr, static_cast<int>(step));
                    adam_step(a.down, adam[l].m_down, adam[l].v_down, d_down, opt, lr, static_cast<int>(step));
                } else {
                    sgd_step(a.up, d_up, lr);
                    sgd_step(a.down, d_down, lr);
                }
            }
        }
    }

    LocalUpdateResult result;
    result.final_train_loss = loss(work, dataset, opt.l2_adapter_penalty);
    for (auto& layer : work.layers) {
        result.adapters.push_back(std::move(layer.adapter));
    }
    return result;
}

}  // namespace flexlora
