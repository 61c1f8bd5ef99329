#include "flexlora/adapter.hpp"

#include <algorithm>

namespace flexlora {

namespace testhooks {
std::atomic<bool> flip_decompose_sign{false};
}

LoraAdapter::LoraAdapter(Matrix up_, Matrix down_, double scaling_)
    : up(std::move(up_)), down(std::move(down_)), scaling(scaling_), rank(up.cols()) {
    if (up.cols() != down.rows()) {
        throw ShapeMismatch("adapter: up.cols must equal down.rows");
    }
    if (scaling <= 0.0) {
        throw InvalidMatrix("adapter: scaling must be positive");
    }
    if (rank > std::min(up.rows(), down.cols())) {
        throw RankOutOfRange("adapter: rank exceeds min(d, p)");
    }
}

Matrix compose(const LoraAdapter& a) {
    return scale(matmul(a.up, a.down), a.scaling);
}

LoraAdapter decompose(const SvdFactors& f, int r, double s) {
    if (s <= 0.0) {
        throw InvalidMatrix("decompose: scaling must be positive");
    }
    if (r < 1 || r > f.k()) {
        throw RankOutOfRange("decompose: rank out of [1, k]");
    }
    const int d = f.u.rows();
    const int p = f.v.rows();
    Matrix up(d, r);
    Matrix down(r, p);
    for (int c = 0; c < r; ++c) {
        const double col_scale = f.sigma[c] / s;
        for (int i = 0; i < d; ++i) {
            up(i, c) = f.u(i, c) * col_scale;
        }
        for (int j = 0; j < p; ++j) {
            down(c, j) = f.v(j, c);
        }
    }
    if (testhooks::flip_decompose_sign.load(std::memory_order_relaxed)) {
        up = scale(up, -1.0);
    }
    return LoraAdapter(std::move(up), std::move(down), s);
}

LoraAdapter decompose(const Matrix& w_g, int r, double s) {
    return decompose(svd(w_g), r, s);
}

}  // namespace flexlora
