#pragma once

#include <atomic>

#include "flexlora/matrix.hpp"
#include "flexlora/svd.hpp"

namespace flexlora {

struct LayerShape {
    int out_dim = 0;  // d
    int in_dim = 0;   // p
};

/// Low-rank adapter for one layer: delta = scaling * up * down,
/// with up d x r and down r x p.
struct LoraAdapter {
    Matrix up;       // d x r
    Matrix down;     // r x p
    double scaling = 1.0;
    int rank = 0;

    LoraAdapter() = default;
    LoraAdapter(Matrix up_, Matrix down_, double scaling_);

    LayerShape shape() const { return {up.rows(), down.cols()}; }
};

/// Materializes the full-size delta s * up * down (d x p).
Matrix compose(const LoraAdapter& a);

/// Best rank-r approximation of w_g packed as an adapter:
/// up = U[:,:r] diag(sigma[:r]) / s, down = V[:,:r]^T.
LoraAdapter decompose(const Matrix& w_g, int r, double s);

/// Same, reusing an already-computed SVD of w_g.
LoraAdapter decompose(const SvdFactors& f, int r, double s);

namespace testhooks {
/// Verification-suite fault hook: flips the sign of `up` inside decompose.
extern std::atomic<bool> flip_decompose_sign;
}  // namespace testhooks

}  // namespace flexlora
