#pragma once

#include <vector>

#include "flexlora/matrix.hpp"

namespace flexlora {

/// SVD of a d x p matrix W = U diag(sigma) V^T with k = min(d, p).
/// u is d x k, v is p x k, sigma non-negative and non-increasing.
struct SvdFactors {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;

    int k() const { return static_cast<int>(sigma.size()); }
};

/// One-sided Jacobi SVD. Deterministic: fixed sweep order, stable ordering
/// of equal singular values by original column index, and the first nonzero
/// entry of each left-singular vector forced non-negative.
SvdFactors svd(const Matrix& w);

/// Top-r reconstruction U[:,:r] diag(sigma[:r]) V[:,:r]^T.
Matrix truncate(const SvdFactors& f, int r);

/// Tail norm sqrt(sum_{j>r} sigma_j^2) == ||truncate(f,r) - W||_F.
double truncation_error(const SvdFactors& f, int r);

}  // namespace flexlora
