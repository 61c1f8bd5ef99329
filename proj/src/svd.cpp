#include "flexlora/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flexlora {

namespace {

// Appends to `factor` (m x total columns, first `placed` filled) an
// orthonormal column for a zero singular value. Scans canonical basis
// vectors in index order and takes the first whose residual after
// orthogonalization is non-degenerate.
void complete_null_column(Matrix& factor, int placed, int dest_col) {
    const int m = factor.rows();
    const double accept = 0.5 / std::sqrt(static_cast<double>(m));
    for (int t = 0; t < m; ++t) {
        std::vector<double> cand(m, 0.0);
        cand[t] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (int c = 0; c < placed; ++c) {
                double dot = 0.0;
                for (int i = 0; i < m; ++i) dot += cand[i] * factor(i, c);
                for (int i = 0; i < m; ++i) cand[i] -= dot * factor(i, c);
            }
        }
        double norm = 0.0;
        for (double v : cand) norm += v * v;
        norm = std::sqrt(norm);
        if (norm >= accept) {
            for (int i = 0; i < m; ++i) factor(i, dest_col) = cand[i] / norm;
            return;
        }
    }
    throw InvalidMatrix("svd: failed to complete orthonormal basis");
}

// One-sided Jacobi on a (m x n) with m >= n. Orthogonalizes the columns of
// a in place while accumulating the rotations into v (n x n).
void hestenes_sweeps(Matrix& a, Matrix& v, double fro) {
    const int m = a.rows();
    const int n = a.cols();
    const double off_tol = 1e-12 * fro * fro;
    const double rel_tol = 1e-13;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double max_rel = 0.0;
        for (int i = 0; i < n - 1; ++i) {
            for (int j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int r = 0; r < m; ++r) {
                    alpha += a(r, i) * a(r, i);
                    beta += a(r, j) * a(r, j);
                    gamma += a(r, i) * a(r, j);
                }
                off += gamma * gamma;
                if (alpha <= 0.0 || beta <= 0.0 || gamma == 0.0) continue;
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                max_rel = std::max(max_rel, rel);
                if (rel <= 1e-15) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < m; ++r) {
                    const double ai = a(r, i), aj = a(r, j);
                    a(r, i) = c * ai - s * aj;
                    a(r, j) = s * ai + c * aj;
                }
                for (int r = 0; r < n; ++r) {
                    const double vi = v(r, i), vj = v(r, j);
                    v(r, i) = c * vi - s * vj;
                    v(r, j) = s * vi + c * vj;
                }
            }
        }
        if (std::sqrt(off) <= off_tol && max_rel <= rel_tol) break;
    }
}

// SVD for m >= n: w = u diag(sigma) v^T with u m x n, v n x n.
SvdFactors svd_tall(const Matrix& w) {
    const int m = w.rows();
    const int n = w.cols();
    Matrix a = w;
    Matrix v = Matrix::identity(n);
    const double fro = frobenius_norm(w);
    if (fro > 0.0) {
        hestenes_sweeps(a, v, fro);
    }

    std::vector<double> norms(n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int r = 0; r < m; ++r) s += a(r, j) * a(r, j);
        norms[j] = std::sqrt(s);
    }
    // Singular values below rounding level are clamped to exact zero.
    const double zero_tol = 1e-14 * fro;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return norms[x] > norms[y]; });

    SvdFactors f;
    f.u = Matrix(m, n);
    f.v = Matrix(n, n);
    f.sigma.resize(n);

    int placed = 0;
    for (int col = 0; col < n; ++col) {
        const int src = order[col];
        const double s = norms[src] > zero_tol ? norms[src] : 0.0;
        f.sigma[col] = s;
        for (int r = 0; r < n; ++r) f.v(r, col) = v(r, src);
        if (s > 0.0) {
            for (int r = 0; r < m; ++r) f.u(r, col) = a(r, src) / norms[src];
            ++placed;
        }
    }
    // Fill left-singular vectors for zero singular values.
    for (int col = placed; col < n; ++col) {
        complete_null_column(f.u, col, col);
    }

    // Sign convention: first nonzero entry of each u-column non-negative.
    for (int col = 0; col < n; ++col) {
        double lead = 0.0;
        for (int r = 0; r < m; ++r) {
            if (f.u(r, col) != 0.0) {
                lead = f.u(r, col);
                break;
            }
        }
        if (lead < 0.0) {
            for (int r = 0; r < m; ++r) f.u(r, col) = -f.u(r, col);
            for (int r = 0; r < n; ++r) f.v(r, col) = -f.v(r, col);
        }
    }
    return f;
}

}  // namespace

SvdFactors svd(const Matrix& w) {
    if (w.rows() <= 0 || w.cols() <= 0) {
        throw InvalidMatrix("svd: empty matrix");
    }
    if (!w.all_finite()) {
        throw InvalidMatrix("svd: non-finite entries");
    }
    if (w.rows() >= w.cols()) {
        return svd_tall(w);
    }
    // Work on the transpose and swap the factor roles; the sign convention
    // is then re-applied on the u side.
    SvdFactors t = svd_tall(transpose(w));
    SvdFactors f;
    f.u = std::move(t.v);
    f.sigma = std::move(t.sigma);
    f.v = std::move(t.u);
    for (int col = 0; col < f.k(); ++col) {
        double lead = 0.0;
        for (int r = 0; r < f.u.rows(); ++r) {
            if (f.u(r, col) != 0.0) {
                lead = f.u(r, col);
                break;
            }
        }
        if (lead < 0.0) {
            for (int r = 0; r < f.u.rows(); ++r) f.u(r, col) = -f.u(r, col);
            for (int r = 0; r < f.v.rows(); ++r) f.v(r, col) = -f.v(r, col);
        }
    }
    return f;
}

Matrix truncate(const SvdFactors& f, int r) {
    if (r < 1 || r > f.k()) {
        throw RankOutOfRange("truncate: rank out of [1, k]");
    }
    const int d = f.u.rows();
    const int p = f.v.rows();
    Matrix out(d, p);
    for (int c = 0; c < r; ++c) {
        const double s = f.sigma[c];
        if (s == 0.0) continue;
        for (int i = 0; i < d; ++i) {
            const double us = f.u(i, c) * s;
            for (int j = 0; j < p; ++j) {
                out(i, j) += us * f.v(j, c);
            }
        }
    }
    return out;
}

double truncation_error(const SvdFactors& f, int r) {
    if (r < 1 || r > f.k()) {
        throw RankOutOfRange("truncation_error: rank out of [1, k]");
    }
    // summed smallest-first for accuracy
    double tail = 0.0;
    for (int j = f.k() - 1; j >= r; --j) {
        tail += f.sigma[j] * f.sigma[j];
    }
    return std::sqrt(tail);
}

}  // namespace flexlora
