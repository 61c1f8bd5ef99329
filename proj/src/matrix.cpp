#include "flexlora/matrix.hpp"

#include <cmath>
#include <utility>

namespace flexlora {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
        throw InvalidMatrix("matrix dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows <= 0 || cols <= 0) {
        throw InvalidMatrix("matrix dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw InvalidMatrix("data length does not match rows*cols");
    }
    if (!all_finite()) {
        throw InvalidMatrix("matrix entries must be finite");
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeMismatch("matmul: inner dimensions differ");
    }
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (double& v : out.data()) {
        v *= c;
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeMismatch("add: shapes differ");
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeMismatch("sub: shapes differ");
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] -= b.data()[i];
    }
    return out;
}

Matrix weighted_sum(std::span<const Matrix> mats, std::span<const double> weights) {
    if (mats.empty() || mats.size() != weights.size()) {
        throw ShapeMismatch("weighted_sum: need one weight per matrix");
    }
    for (const Matrix& m : mats) {
        if (!m.same_shape(mats[0])) {
            throw ShapeMismatch("weighted_sum: shapes differ");
        }
    }
    Matrix out(mats[0].rows(), mats[0].cols());
    for (std::size_t k = 0; k < mats.size(); ++k) {
        const double w = weights[k];
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            out.data()[i] += w * mats[k].data()[i];
        }
    }
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace flexlora
