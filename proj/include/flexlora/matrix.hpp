#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flexlora/errors.hpp"

namespace flexlora {

/// Dense row-major matrix of doubles. The universal carrier for weights,
/// adapters, and factors. Entries are validated finite on construction
/// from external data; in-place writes via operator() are unchecked.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);  // zero-filled
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix scale(const Matrix& a, double c);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);

/// Weighted sum reduced in input order (determinism contract).
Matrix weighted_sum(std::span<const Matrix> mats, std::span<const double> weights);

double frobenius_norm(const Matrix& a);

}  // namespace flexlora
