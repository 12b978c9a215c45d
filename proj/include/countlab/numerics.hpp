// Minimal dense linear algebra and stable nonlinearities for the inference
// engine. 64-bit floats throughout; row-major storage; no external math deps.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace countlab {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateRowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major matrix of doubles. Value semantics; cheap to move.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) {
            throw ShapeError("Matrix: negative dimension");
        }
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

    std::span<double> row_span(int r) { return {row(r), static_cast<size_t>(cols_)}; }
    std::span<const double> row_span(int r) const { return {row(r), static_cast<size_t>(cols_)}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool all_zero() const {
        for (double v : data_) {
            if (v != 0.0) return false;
        }
        return true;
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B with 64-bit accumulation. i-k-j loop order so the inner loop
// streams contiguous rows of B and C.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    }
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols(); ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

// Row-wise softmax with max-subtraction. Entries masked out (mask value 0)
// or equal to -inf are exactly 0 in the output; surviving entries of each
// row sum to 1. A row with no surviving entry is degenerate.
inline Matrix row_softmax(const Matrix& m, const Matrix* mask = nullptr) {
    if (mask != nullptr && (mask->rows() != m.rows() || mask->cols() != m.cols())) {
        throw ShapeError("row_softmax: mask shape mismatch");
    }
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        const double* src = m.row(i);
        double* dst = out.row(i);
        double mx = kNegInf;
        for (int j = 0; j < m.cols(); ++j) {
            const bool keep = (mask == nullptr || mask->at(i, j) != 0.0);
            if (keep && src[j] > mx) mx = src[j];
        }
        if (mx == kNegInf) {
            throw DegenerateRowError("row_softmax: row " + std::to_string(i) +
                                     " has no unmasked finite entry");
        }
        double sum = 0.0;
        for (int j = 0; j < m.cols(); ++j) {
            const bool keep = (mask == nullptr || mask->at(i, j) != 0.0);
            const double e = keep ? std::exp(src[j] - mx) : 0.0;
            dst[j] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < m.cols(); ++j) {
            if (dst[j] != 0.0) dst[j] *= inv;
        }
    }
    return out;
}

// Index of the maximum and the gap to the runner-up. Ties break toward the
// lower index so downstream decoding is deterministic.
inline std::pair<int, double> argmax_with_margin(std::span<const double> v) {
    if (v.size() < 2) {
        throw ShapeError("argmax_with_margin: need at least 2 entries");
    }
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = static_cast<int>(i);
    }
    double second = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < v.size(); ++i) {
        if (static_cast<int>(i) == best) continue;
        if (v[i] > second) second = v[i];
    }
    return {best, v[best] - second};
}

}  // namespace countlab
