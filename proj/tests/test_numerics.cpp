#include "countlab/numerics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace countlab {
namespace {

// Independent oracle: plain i-j-k triple loop.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    }
    return c;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m.at(i, j) = d(rng);
    }
    return m;
}

TEST(Matmul, IdentityTimesX) {
    Matrix id(2, 2);
    id.at(0, 0) = id.at(1, 1) = 1.0;
    Matrix x(2, 2);
    x.at(0, 0) = 3.0;
    x.at(0, 1) = -2.0;
    x.at(1, 0) = 0.5;
    x.at(1, 1) = 7.0;
    EXPECT_EQ(matmul(id, x), x);
}

TEST(Matmul, HandArithmetic) {
    Matrix a(2, 2);
    a.at(0, 0) = 1;
    a.at(0, 1) = 2;
    a.at(1, 0) = 3;
    a.at(1, 1) = 4;
    Matrix b(2, 1);
    b.at(0, 0) = 1;
    b.at(1, 0) = 1;
    Matrix c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c.at(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(c.at(1, 0), 7.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
    std::mt19937_64 rng(7);
    Matrix a = random_matrix(5, 7, rng);
    Matrix b = random_matrix(7, 3, rng);
    Matrix c = matmul(a, b);
    Matrix ref = matmul_oracle(a, b);
    for (int i = 0; i < c.rows(); ++i) {
        for (int j = 0; j < c.cols(); ++j) {
            EXPECT_NEAR(c.at(i, j), ref.at(i, j), 1e-12);
        }
    }
}

TEST(Matmul, OracleAgreementUpTo64) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 64);
        const int k = 1 + static_cast<int>(rng() % 64);
        const int n = 1 + static_cast<int>(rng() % 64);
        Matrix a = random_matrix(m, k, rng);
        Matrix b = random_matrix(k, n, rng);
        Matrix c = matmul(a, b);
        Matrix ref = matmul_oracle(a, b);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double scale = std::max(1.0, std::abs(ref.at(i, j)));
                EXPECT_LE(std::abs(c.at(i, j) - ref.at(i, j)) / scale, 1e-12);
            }
        }
    }
}

TEST(Matmul, DimensionMismatchThrows) {
    Matrix a(2, 3), b(2, 2);
    EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(RowSoftmax, ZerosGiveUniform) {
    Matrix m(1, 4);
    Matrix s = row_softmax(m);
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(s.at(0, j), 0.25);
}

TEST(RowSoftmax, LargeEqualEntriesStable) {
    Matrix m(1, 2);
    m.at(0, 0) = 1000.0;
    m.at(0, 1) = 1000.0;
    Matrix s = row_softmax(m);
    EXPECT_DOUBLE_EQ(s.at(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s.at(0, 1), 0.5);
}

TEST(RowSoftmax, ClosedForm) {
    Matrix m(1, 2);
    m.at(0, 0) = 0.0;
    m.at(0, 1) = std::log(3.0);
    Matrix s = row_softmax(m);
    EXPECT_NEAR(s.at(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(s.at(0, 1), 0.75, 1e-15);
}

TEST(RowSoftmax, MaskedEntriesExactlyZeroRowsSumToOne) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 6);
        const int cols = 2 + static_cast<int>(rng() % 10);
        Matrix m = random_matrix(rows, cols, rng);
        Matrix mask(rows, cols);
        for (int i = 0; i < rows; ++i) {
            const int keep = static_cast<int>(rng() % cols);
            for (int j = 0; j < cols; ++j) {
                mask.at(i, j) = (j == keep || rng() % 2 == 0) ? 1.0 : 0.0;
            }
        }
        Matrix s = row_softmax(m, &mask);
        for (int i = 0; i < rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                if (mask.at(i, j) == 0.0) {
                    EXPECT_EQ(s.at(i, j), 0.0);
                }
                sum += s.at(i, j);
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(RowSoftmax, FullyMaskedRowThrows) {
    Matrix m(1, 3);
    Matrix mask(1, 3);  // all zero
    EXPECT_THROW(row_softmax(m, &mask), DegenerateRowError);
}

TEST(ArgmaxWithMargin, Basic) {
    std::vector<double> v = {0.1, 0.9, 0.3};
    auto [idx, margin] = argmax_with_margin(v);
    EXPECT_EQ(idx, 1);
    EXPECT_NEAR(margin, 0.6, 1e-15);
}

TEST(ArgmaxWithMargin, TieBreaksLow) {
    std::vector<double> v = {0.5, 0.5};
    auto [idx, margin] = argmax_with_margin(v);
    EXPECT_EQ(idx, 0);
    EXPECT_DOUBLE_EQ(margin, 0.0);
}

TEST(ArgmaxWithMargin, LengthCheck) {
    std::vector<double> v = {1.0};
    EXPECT_THROW(argmax_with_margin(v), ShapeError);
}

// Permutation consistency: permuting the vector permutes the returned index
// (modulo the tie-break rule, so entries are kept distinct here).
TEST(ArgmaxWithMargin, PermutationConsistent) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 12);
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) v[i] = static_cast<double>(i) + (rng() % 1000) * 1e-6;
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pv(n);
        for (int i = 0; i < n; ++i) pv[i] = v[perm[i]];
        auto [i0, m0] = argmax_with_margin(v);
        auto [i1, m1] = argmax_with_margin(pv);
        EXPECT_EQ(perm[i1], i0);
        EXPECT_DOUBLE_EQ(m0, m1);
    }
}

}  // namespace
}  // namespace countlab
