#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gtma/errors.hpp"

namespace gtma {

// Zero-direction detection threshold shared by all normalizing operations.
inline constexpr double kNormEpsilon = 1e-12;

// Default central-difference step for the gradient oracle.
inline constexpr double kFiniteDiffStep = 1e-5;

// Dense 64-bit float vector. Construction rejects empty and non-finite
// input; instances are immutable values and safe to share across threads.
class Vec64 {
public:
    explicit Vec64(std::vector<double> values);
    static Vec64 zeros(std::size_t dim);

    std::size_t dim() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> values_;
};

// Dense row-major 64-bit float matrix with the same finiteness contract.
class Mat64 {
public:
    Mat64(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Mat64 zeros(std::size_t rows, std::size_t cols);
    static Mat64 identity(std::size_t n);
    static Mat64 from_rows(const std::vector<Vec64>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double at(std::size_t r, std::size_t c) const noexcept {
        return values_[r * cols_ + c];
    }
    Vec64 row(std::size_t r) const;
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
};

double dot(const Vec64& a, const Vec64& b);
double norm(const Vec64& v);
Vec64 add(const Vec64& a, const Vec64& b);
Vec64 sub(const Vec64& a, const Vec64& b);
Vec64 scale(const Vec64& v, double s);

// m (r x c) * v (c) -> r
Vec64 matvec(const Mat64& m, const Vec64& v);
// m^T (c x r) * v (r) -> c
Vec64 matvec_transposed(const Mat64& m, const Vec64& v);

// Unit-norm copy of v. Throws ZeroVectorError when ||v|| <= kNormEpsilon.
Vec64 l2_normalize(const Vec64& v);

// Cosine similarity, clamped into [-1, 1]. Throws ZeroVectorError when
// either operand is degenerate and DimMismatchError on unequal dims.
double cosine_sim(const Vec64& a, const Vec64& b);

// Numerically stable softmax (max subtraction); output sums to 1.
Vec64 softmax(const Vec64& scores);

// sum_i softmax(q . k_i / sqrt(d_k))_i * value_i. Keys and values must have
// the same row count; query dim must equal the key column count d_k.
Vec64 scaled_dot_attention(const Vec64& query, const Mat64& keys,
                           const Mat64& values);

// Central-difference gradient oracle: (f(z + h e_i) - f(z - h e_i)) / 2h.
Vec64 finite_diff_gradient(const std::function<double(const Vec64&)>& f,
                           const Vec64& z, double h = kFiniteDiffStep);

}  // namespace gtma
