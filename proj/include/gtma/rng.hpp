#pragma once

#include <array>
#include <cstdint>

#include "gtma/numeric.hpp"

namespace gtma {

// Deterministic xoshiro256** generator, seeded through splitmix64.
// Identical seeds yield identical streams on every platform; gaussians use
// Box-Muller (one sample per pair of uniforms, no cached state).
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;

    // Uniform double in [0, 1) with 53 mantissa bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;

    // Index in [0, n). n must be >= 1.
    std::size_t uniform_index(std::size_t n) noexcept;

    // Standard normal.
    double normal() noexcept;

    Vec64 normal_vec(std::size_t dim, double stddev = 1.0);
    Vec64 unit_vec(std::size_t dim);
    Mat64 normal_mat(std::size_t rows, std::size_t cols, double stddev = 1.0);

    // Orthonormal rows when rows <= cols, orthonormal columns otherwise.
    Mat64 orthonormal(std::size_t rows, std::size_t cols);

private:
    std::array<std::uint64_t, 4> state_;
};

}  // namespace gtma
