#include "gtma/rng.hpp"

#include <cmath>

namespace gtma {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Rng::Rng(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::uniform_index(std::size_t n) noexcept {
    return static_cast<std::size_t>(next_u64() % n);
}

double Rng::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Vec64 Rng::normal_vec(std::size_t dim, double stddev) {
    std::vector<double> v(dim);
    for (double& x : v) x = stddev * normal();
    return Vec64(std::move(v));
}

Vec64 Rng::unit_vec(std::size_t dim) {
    for (;;) {
        const Vec64 v = normal_vec(dim);
        if (norm(v) > 1e-6) return l2_normalize(v);
    }
}

Mat64 Rng::normal_mat(std::size_t rows, std::size_t cols, double stddev) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = stddev * normal();
    return Mat64(rows, cols, std::move(v));
}

Mat64 Rng::orthonormal(std::size_t rows, std::size_t cols) {
    if (rows > cols) {
        const Mat64 t = orthonormal(cols, rows);
        std::vector<double> v(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = t.at(c, r);
        }
        return Mat64(rows, cols, std::move(v));
    }
    // Modified Gram-Schmidt over gaussian draws; redraw on near-dependence.
    std::vector<Vec64> basis;
    basis.reserve(rows);
    while (basis.size() < rows) {
        std::vector<double> v = normal_vec(cols).values();
        for (const Vec64& q : basis) {
            double proj = 0.0;
            for (std::size_t i = 0; i < cols; ++i) proj += v[i] * q[i];
            for (std::size_t i = 0; i < cols; ++i) v[i] -= proj * q[i];
        }
        const Vec64 candidate{std::vector<double>(v)};
        if (norm(candidate) < 1e-6) continue;
        basis.push_back(l2_normalize(candidate));
    }
    return Mat64::from_rows(basis);
}

}  // namespace gtma
