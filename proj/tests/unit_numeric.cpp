#include <cmath>
#include <limits>

#include <doctest.h>

#include "gtma/numeric.hpp"
#include "gtma/rng.hpp"

using namespace gtma;

TEST_CASE("Vec64 construction guards") {
    CHECK_THROWS_AS(Vec64(std::vector<double>{}), DimMismatchError);
    CHECK_THROWS_AS(Vec64({1.0, std::numeric_limits<double>::quiet_NaN()}),
                    NonFiniteError);
    CHECK_THROWS_AS(Vec64({std::numeric_limits<double>::infinity()}),
                    NonFiniteError);
    const Vec64 v({1.0, 2.0});
    CHECK(v.dim() == 2);
    CHECK(v[1] == 2.0);
}

TEST_CASE("Mat64 construction guards") {
    CHECK_THROWS_AS(Mat64(2, 2, {1.0, 2.0, 3.0}), DimMismatchError);
    CHECK_THROWS_AS(Mat64(0, 1, {}), DimMismatchError);
    const Mat64 m = Mat64::identity(3);
    CHECK(m.at(1, 1) == 1.0);
    CHECK(m.at(0, 2) == 0.0);
    const Vec64 r = m.row(2);
    CHECK(r[2] == 1.0);
}

TEST_CASE("l2_normalize") {
    SUBCASE("3-4-5 triangle") {
        const Vec64 n = l2_normalize(Vec64({3.0, 4.0}));
        CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-14));
        CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-14));
    }
    SUBCASE("identity on the unit sphere") {
        Rng rng(7);
        const Vec64 u = rng.unit_vec(6);
        const Vec64 n = l2_normalize(u);
        for (std::size_t i = 0; i < u.dim(); ++i) {
            CHECK(n[i] == doctest::Approx(u[i]).epsilon(1e-14));
        }
    }
    SUBCASE("degenerate input") {
        CHECK_THROWS_AS(l2_normalize(Vec64({0.0, 0.0})), ZeroVectorError);
        CHECK_THROWS_AS(l2_normalize(Vec64({1e-13, 0.0})), ZeroVectorError);
    }
    SUBCASE("idempotence") {
        Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec64 v = rng.normal_vec(5, 3.0);
            const Vec64 once = l2_normalize(v);
            const Vec64 twice = l2_normalize(once);
            CHECK(std::abs(norm(once) - 1.0) <= 1e-12);
            for (std::size_t i = 0; i < v.dim(); ++i) {
                CHECK(std::abs(once[i] - twice[i]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("cosine_sim") {
    Rng rng(3);
    const Vec64 v = rng.normal_vec(8);
    SUBCASE("self and antipodal") {
        CHECK(cosine_sim(v, v) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(cosine_sim(v, scale(v, -1.0)) ==
              doctest::Approx(-1.0).epsilon(1e-14));
    }
    SUBCASE("orthogonal") {
        CHECK(cosine_sim(Vec64({1.0, 0.0}), Vec64({0.0, 1.0})) == 0.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(cosine_sim(Vec64({1.0}), Vec64({1.0, 2.0})),
                        DimMismatchError);
        CHECK_THROWS_AS(cosine_sim(Vec64({0.0, 0.0}), Vec64({1.0, 0.0})),
                        ZeroVectorError);
    }
    SUBCASE("scale invariance") {
        const Vec64 a = rng.normal_vec(8);
        for (double s : {1e-3, 0.37, 1.0, 42.0, 1e3}) {
            CHECK(std::abs(cosine_sim(scale(a, s), v) - cosine_sim(a, v)) <=
                  1e-10);
        }
    }
    SUBCASE("symmetry") {
        const Vec64 a = rng.normal_vec(8);
        CHECK(cosine_sim(a, v) == doctest::Approx(cosine_sim(v, a)).epsilon(1e-15));
    }
}

TEST_CASE("softmax") {
    SUBCASE("uniform under equal scores") {
        const Vec64 w = softmax(Vec64({2.5, 2.5, 2.5}));
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(w[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
        }
    }
    SUBCASE("single element") {
        CHECK(softmax(Vec64({-17.0}))[0] == 1.0);
    }
    SUBCASE("sums to one, positive, shift invariant") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec64 s = rng.normal_vec(6, 10.0);
            const Vec64 w = softmax(s);
            double sum = 0.0;
            for (std::size_t i = 0; i < w.dim(); ++i) {
                CHECK(w[i] > 0.0);
                sum += w[i];
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
            const double shift = rng.uniform(-50.0, 50.0);
            std::vector<double> shifted(s.dim());
            for (std::size_t i = 0; i < s.dim(); ++i) shifted[i] = s[i] + shift;
            const Vec64 w2 = softmax(Vec64(shifted));
            for (std::size_t i = 0; i < w.dim(); ++i) {
                CHECK(std::abs(w[i] - w2[i]) <= 1e-12);
            }
        }
    }
    SUBCASE("extreme scores stay stable") {
        const Vec64 w = softmax(Vec64({1000.0, 0.0}));
        CHECK(std::isfinite(w[0]));
        CHECK(w[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("scaled_dot_attention") {
    SUBCASE("single row returns the value row") {
        const Mat64 keys(1, 2, {0.3, -0.8});
        const Mat64 values(1, 3, {1.0, 2.0, 3.0});
        const Vec64 out = scaled_dot_attention(Vec64({1.0, 1.0}), keys, values);
        CHECK(out[0] == 1.0);
        CHECK(out[1] == 2.0);
        CHECK(out[2] == 3.0);
    }
    SUBCASE("identical keys give the mean of values") {
        const Mat64 keys(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
        const Mat64 values(3, 2, {1.0, 0.0, 0.0, 1.0, 2.0, 2.0});
        const Vec64 out = scaled_dot_attention(Vec64({1.0, -2.0}), keys, values);
        CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("two-key worked example") {
        // q=(1,0), keys=((1,0),(0,1)), values=((1,0),(0,1)), d_k=2:
        // scores = (1/sqrt(2), 0), output = (a, 1-a) with
        // a = e^{1/sqrt(2)} / (e^{1/sqrt(2)} + 1).
        const Mat64 keys(2, 2, {1.0, 0.0, 0.0, 1.0});
        const Mat64 values(2, 2, {1.0, 0.0, 0.0, 1.0});
        const Vec64 out = scaled_dot_attention(Vec64({1.0, 0.0}), keys, values);
        const double e = std::exp(1.0 / std::sqrt(2.0));
        const double expected = e / (e + 1.0);
        CHECK(std::abs(out[0] - expected) <= 1e-12);
        CHECK(std::abs(out[1] - (1.0 - expected)) <= 1e-12);
    }
    SUBCASE("output lies in the convex hull of value rows") {
        Rng rng(9);
        for (int trial = 0; trial < 10; ++trial) {
            const Mat64 keys = rng.normal_mat(5, 3);
            const Mat64 values = rng.normal_mat(5, 4);
            const Vec64 out =
                scaled_dot_attention(rng.normal_vec(3), keys, values);
            for (std::size_t c = 0; c < values.cols(); ++c) {
                double lo = values.at(0, c);
                double hi = values.at(0, c);
                for (std::size_t r = 1; r < values.rows(); ++r) {
                    lo = std::min(lo, values.at(r, c));
                    hi = std::max(hi, values.at(r, c));
                }
                CHECK(out[c] >= lo - 1e-12);
                CHECK(out[c] <= hi + 1e-12);
            }
        }
    }
    SUBCASE("dimension errors") {
        const Mat64 keys(2, 2, {1.0, 0.0, 0.0, 1.0});
        const Mat64 values(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
        CHECK_THROWS_AS(
            scaled_dot_attention(Vec64({1.0, 0.0, 0.0}), keys, keys),
            DimMismatchError);
        CHECK_THROWS_AS(scaled_dot_attention(Vec64({1.0, 0.0}), keys, values),
                        DimMismatchError);
    }
}

TEST_CASE("finite_diff_gradient") {
    SUBCASE("squared norm") {
        const Vec64 g = finite_diff_gradient(
            [](const Vec64& z) { return dot(z, z); }, Vec64({1.0, 2.0}));
        CHECK(std::abs(g[0] - 2.0) <= 1e-8);
        CHECK(std::abs(g[1] - 4.0) <= 1e-8);
    }
    SUBCASE("constant field") {
        const Vec64 g = finite_diff_gradient(
            [](const Vec64&) { return 4.25; }, Vec64({1.0, -3.0, 0.5}));
        for (std::size_t i = 0; i < g.dim(); ++i) CHECK(g[i] == 0.0);
    }
    SUBCASE("matches the closed-form cosine gradient") {
        Rng rng(21);
        for (int trial = 0; trial < 10; ++trial) {
            const Vec64 c = rng.normal_vec(6);
            const Vec64 z = scale(rng.unit_vec(6), rng.uniform(0.5, 2.0));
            const Vec64 fd = finite_diff_gradient(
                [&](const Vec64& p) { return cosine_sim(c, p); }, z);
            const double nc = norm(c);
            const double nz = norm(z);
            const double cz = dot(c, z);
            std::vector<double> closed(6);
            for (std::size_t i = 0; i < 6; ++i) {
                closed[i] = c[i] / (nc * nz) - cz * z[i] / (nc * nz * nz * nz);
            }
            const Vec64 analytic{std::move(closed)};
            const double rel =
                norm(sub(analytic, fd)) / std::max(norm(fd), 1e-8);
            CHECK(rel < 1e-6);
        }
    }
    SUBCASE("exact on random quadratics") {
        Rng rng(22);
        for (int trial = 0; trial < 10; ++trial) {
            const Mat64 a = rng.normal_mat(4, 4);
            const Vec64 b = rng.normal_vec(4);
            const Vec64 z = rng.normal_vec(4);
            auto f = [&](const Vec64& p) {
                return dot(p, matvec(a, p)) + dot(b, p) + 1.5;
            };
            const Vec64 fd = finite_diff_gradient(f, z);
            const Vec64 analytic =
                add(add(matvec(a, z), matvec_transposed(a, z)), b);
            for (std::size_t i = 0; i < 4; ++i) {
                CHECK(std::abs(fd[i] - analytic[i]) <= 1e-8);
            }
        }
    }
    SUBCASE("step must be positive") {
        CHECK_THROWS_AS(finite_diff_gradient(
                            [](const Vec64& z) { return z[0]; },
                            Vec64({1.0}), 0.0),
                        ConfigError);
    }
}

TEST_CASE("rng determinism and distribution sanity") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(43);
    CHECK(Rng(42).next_u64() != c.next_u64());

    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    const Vec64 n = r.normal_vec(16);
    CHECK(n.dim() == 16);
}

TEST_CASE("rng orthonormal factors") {
    Rng rng(14);
    SUBCASE("square") {
        const Mat64 q = rng.orthonormal(6, 6);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                const double want = i == j ? 1.0 : 0.0;
                CHECK(std::abs(dot(q.row(i), q.row(j)) - want) <= 1e-10);
            }
        }
    }
    SUBCASE("wide: orthonormal rows") {
        const Mat64 q = rng.orthonormal(3, 8);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const double want = i == j ? 1.0 : 0.0;
                CHECK(std::abs(dot(q.row(i), q.row(j)) - want) <= 1e-10);
            }
        }
    }
    SUBCASE("tall: orthonormal columns") {
        const Mat64 q = rng.orthonormal(8, 3);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < 8; ++r) s += q.at(r, i) * q.at(r, j);
                const double want = i == j ? 1.0 : 0.0;
                CHECK(std::abs(s - want) <= 1e-10);
            }
        }
    }
    SUBCASE("deterministic") {
        const Mat64 q1 = Rng(99).orthonormal(4, 4);
        const Mat64 q2 = Rng(99).orthonormal(4, 4);
        CHECK(q1.values() == q2.values());
    }
}
