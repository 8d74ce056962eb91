#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "selm/kernels.hpp"
#include "selm/projection.hpp"
#include "selm/random.hpp"
#include "oracles.hpp"

using namespace selm;
using kernels::Exec;
using oracle::dot;
using oracle::explicit_matrix;
using oracle::hadamard;
using oracle::randn;

namespace {

Key32 key_from(Rng& rng) {
    Key32 k{};
    for (auto& b : k) b = static_cast<std::uint8_t>(rng.below(256));
    return k;
}

} // namespace

TEST(Fwht, MatchesExplicitHadamardExactly) {
    Rng rng(1);
    for (std::size_t n : {2u, 4u, 8u, 16u}) {
        std::vector<double> x(n);
        for (auto& v : x) v = static_cast<double>(static_cast<int>(rng.below(201)) - 100);
        std::vector<double> expect(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) expect[i] += hadamard(i, j) * x[j];
        kernels::fwht(x);
        EXPECT_EQ(x, expect) << "n=" << n;
    }
}

TEST(Fwht, PowerOfTwoHelpers) {
    EXPECT_EQ(kernels::next_power_of_two(1), 1u);
    EXPECT_EQ(kernels::next_power_of_two(5), 8u);
    EXPECT_EQ(kernels::next_power_of_two(1024), 1024u);
    EXPECT_TRUE(kernels::is_power_of_two(64));
    EXPECT_FALSE(kernels::is_power_of_two(96));
}

TEST(Projection, DeterministicForSameKey) {
    const Key32 zero{};
    const auto a = build_projection(zero, 4, 8);
    const auto b = build_projection(zero, 4, 8);
    EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Projection, BlockSizeIsNextPowerOfTwo) {
    const auto s = build_projection(Key32{}, 5, 8);
    EXPECT_EQ(s.block_size, 8u);
    EXPECT_EQ(s.n_blocks(), 1u);
    const auto t = build_projection(Key32{}, 4, 10);
    EXPECT_EQ(t.block_size, 4u);
    EXPECT_EQ(t.n_blocks(), 3u);
}

TEST(Projection, StructuralInvariants) {
    Rng rng(2);
    const auto s = build_projection(key_from(rng), 100, 1000);
    EXPECT_TRUE(kernels::is_power_of_two(s.block_size));
    for (auto sg : s.signs) EXPECT_TRUE(sg == 1 || sg == -1);
    for (std::size_t b = 0; b < s.n_blocks(); ++b) {
        std::vector<std::uint32_t> p(s.permutation.begin() + static_cast<std::ptrdiff_t>(b * s.block_size),
                                     s.permutation.begin() + static_cast<std::ptrdiff_t>((b + 1) * s.block_size));
        std::sort(p.begin(), p.end());
        for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(p[i], i);
    }
}

TEST(Projection, RandomnessFollowsDocumentedStreamOrder) {
    Key32 key{};
    key[5] = 42;
    const auto s = build_projection(key, 3, 8);  // block_size 4, two blocks
    ChaChaStream cs(key, 0);
    for (std::size_t b = 0; b < 2; ++b) {
        const std::uint64_t word = cs.next_u64();
        for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.signs[b * 4 + i], ((word >> i) & 1u) ? -1 : 1);
        for (std::size_t i = 0; i < 4; i += 2) {
            const double u1 = cs.next_open01(), u2 = cs.next_open01();
            const double r = std::sqrt(-2.0 * std::log(u1));
            EXPECT_EQ(s.gaussians[b * 4 + i], r * std::cos(2.0 * std::numbers::pi * u2));
            EXPECT_EQ(s.gaussians[b * 4 + i + 1], r * std::sin(2.0 * std::numbers::pi * u2));
        }
        std::vector<std::uint32_t> perm{0, 1, 2, 3};
        for (std::size_t i = 3; i >= 1; --i) std::swap(perm[i], perm[cs.next_u64() % (i + 1)]);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.permutation[b * 4 + i], perm[i]);
    }
}

TEST(Projection, DistinctKeysGiveDistinctSpecs) {
    Rng rng(3);
    std::set<Bytes> seen;
    for (int i = 0; i < 100; ++i) {
        const Key32 k1 = key_from(rng), k2 = key_from(rng);
        ASSERT_NE(k1, k2);
        auto s1 = build_projection(k1, 64, 256), s2 = build_projection(k2, 64, 256);
        EXPECT_FALSE(s1.signs == s2.signs && s1.gaussians == s2.gaussians && s1.permutation == s2.permutation);
        seen.insert(s1.serialize());
        seen.insert(s2.serialize());
    }
    EXPECT_EQ(seen.size(), 200u);
}

TEST(Projection, ZeroMapsToZero) {
    const auto s = build_projection(Key32{}, 16, 100);
    for (double v : project(s, std::vector<double>(16, 0.0))) EXPECT_EQ(v, 0.0);
    for (double v : project_adjoint(s, std::vector<double>(100, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(Projection, HomogeneityAndLinearity) {
    Rng rng(4);
    const auto s = build_projection(key_from(rng), 50, 700);
    const auto x = randn(rng, 50), y = randn(rng, 50);
    std::vector<double> x2(50), comb(50);
    const double a = 0.7, b = -1.3;
    for (std::size_t i = 0; i < 50; ++i) {
        x2[i] = 2.0 * x[i];
        comb[i] = a * x[i] + b * y[i];
    }
    const auto px = project(s, x), py = project(s, y), p2 = project(s, x2), pc = project(s, comb);
    for (std::size_t i = 0; i < px.size(); ++i) {
        EXPECT_NEAR(p2[i], 2.0 * px[i], 1e-12 * std::max(1.0, std::abs(2.0 * px[i])));
        const double expect = a * px[i] + b * py[i];
        EXPECT_NEAR(pc[i], expect, 1e-10 * std::max(1.0, std::abs(expect)));
    }
}

TEST(Projection, DenseOracle) {
    Rng rng(5);
    for (auto [d, D] : {std::pair<std::size_t, std::size_t>{4, 8}, {8, 32}, {5, 13}}) {
        const auto s = build_projection(key_from(rng), d, D);
        const auto M = explicit_matrix(s);
        // Column-by-column assembly agrees with the explicit matrix.
        for (std::size_t c = 0; c < d; ++c) {
            std::vector<double> e(d, 0.0);
            e[c] = 1.0;
            const auto col = project(s, e);
            for (std::size_t r = 0; r < D; ++r) EXPECT_NEAR(col[r], M[r * d + c], 1e-10);
        }
        const auto x = randn(rng, d);
        const auto y = randn(rng, D);
        const auto px = project(s, x);
        const auto aty = project_adjoint(s, y);
        for (std::size_t r = 0; r < D; ++r) {
            double e = 0.0;
            for (std::size_t c = 0; c < d; ++c) e += M[r * d + c] * x[c];
            EXPECT_NEAR(px[r], e, 1e-10);
        }
        for (std::size_t c = 0; c < d; ++c) {
            double e = 0.0;
            for (std::size_t r = 0; r < D; ++r) e += M[r * d + c] * y[r];
            EXPECT_NEAR(aty[c], e, 1e-10);
        }
    }
}

TEST(Projection, AdjointIdentity) {
    Rng rng(6);
    const auto s = build_projection(key_from(rng), 64, 1000);
    for (int t = 0; t < 1000; ++t) {
        const auto x = randn(rng, 64), y = randn(rng, 1000);
        const double lhs = dot(project(s, x), y);
        const double rhs = dot(x, project_adjoint(s, y));
        ASSERT_NEAR(lhs, rhs, 1e-6 * std::max(std::abs(lhs), 1.0));
    }
}

TEST(Projection, DimensionErrors) {
    const auto s = build_projection(Key32{}, 4, 8);
    EXPECT_THROW(project(s, std::vector<double>(5)), DimensionError);
    EXPECT_THROW(project_adjoint(s, std::vector<double>(7)), DimensionError);
}

TEST(Projection, ParallelMatchesSerialBitwise) {
    Rng rng(7);
    const auto s = build_projection(key_from(rng), 1024, 124672);
    const auto x = randn(rng, 1024), y = randn(rng, 124672);
    EXPECT_EQ(project(s, x, Exec::serial), project(s, x, Exec::parallel));
    EXPECT_EQ(project_adjoint(s, y, Exec::serial), project_adjoint(s, y, Exec::parallel));
}

TEST(Kernels, ParallelMatmulMatchesSerialBitwise) {
    Rng rng(8);
    const std::size_t M = 70, K = 64, N = 96;
    std::vector<float> A(M * K), W(K * N), bias(N), dOut(M * N), Wt(N * K);
    for (auto* v : {&A, &W, &bias, &dOut})
        for (auto& x : *v) x = static_cast<float>(rng.normal());
    kernels::transpose(W.data(), Wt.data(), K, N);
    std::vector<float> o1(M * N), o2(M * N);
    kernels::matmul(Exec::serial, A.data(), W.data(), bias.data(), o1.data(), M, K, N);
    kernels::matmul(Exec::parallel, A.data(), W.data(), bias.data(), o2.data(), M, K, N);
    EXPECT_EQ(o1, o2);
    std::vector<float> g1(M * K, 0.5f), g2(M * K, 0.5f);
    kernels::matmul_acc_bt(Exec::serial, dOut.data(), Wt.data(), g1.data(), M, K, N);
    kernels::matmul_acc_bt(Exec::parallel, dOut.data(), Wt.data(), g2.data(), M, K, N);
    EXPECT_EQ(g1, g2);
    std::vector<float> w1(K * N, 0.0f), w2(K * N, 0.0f);
    kernels::matmul_acc_at(Exec::serial, A.data(), dOut.data(), w1.data(), M, K, N);
    kernels::matmul_acc_at(Exec::parallel, A.data(), dOut.data(), w2.data(), M, K, N);
    EXPECT_EQ(w1, w2);
    // Against a naive triple loop in double.
    for (std::size_t i = 0; i < M; i += 13)
        for (std::size_t j = 0; j < N; j += 7) {
            double e = bias[j];
            for (std::size_t k = 0; k < K; ++k) e += static_cast<double>(A[i * K + k]) * W[k * N + j];
            EXPECT_NEAR(o1[i * N + j], e, 1e-4);
        }
}
