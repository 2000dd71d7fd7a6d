#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gaplanes/linalg.hpp"
#include "test_util.hpp"

using namespace gaplanes;
using testutil::random_matrix;

namespace {

Tensor triple_loop(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

double orthonormality_defect(const Tensor& q) {
    double worst = 0.0;
    for (std::size_t a = 0; a < q.cols(); ++a)
        for (std::size_t b = 0; b < q.cols(); ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < q.rows(); ++i) s += q(i, a) * q(i, b);
            worst = std::max(worst, std::abs(s - (a == b ? 1.0 : 0.0)));
        }
    return worst;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), Error);
    EXPECT_THROW(Tensor(std::vector<std::size_t>{}), Error);
    EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), Error);
    EXPECT_THROW(Tensor({2, 0}), Error);
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.shape_string(), "[2x3x4]");
}

TEST(Tensor, TransposeTwiceIsIdentity) {
    const Tensor a = random_matrix(5, 3, 1);
    EXPECT_EQ(a.transposed().transposed(), a);
    EXPECT_EQ(a.transposed()(2, 4), a(4, 2));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Tensor a = random_matrix(3, 4, 2);
    EXPECT_EQ(matmul(Tensor::identity(3), a), a);
}

TEST(Matmul, HandComputed) {
    const Tensor c = matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{1}, {1}}));
    EXPECT_EQ(c, Tensor::from_rows({{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
    const Tensor a = random_matrix(5, 4, 3), b = random_matrix(4, 3, 4);
    const Tensor c = matmul(a, b), ref = triple_loop(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

TEST(Matmul, RejectsInnerMismatch) {
    EXPECT_THROW(matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3)), Error);
}

TEST(Svd, Diagonal) {
    const auto s = singular_values(Tensor::from_rows({{3, 0, 0}, {0, 1, 0}, {0, 0, 2}}));
    ASSERT_EQ(s.size(), 3u);
    EXPECT_NEAR(s[0], 3, 1e-14);
    EXPECT_NEAR(s[1], 2, 1e-14);
    EXPECT_NEAR(s[2], 1, 1e-14);
}

TEST(Svd, RankOneOuterProduct) {
    const std::vector<double> u{1, 2, 3, 4}, v{2, -1, 0.5};
    Tensor m = Tensor::matrix(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = u[i] * v[j];
    const auto s = singular_values(m);
    EXPECT_NEAR(s[0], std::sqrt(30.0) * std::sqrt(5.25), 1e-12);
    EXPECT_NEAR(s[1], 0.0, 1e-12);
    EXPECT_NEAR(s[2], 0.0, 1e-12);
}

TEST(Svd, RandomReconstructionAndOrthonormality) {
    for (auto shape : {std::pair{16, 12}, std::pair{12, 16}}) {
        const Tensor m = random_matrix(shape.first, shape.second, 5);
        const Svd f = svd(m);
        EXPECT_LT(testutil::frob_diff(reconstruct(f, f.s.size()), m), 1e-9 * frobenius_norm(m));
        EXPECT_LT(orthonormality_defect(f.u), 1e-9);
        EXPECT_LT(orthonormality_defect(f.v), 1e-9);
        EXPECT_TRUE(std::is_sorted(f.s.rbegin(), f.s.rend()));
        EXPECT_GE(f.s.back(), 0.0);
    }
}

TEST(Svd, RoundTripOverSeededSizes) {
    SeededRng sizes(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + sizes.below(64), n = 1 + sizes.below(64);
        const Tensor a = random_matrix(m, n, 1000 + static_cast<std::uint64_t>(trial));
        const Svd f = svd(a);
        EXPECT_LT(testutil::frob_diff(reconstruct(f, f.s.size()), a) / frobenius_norm(a), 1e-9) << m << "x" << n;
    }
}

TEST(Svd, RankDeficientHasOrthonormalFactors) {
    Tensor m = Tensor::matrix(6, 5);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j) m(i, j) = static_cast<double>(i + 1);
    const Svd f = svd(m);
    EXPECT_LT(orthonormality_defect(f.u), 1e-9);
    EXPECT_LT(orthonormality_defect(f.v), 1e-9);
}

TEST(Svd, EckartYoungTailMatchesDirectError) {
    const Tensor m = random_matrix(20, 14, 9);
    const Svd f = svd(m);
    for (std::size_t k = 0; k <= f.s.size(); ++k) {
        const double direct = testutil::frob_diff(reconstruct(f, k), m);
        const double tail = tail_norm(f.s, k);
        EXPECT_LE(std::abs(direct * direct - tail * tail), 1e-9 * std::max(1.0, tail * tail)) << "k=" << k;
    }
}

TEST(NumericRank, ZeroMatrix) { EXPECT_EQ(numeric_rank(Tensor::matrix(8, 8), 1e-8), 0); }

TEST(NumericRank, RankTwoConstruction) {
    SeededRng rng(3);
    Tensor m = Tensor::matrix(10, 9);
    std::vector<double> u(10), v(9), w(10), x(9);
    for (auto* vec : {&u, &w}) for (auto& e : *vec) e = rng.normal();
    for (auto* vec : {&v, &x}) for (auto& e : *vec) e = rng.normal();
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 9; ++j) m(i, j) = u[i] * v[j] + w[i] * x[j];
    EXPECT_EQ(numeric_rank(m), 2);
}

TEST(NumericRank, AdditiveLineConstructionHasRankAtMostTwo) {
    // U 1^T + 1 V^T with U, V of 16 x 4, summed over the feature axis by a linear decoder.
    const Tensor u = random_matrix(16, 4, 11), v = random_matrix(16, 4, 12);
    Tensor m = Tensor::matrix(16, 16);
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            for (std::size_t c = 0; c < 4; ++c) m(i, j) += u(i, c) + v(j, c);
    const auto s = singular_values(m);
    int above = 0;
    for (double x : s) above += x > 1e-8 * s[0];
    EXPECT_EQ(numeric_rank(m), above);
    EXPECT_LE(numeric_rank(m), 2);
}

TEST(NumericRank, InvariantUnderPermutationAndScaling) {
    const Tensor low = matmul(random_matrix(12, 3, 21), random_matrix(3, 10, 22));
    const int r = numeric_rank(low);
    EXPECT_EQ(r, 3);
    Tensor perm = low;
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 10; ++j) perm(i, j) = low(11 - i, (j + 3) % 10);
    EXPECT_EQ(numeric_rank(perm), r);
    EXPECT_EQ(numeric_rank(-1e-3 * low), r);
    EXPECT_EQ(numeric_rank(1e6 * low), r);
}

TEST(Psnr, Analytic) {
    const Tensor a = Tensor::matrix(4, 4, 0.3);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    EXPECT_NEAR(psnr(Tensor::matrix(4, 4, 0.1), Tensor::matrix(4, 4, 0.0)), 20.0, 1e-12);
    EXPECT_NEAR(psnr(Tensor::matrix(4, 4, 1.0), Tensor::matrix(4, 4, 0.0)), 0.0, 1e-12);
    EXPECT_THROW(psnr(Tensor::matrix(4, 4), Tensor::matrix(4, 3)), Error);
}

TEST(SeededRng, SameSeedSameStream) {
    SeededRng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(SeededRng, KnownFirstOutputs) {
    // Reference values from a separate xoshiro256** / SplitMix64 implementation.
    SeededRng r(0);
    EXPECT_EQ(r.next_u64(), 11091344671253066420ULL);
    EXPECT_EQ(r.next_u64(), 13793997310169335082ULL);
    EXPECT_EQ(r.next_u64(), 1900383378846508768ULL);
    EXPECT_NE(SeededRng::derive(0, 1), SeededRng::derive(0, 2));
    EXPECT_EQ(SeededRng::derive(5, 9), SeededRng::derive(5, 9));
}

TEST(SeededRng, UniformAndNormalMoments) {
    SeededRng r(7);
    double su = 0, sn = 0, sn2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 0.005);
    EXPECT_NEAR(sn / n, 0.0, 0.01);
    EXPECT_NEAR(sn2 / n, 1.0, 0.01);
}
