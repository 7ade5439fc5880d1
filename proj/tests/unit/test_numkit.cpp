#include "kaelspi/numkit.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

using namespace kaelspi;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

}  // namespace

TEST(Lstsq, IdentitySystem) {
    const Matrix a = Matrix::Identity(3, 3);
    Matrix b(3, 1);
    b << 1, 2, 3;
    EXPECT_LT(relative_error(lstsq(a, b), b), 1e-15);
}

TEST(Lstsq, ConstantRegressorGivesMean) {
    Matrix a(2, 1);
    a << 1, 1;
    Matrix b(2, 1);
    b << 0, 2;
    EXPECT_NEAR(lstsq(a, b)(0, 0), 1.0, 1e-14);
}

TEST(Lstsq, RecoversPlantedSolution) {
    Rng rng(7);
    const Matrix a = random_matrix(20, 5, rng);
    const Matrix x = random_matrix(5, 1, rng);
    EXPECT_LT(relative_error(lstsq(a, a * x), x), 1e-10);
}

TEST(Lstsq, RankDeficientGivesMinimumNorm) {
    Rng rng(3);
    Matrix a = random_matrix(30, 4, rng);
    a.col(3) = a.col(0) + a.col(1);
    const Matrix x = random_matrix(4, 1, rng);
    const Matrix b = a * x;
    const Matrix got = lstsq(a, b);
    EXPECT_LE((a * got - b).norm(), 1e-9 * b.norm());
    EXPECT_LE(got.norm(), x.norm() + 1e-12);
    // minimum-norm solutions lie in the row space: orthogonal to the null vector (1, 1, 0, -1)
    Vector null(4);
    null << 1, 1, 0, -1;
    EXPECT_NEAR(got.col(0).dot(null), 0.0, 1e-9);
}

TEST(Lstsq, ResidualNeverWorseThanAnyCandidate) {
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const Matrix a = random_matrix(15, 6, rng);
        const Matrix x = random_matrix(6, 1, rng);
        const Matrix b = a * x + 0.1 * random_matrix(15, 1, rng);
        EXPECT_LE((a * lstsq(a, b) - b).norm(), (a * x - b).norm() + 1e-12);
    }
}

TEST(Pinv, IdentityAndZero) {
    EXPECT_LT(relative_error(pinv(Matrix::Identity(4, 4)), Matrix::Identity(4, 4)), 1e-15);
    const Matrix z = pinv(Matrix::Zero(3, 2));
    EXPECT_EQ(z.rows(), 2);
    EXPECT_EQ(z.cols(), 3);
    EXPECT_EQ(z.norm(), 0.0);
}

TEST(Pinv, LeftInverseOfFullRank) {
    Rng rng(5);
    const Matrix a = random_matrix(6, 4, rng);
    EXPECT_LT((pinv(a) * a - Matrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(Pinv, PenroseConditionsIncludingRankDeficient) {
    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
        const auto rows = static_cast<Index>(2 + rng.choice(12));
        const auto cols = static_cast<Index>(2 + rng.choice(12));
        const auto rank = static_cast<Index>(1 + rng.choice(static_cast<std::size_t>(std::min(rows, cols))));
        const Matrix a = random_matrix(rows, rank, rng) * random_matrix(rank, cols, rng);
        const Matrix p = pinv(a);
        const double tol = 1e-8 * std::max(1.0, a.norm());
        EXPECT_LE((a * p * a - a).norm(), tol);
        EXPECT_LE((p * a * p - p).norm(), 1e-8 * std::max(1.0, p.norm()));
        EXPECT_LE((a * p - (a * p).transpose()).norm(), tol);
        EXPECT_LE((p * a - (p * a).transpose()).norm(), tol);
        EXPECT_EQ(numerical_rank(a), rank);
    }
}

TEST(SvdCutoff, Formula) {
    EXPECT_DOUBLE_EQ(svd_cutoff(6, 4, 2.0), 10.0 * 6.0 * 2.0 * std::ldexp(1.0, -52));
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
}

TEST(Rng, UniformMean) {
    Rng rng(1);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(Rng, ChoiceFrequencies) {
    Rng rng(2);
    std::array<int, 3> counts{};
    for (int i = 0; i < 30000; ++i) ++counts[rng.choice(3)];
    for (int c : counts) EXPECT_NEAR(c / 30000.0, 1.0 / 3.0, 0.02);
}

TEST(Rng, NormalMoments) {
    Rng rng(4);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.02);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, SplitRule) {
    const Rng base(123);
    EXPECT_EQ(base.split(5).seed(), mix64(123 ^ mix64(5)));
    EXPECT_NE(base.split(0).seed(), base.split(1).seed());
    Rng a = base.split(3);
    Rng b = base.split(3);
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Shuffle, IsPermutationAndDeterministic) {
    std::vector<int> a(50);
    for (int i = 0; i < 50; ++i) a[static_cast<std::size_t>(i)] = i;
    std::vector<int> b = a;
    Rng r1(8);
    Rng r2(8);
    shuffle(a, r1);
    shuffle(b, r2);
    EXPECT_EQ(a, b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(AllFinite, DetectsNan) {
    Matrix m = Matrix::Ones(2, 2);
    EXPECT_TRUE(all_finite(m));
    m(1, 0) = std::nan("");
    EXPECT_FALSE(all_finite(m));
}
