#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sdcert/errors.hpp"
#include "sdcert/numerics.hpp"

namespace sdcert {
namespace {

Mat random_matrix(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> nd;
    Mat m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            m(i, j) = nd(rng);
        }
    }
    return m;
}

TEST(SymMatrix, KeepsSymmetricPart) {
    Mat m(2, 2);
    m << 1, 2, 4, 3;
    const SymMatrix s(m);
    EXPECT_DOUBLE_EQ(s(0, 1), 3.0);
    EXPECT_DOUBLE_EQ(s(1, 0), 3.0);
}

TEST(SymMatrix, RejectsNonSquare) { EXPECT_THROW(SymMatrix(Mat(2, 3)), DomainError); }

TEST(SymEig, DiagonalMatrix) {
    const auto e = sym_eig(SymMatrix::diagonal((Vec(3) << 3, -1, 2).finished()));
    EXPECT_DOUBLE_EQ(e.eigenvalues(0), -1.0);
    EXPECT_DOUBLE_EQ(e.eigenvalues(1), 2.0);
    EXPECT_DOUBLE_EQ(e.eigenvalues(2), 3.0);
}

TEST(SymEig, KnownTwoByTwo) {
    Mat m(2, 2);
    m << 2, 1, 1, 2;
    const auto e = sym_eig(SymMatrix(m));
    EXPECT_NEAR(e.min(), 1.0, 1e-14);
    EXPECT_NEAR(e.max(), 3.0, 1e-14);
}

TEST(SymEig, ReconstructionAndOrthogonality) {
    std::mt19937_64 rng(11);
    for (Eigen::Index n : {1, 2, 3, 5, 8, 12}) {
        for (int trial = 0; trial < 20; ++trial) {
            const SymMatrix s(random_matrix(rng, n));
            const auto e = sym_eig(s);
            const Mat& v = e.eigenvectors;
            const Mat rebuilt = v * e.eigenvalues.asDiagonal() * v.transpose();
            EXPECT_LE((rebuilt - s.matrix()).norm(), 1e-12 * (1.0 + s.norm()));
            EXPECT_LE((v.transpose() * v - Mat::Identity(n, n)).norm(), 1e-12);
            for (Eigen::Index i = 1; i < n; ++i) {
                EXPECT_LE(e.eigenvalues(i - 1), e.eigenvalues(i));
            }
        }
    }
}

TEST(SymEig, MatchesEigenReference) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const SymMatrix s(random_matrix(rng, 6));
        const Eigen::SelfAdjointEigenSolver<Mat> ref(s.matrix());
        EXPECT_LE((sym_eig(s).eigenvalues - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + s.norm()));
    }
}

TEST(SymEig, CongruenceInvariants) {
    // Sylvester's law of inertia: signs of eigenvalues survive an invertible congruence.
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const SymMatrix s = SymMatrix::diagonal((Vec(4) << -2, -0.5, 1, 3).finished());
        Mat t = random_matrix(rng, 4);
        t.diagonal().array() += 5.0;
        const auto e = sym_eig(s.congruence(t));
        EXPECT_LT(e.eigenvalues(1), 0.0);
        EXPECT_GT(e.eigenvalues(2), 0.0);
        // Orthogonal congruence preserves the spectrum exactly.
        const Eigen::HouseholderQR<Mat> qr(random_matrix(rng, 4));
        const Mat q = qr.householderQ();
        const auto eq = sym_eig(s.congruence(q));
        EXPECT_LE((eq.eigenvalues - sym_eig(s).eigenvalues).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SymEig, IterationCapRaises) {
    Mat m(3, 3);
    m << 1, 2, 3, 2, 4, 5, 3, 5, 6;
    EXPECT_THROW(sym_eig(SymMatrix(m), 0), NumericalFailure);
}

TEST(PositiveDefinite, StrictPredicate) {
    EXPECT_TRUE(is_pos_def(SymMatrix::identity(3)));
    EXPECT_FALSE(is_pos_def(SymMatrix::diagonal((Vec(2) << 1, 0).finished())));
    EXPECT_FALSE(is_pos_def(SymMatrix::identity(2), 1.0));
    EXPECT_THROW((void)is_pos_def(SymMatrix::identity(2), -1.0), DomainError);
    EXPECT_NEAR(default_pd_tolerance(SymMatrix::identity(4)), 3e-9, 1e-20);
}

TEST(Pencil, DiagonalCase) {
    const auto a = SymMatrix::diagonal((Vec(2) << 2, 8).finished());
    const auto b = SymMatrix::diagonal((Vec(2) << 1, 4).finished());
    EXPECT_NEAR(pencil_max_eig(a, b), 2.0, 1e-14);
}

TEST(Pencil, MatchesGeneralizedSolver) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const SymMatrix a(random_matrix(rng, 4));
        const Mat r = random_matrix(rng, 4);
        const SymMatrix b(Mat(r * r.transpose() + Mat::Identity(4, 4)));
        const Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ref(a.matrix(), b.matrix());
        const double lam = pencil_max_eig(a, b);
        EXPECT_NEAR(lam, ref.eigenvalues().maxCoeff(), 1e-10 * (1.0 + std::abs(lam)));
        // A − λB is negative semidefinite with a zero eigenvalue.
        EXPECT_NEAR(lambda_max(a - lam * b), 0.0, 1e-9 * (1.0 + b.norm() * std::abs(lam)));
    }
}

TEST(Pencil, RejectsIndefiniteDenominator) {
    EXPECT_THROW((void)pencil_max_eig(SymMatrix::identity(2), SymMatrix::diagonal((Vec(2) << 1, -1).finished())),
                 DomainError);
}

TEST(FindRoot, Polynomial) {
    auto f = [](double x) { return x * x * x - 2.0; };
    const double r = find_root(f, make_bracket(f, 0.0, 2.0));
    EXPECT_NEAR(r, std::cbrt(2.0), 1e-12);
}

TEST(FindRoot, LogarithmicRoot) {
    auto f = [](double q) { return 1.0 + std::log(q) + q; };
    const double r = find_root(f, make_bracket(f, std::exp(-2.0), 1.0), 0.0);
    EXPECT_NEAR(r, 0.2784645427610738, 1e-15);
    EXPECT_LE(std::abs(f(r)), 1e-15);
}

TEST(FindRoot, RejectsBadBracket) {
    auto f = [](double x) { return x * x + 1.0; };
    EXPECT_THROW(make_bracket(f, -1.0, 1.0), DomainError);
    EXPECT_THROW(find_root(f, Bracket{0.0, 1.0, 1.0, 2.0}), DomainError);
}

TEST(FindRoot, ExactEndpoint) {
    auto f = [](double x) { return x - 1.0; };
    EXPECT_EQ(find_root(f, make_bracket(f, 1.0, 3.0)), 1.0);
}

} // namespace
} // namespace sdcert
