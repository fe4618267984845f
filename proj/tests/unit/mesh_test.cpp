#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "oracles.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/mesh.hpp"

using namespace ptcflow;

namespace {

constexpr double kHalfPi = kPi / 2.0;

Matrix planar(std::size_t k, std::size_t i, std::size_t j, double phi) {
    Matrix r = Matrix::identity(k);
    r(i, i) = std::cos(phi);
    r(j, j) = std::cos(phi);
    r(j, i) = -std::sin(phi);
    r(i, j) = std::sin(phi);
    return r;
}

// Dense product D * prod R_ij in the documented loop order, built without the library mesh code.
Matrix dense_reck(const UnitaryPhases &p) {
    Matrix u = Matrix::identity(p.k);
    std::size_t n = 0;
    for (std::size_t i = p.k; i-- > 1;) {
        for (std::size_t j = 0; j < i; ++j) {
            u = u * planar(p.k, i, j, p.phis[n++]);
        }
    }
    Matrix d(p.k, p.k);
    for (std::size_t i = 0; i < p.k; ++i) {
        d(i, i) = p.d[i];
    }
    return d * u;
}

}  // namespace

TEST(Rotator, AnalyticValues) {
    const Matrix r0 = rotator(0.0);
    EXPECT_EQ(r0, Matrix::identity(2));
    const Matrix r1 = rotator(kHalfPi);
    EXPECT_NEAR(r1(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(r1(0, 1), -1.0, 1e-15);
    EXPECT_NEAR(r1(1, 0), 1.0, 1e-15);
    EXPECT_NEAR(r1(1, 1), 0.0, 1e-15);
    const Matrix r2 = rotator(kPi);
    EXPECT_NEAR(r2(0, 0), -1.0, 1e-15);
    EXPECT_NEAR(r2(1, 1), -1.0, 1e-15);
    EXPECT_NEAR(r2(0, 1), 0.0, 1e-15);
}

TEST(Rotator, RejectsNonFinite) {
    EXPECT_THROW(rotator(std::nan("")), InvalidInput);
    EXPECT_THROW(rotator(INFINITY), InvalidInput);
    EXPECT_THROW(mzi_phase_settings(std::nan("")), InvalidInput);
}

TEST(Rotator, OrthogonalUnitDeterminantAndComposes) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int t = 0; t < 200; ++t) {
        const double a = u(rng);
        const double b = u(rng);
        const Matrix r = rotator(a);
        EXPECT_LE(orthogonality_residual(r), 1e-12);
        EXPECT_NEAR(determinant(r), 1.0, 1e-12);
        EXPECT_LE(oracle::max_abs_diff(rotator(a) * rotator(b), rotator(a + b)), 1e-12);
    }
}

TEST(MziPhaseSettings, ArmPhasesFollowDeltaOmega) {
    const auto s = mzi_phase_settings(kHalfPi);
    EXPECT_DOUBLE_EQ(s.theta_t, kHalfPi);
    EXPECT_DOUBLE_EQ(s.theta_l, 3.0 * kHalfPi);
    EXPECT_DOUBLE_EQ(s.omega_p, kPi);
    EXPECT_DOUBLE_EQ(s.omega_w, kPi);
    const auto z = mzi_phase_settings(0.0);
    EXPECT_DOUBLE_EQ(z.omega_p, 3.0 * kHalfPi);
    EXPECT_DOUBLE_EQ(z.omega_w, kHalfPi);
}

TEST(MziPhaseSettings, FourShifterProductIsRotator) {
    using C = std::complex<double>;
    const double phi = 0.3;
    const auto s = mzi_phase_settings(phi);
    // Independent product of the four factors: coupler, arm shifters, coupler, input shifters.
    const double t = 1.0 / std::sqrt(2.0);
    const C j(0.0, 1.0);
    const C cp[2][2] = {{t, j * t}, {j * t, t}};
    const C arms[2] = {std::exp(j * s.omega_p), std::exp(j * s.omega_w)};
    const C ins[2] = {std::exp(j * s.theta_t), std::exp(j * s.theta_l)};
    C m[2][2];
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            C acc = 0.0;
            for (int a = 0; a < 2; ++a) {
                acc += cp[r][a] * arms[a] * cp[a][c];
            }
            m[r][c] = acc * ins[c];
        }
    }
    const double ref[2][2] = {{std::cos(phi), -std::sin(phi)}, {std::sin(phi), std::cos(phi)}};
    const Complex2x2 lib = mzi_transfer_matrix(s);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            EXPECT_NEAR(m[r][c].real(), ref[r][c], 1e-12) << r << "," << c;
            EXPECT_NEAR(m[r][c].imag(), 0.0, 1e-12);
            EXPECT_NEAR(std::abs(lib[r][c] - m[r][c]), 0.0, 1e-12);
        }
    }
}

TEST(MeshPairs, CoversEveryPairOnceInLoopOrder) {
    const auto pairs = mesh_pairs(4);
    ASSERT_EQ(pairs.size(), 6u);
    const std::vector<std::pair<std::size_t, std::size_t>> expected{{3, 0}, {3, 1}, {3, 2}, {2, 0}, {2, 1}, {1, 0}};
    EXPECT_EQ(pairs, expected);
}

TEST(ReconstructUnitary, Examples) {
    EXPECT_EQ(reconstruct_unitary(UnitaryPhases(5)), Matrix::identity(5));
    UnitaryPhases p(2);
    p.phis[0] = kHalfPi;
    const Matrix u = reconstruct_unitary(p);
    EXPECT_NEAR(u(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(u(0, 1), -1.0, 1e-15);
    EXPECT_NEAR(u(1, 0), 1.0, 1e-15);
}

TEST(ReconstructUnitary, MatchesDenseProductAndDeterminant) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    std::bernoulli_distribution flip(0.5);
    for (std::size_t k : {2u, 3u, 5u, 9u}) {
        for (int t = 0; t < 10; ++t) {
            UnitaryPhases p(k);
            for (double &x : p.phis) {
                x = ph(rng);
            }
            int prod = 1;
            for (int &s : p.d) {
                s = flip(rng) ? -1 : 1;
                prod *= s;
            }
            const Matrix u = reconstruct_unitary(p);
            EXPECT_LE(orthogonality_residual(u), 1e-9);
            EXPECT_NEAR(determinant(u), prod, 1e-9);
            EXPECT_LE(oracle::max_abs_diff(u, dense_reck(p)), 1e-12);
        }
    }
}

TEST(ReconstructUnitary, RejectsBadLengths) {
    UnitaryPhases p(3);
    p.phis.pop_back();
    EXPECT_THROW(reconstruct_unitary(p), InvalidInput);
    UnitaryPhases q(3);
    q.d[1] = 0;
    EXPECT_THROW(reconstruct_unitary(q), InvalidInput);
}

TEST(MeshOperator, TransposeIsAdjoint) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    std::normal_distribution<double> g(0.0, 1.0);
    UnitaryPhases p(7);
    for (double &x : p.phis) {
        x = ph(rng);
    }
    p.d[2] = -1;
    const MeshOperator op(p);
    Vector x(7), z(7);
    for (std::size_t i = 0; i < 7; ++i) {
        x[i] = g(rng);
        z[i] = g(rng);
    }
    Vector ux = x;
    op.apply(ux);
    Vector utz = z;
    op.apply_transpose(utz);
    EXPECT_NEAR(dot(z, ux), dot(utz, x), 1e-12);
}

TEST(DecomposeUnitary, IdentityAndSignFlip) {
    const UnitaryPhases id = decompose_unitary(Matrix::identity(4));
    for (double x : id.phis) {
        EXPECT_NEAR(std::remainder(x, kTwoPi), 0.0, 1e-15);
    }
    EXPECT_EQ(id.d, std::vector<int>(4, 1));

    const UnitaryPhases f = decompose_unitary(Matrix{{1.0, 0.0}, {0.0, -1.0}});
    EXPECT_NEAR(std::remainder(f.phis[0], kTwoPi), 0.0, 1e-15);
    EXPECT_EQ(f.d, (std::vector<int>{1, -1}));
}

TEST(DecomposeUnitary, RoundTripManySeeds) {
    for (std::size_t k : {2u, 3u, 8u, 9u, 16u}) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const Matrix u = oracle::random_orthogonal(k, 1000 * k + seed);
            const UnitaryPhases p = decompose_unitary(u);
            ASSERT_EQ(p.phis.size(), k * (k - 1) / 2);
            for (double x : p.phis) {
                ASSERT_GE(x, 0.0);
                ASSERT_LT(x, kTwoPi);
            }
            ASSERT_LE(oracle::max_abs_diff(reconstruct_unitary(p), u), 1e-8) << "k=" << k << " seed=" << seed;
        }
    }
}

TEST(DecomposeUnitary, ReflectionsRoundTrip) {
    Matrix u = oracle::random_orthogonal(9, 77);
    for (std::size_t i = 0; i < 9; ++i) {
        u(i, 0) = -u(i, 0);
    }
    EXPECT_LE(oracle::max_abs_diff(reconstruct_unitary(decompose_unitary(u)), u), 1e-8);
}

TEST(DecomposeUnitary, RejectsNonOrthogonal) {
    Matrix m = Matrix::identity(3);
    m(0, 1) = 0.1;
    try {
        decompose_unitary(m);
        FAIL() << "expected DecompositionFailure";
    } catch (const DecompositionFailure &e) {
        EXPECT_NEAR(e.residual(), std::sqrt(2.0) * 0.1, 1e-3);
    }
}

TEST(Svd, DiagonalExample) {
    const Matrix w{{3.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 1.0}};
    const SvdTriple t = svd(w);
    EXPECT_NEAR(t.sigma[0], 3.0, 1e-14);
    EXPECT_NEAR(t.sigma[1], 2.0, 1e-14);
    EXPECT_NEAR(t.sigma[2], 1.0, 1e-14);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(std::abs(t.u(i, i)), 1.0, 1e-14);
        EXPECT_NEAR(std::abs(t.v_t(i, i)), 1.0, 1e-14);
    }
}

TEST(Svd, ZeroMatrix) {
    const SvdTriple t = svd(Matrix(4, 4));
    for (double s : t.sigma) {
        EXPECT_EQ(s, 0.0);
    }
    EXPECT_LE(orthogonality_residual(t.u), 1e-12);
    EXPECT_LE(orthogonality_residual(t.v_t), 1e-12);
}

TEST(Svd, MatchesSymmetricEigenOracle) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::size_t k = 2 + seed % 15;
        const Matrix w = oracle::random_gaussian(k, k, 500 + seed);
        const SvdTriple t = svd(w);
        const Matrix rec = t.u * Matrix::diagonal(t.sigma) * t.v_t;
        EXPECT_LE(oracle::rel_frobenius(rec, w), 1e-8);
        EXPECT_LE(orthogonality_residual(t.u), 1e-9);
        EXPECT_LE(orthogonality_residual(t.v_t), 1e-9);
        const Eigen::MatrixXd e = oracle::to_eigen(w);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.transpose() * e);
        const Eigen::VectorXd ev = es.eigenvalues();  // ascending
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_GE(t.sigma[i], 0.0);
            if (i > 0) {
                EXPECT_LE(t.sigma[i], t.sigma[i - 1]);
            }
            EXPECT_NEAR(t.sigma[i] * t.sigma[i], ev(k - 1 - i), 1e-7 * std::max(1.0, ev(k - 1)));
        }
    }
}

TEST(Svd, RankDeficient) {
    Matrix w = oracle::random_gaussian(6, 6, 9);
    for (std::size_t j = 0; j < 6; ++j) {
        w(5, j) = w(0, j) + w(1, j);
        w(4, j) = 0.0;
    }
    const SvdTriple t = svd(w);
    EXPECT_LE(oracle::rel_frobenius(t.u * Matrix::diagonal(t.sigma) * t.v_t, w), 1e-8);
    EXPECT_LE(orthogonality_residual(t.u), 1e-9);
    EXPECT_NEAR(t.sigma[5], 0.0, 1e-10);
    EXPECT_NEAR(t.sigma[4], 0.0, 1e-10);
}

TEST(Svd, ZeroPaddedBlocksCompleteTheBasis) {
    // Edge blocks of a blocked layer carry zero rows or columns.
    for (std::size_t k : {2, 3, 4, 5, 8, 9}) {
        for (std::size_t valid = 1; valid < k; ++valid) {
            for (std::uint64_t s = 0; s < 5; ++s) {
                const Matrix g = oracle::random_gaussian(k, k, 50 * k + 7 * valid + s);
                Matrix cols(k, k), rows(k, k);
                for (std::size_t i = 0; i < k; ++i) {
                    for (std::size_t j = 0; j < valid; ++j) {
                        cols(i, j) = g(i, j);
                        rows(j, i) = g(j, i);
                    }
                }
                for (const Matrix *w : {&cols, &rows}) {
                    const SvdTriple t = svd(*w);
                    EXPECT_LE(oracle::max_abs_diff(t.u * Matrix::diagonal(t.sigma) * t.v_t, *w), 1e-10);
                    EXPECT_LE(orthogonality_residual(t.u), 1e-10);
                    EXPECT_LE(orthogonality_residual(t.v_t), 1e-10);
                }
            }
        }
    }
}
