#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ptcflow/blocked_linear.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/mapping.hpp"

using namespace ptcflow;

TEST(BlockedLinear, GridShape) {
    const BlockedLinear l(10, 7, 4, NoiseConfig::disabled(), 0);
    EXPECT_EQ(l.p(), 3u);
    EXPECT_EQ(l.q(), 2u);
    EXPECT_EQ(l.block_count(), 6u);
    EXPECT_EQ(l.valid_rows(0), 4u);
    EXPECT_EQ(l.valid_rows(2), 2u);
    EXPECT_EQ(l.valid_cols(1), 3u);
}

TEST(BlockedLinear, RejectsBadConfig) {
    EXPECT_THROW(BlockedLinear(4, 4, 1, NoiseConfig::disabled(), 0), ConfigError);
    EXPECT_THROW(BlockedLinear(4, 4, 33, NoiseConfig::disabled(), 0), ConfigError);
    EXPECT_THROW(BlockedLinear(0, 4, 4, NoiseConfig::disabled(), 0), ConfigError);
}

TEST(BlockedLinear, ForwardAndAdjointMatchProbe) {
    NoiseConfig cfg;
    cfg.seed = 8;
    const BlockedLinear l(11, 7, 4, cfg, 2);
    const Matrix w = l.probe_matrix();
    const Matrix x = oracle::random_gaussian(1, 7, 1);
    const Matrix dy = oracle::random_gaussian(1, 11, 2);
    const Vector y = l.forward(x.data());
    const Vector dx = l.adjoint(dy.data());
    const Vector y_ref = matvec(w, x.data());
    const Vector dx_ref = matvec_transposed(w, dy.data());
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_NEAR(y[i], y_ref[i], 1e-12);
    }
    for (std::size_t i = 0; i < dx.size(); ++i) {
        EXPECT_NEAR(dx[i], dx_ref[i], 1e-12);
    }
    EXPECT_THROW(l.forward(Vector(6)), ShapeError);
    EXPECT_THROW(l.adjoint(Vector(6)), ShapeError);
}

TEST(BlockedLinear, ForwardCostsOneCallPerBlock) {
    BlockedLinear l(10, 7, 4, NoiseConfig::disabled(), 0);
    l.reset_calls();
    l.forward(Vector(7, 1.0));
    EXPECT_EQ(l.calls(), 6u);
    l.adjoint(Vector(10, 1.0));
    EXPECT_EQ(l.calls(), 12u);
}

TEST(BlockedLinear, TargetBlockIsZeroPadded) {
    const BlockedLinear l(5, 5, 4, NoiseConfig::disabled(), 0);
    const Matrix w = oracle::random_gaussian(5, 5, 3);
    const Matrix t = l.target_block(w, 1, 1);
    EXPECT_EQ(t(0, 0), w(4, 4));
    EXPECT_EQ(t(0, 1), 0.0);
    EXPECT_EQ(t(3, 3), 0.0);
    EXPECT_THROW(l.target_block(Matrix(4, 5), 0, 0), ShapeError);
}

TEST(BlockedLinear, NoiseFreeMappingReproducesWeights) {
    BlockedLinear l(13, 10, 4, NoiseConfig::disabled(), 0);
    const Matrix w = oracle::random_gaussian(13, 10, 4);
    MappingOptions o;
    o.epochs = 0;
    parallel_map(l, w, o);
    EXPECT_LT(oracle::rel_frobenius(l.probe_matrix(), w), 1e-8);
}

TEST(BlockedLinear, BlocksDrawIndependentHiddenState) {
    NoiseConfig cfg;
    const BlockedLinear a(8, 8, 4, cfg, 0), b(8, 8, 4, cfg, 1);
    EXPECT_NE(a.probe_matrix().data()[0], b.probe_matrix().data()[0]);
    EXPECT_NE(a.block(0, 0).forward(Vector{1, 0, 0, 0}), a.block(0, 1).forward(Vector{1, 0, 0, 0}));
}
