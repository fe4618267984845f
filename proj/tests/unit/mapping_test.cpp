#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/mapping.hpp"
#include "ptcflow/testing/probe.hpp"

using namespace ptcflow;
using ptcflow::testing::HiddenStateProbe;

namespace {

PTCBlock noisy_block(std::size_t k, std::uint64_t seed) {
    NoiseConfig cfg;
    cfg.seed = seed;
    return PTCBlock(k, cfg, 0);
}

ZooStageOptions short_stage(std::size_t epochs) {
    ZooStageOptions o;
    o.epochs = epochs;
    return o;
}

}  // namespace

TEST(CalibrationSigma, DistinctAndPositive) {
    const Vector s = calibration_sigma(9);
    ASSERT_EQ(s.size(), 9u);
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    EXPECT_DOUBLE_EQ(s[8], 1.0 / 9.0);
    for (std::size_t i = 1; i < s.size(); ++i) {
        EXPECT_LT(s[i], s[i - 1]);
    }
}

TEST(ProbeTransfer, MatchesRealizedMatrix) {
    const PTCBlock b = noisy_block(9, 2);
    const Matrix w = probe_transfer(b);
    EXPECT_LT(oracle::max_abs_diff(w, HiddenStateProbe::effective_w(b)), 1e-14);
    EXPECT_EQ(b.calls(), 9u);
}

TEST(IdentityCalibration, IdentityProgramIsAlreadyOptimal) {
    PTCBlock b(6, NoiseConfig::disabled(), 0);
    const CalibrationResult r = identity_calibrate(b, short_stage(0), 0);
    EXPECT_LT(r.loss_initial, 1e-12);
    EXPECT_LT(r.loss_final, 1e-12);
    EXPECT_EQ(HiddenStateProbe::mse_u(b), 0.0);
    EXPECT_EQ(HiddenStateProbe::mse_v(b), 0.0);
}

TEST(IdentityCalibration, SignFlipStateHasZeroLoss) {
    PTCBlock b(4, NoiseConfig::disabled(), 0);
    PhaseProgram p(4);
    p.phi_u.d = {1, -1, 1, -1};
    p.phi_v.d = {1, -1, 1, -1};
    b.set_program(p);
    const Vector sigma = calibration_sigma(4);
    b.set_sigma_values(sigma);
    EXPECT_LT(identity_calibration_loss(b, b.read_sigma()), 1e-12);
    EXPECT_EQ(HiddenStateProbe::mse_u(b), 0.0);
    EXPECT_EQ(HiddenStateProbe::sign_flip_u(b), SignFlipMatrix({1, -1, 1, -1}));
}

TEST(IdentityCalibration, RejectsDegenerateSigma) {
    PTCBlock b = noisy_block(3, 0);
    EXPECT_THROW(identity_calibrate(b, Vector{1.0, 0.5, 0.5}, short_stage(1), 0), PreconditionError);
    EXPECT_THROW(identity_calibrate(b, Vector{1.0, 0.0, 0.5}, short_stage(1), 0), PreconditionError);
    EXPECT_THROW(identity_calibrate(b, Vector{1.0, 0.5}, short_stage(1), 0), ShapeError);
}

TEST(IdentityCalibration, ReducesLossAndStoresCalibration) {
    PTCBlock b = noisy_block(6, 4);
    const CalibrationResult r = identity_calibrate(b, short_stage(60), 0);
    EXPECT_LT(r.loss_final, 0.5 * r.loss_initial);
    EXPECT_EQ(b.calibration_u(), b.program().phi_u);
    EXPECT_EQ(b.calibration_v(), b.program().phi_v);
    EXPECT_GT(r.evaluations, 0u);
    // Every objective evaluation is k probes, plus the two bracketing loss reads.
    EXPECT_EQ(r.calls, (r.evaluations + 2) * 6);
}

TEST(IdentityCalibration, PhasesStayWrapped) {
    PTCBlock b = noisy_block(5, 1);
    identity_calibrate(b, short_stage(20), 0);
    for (double v : b.program().phi_u.phis) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, kTwoPi);
    }
}

TEST(NormalizedDistance, ValidRegionOnly) {
    Matrix t(3, 3), r(3, 3);
    t(0, 0) = 2.0;
    r(0, 0) = 1.0;
    r(2, 2) = 100.0;
    EXPECT_DOUBLE_EQ(normalized_distance(r, t, 2, 2), 0.25);
    EXPECT_DOUBLE_EQ(normalized_distance(r, Matrix(3, 3), 1, 1), 1.0);
}

TEST(MapBlock, NoiseFreeIsExact) {
    PTCBlock b(9, NoiseConfig::disabled(), 0);
    const Matrix target = oracle::random_gaussian(9, 9, 17);
    MappingOptions o;
    o.epochs = 2;
    const BlockMappingRecord rec = map_block(b, target, o, 0, 9, 9);
    EXPECT_LE(rec.dist_init, 1e-6);
    EXPECT_LE(rec.dist_after, 1e-6);
    EXPECT_TRUE(rec.converged);
}

TEST(MapBlock, ZerothOrderThenProjectionImproves) {
    int improved_zo = 0;
    int improved_osp = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        PTCBlock b = noisy_block(9, seed);
        identity_calibrate(b, short_stage(100), 0);
        const Matrix target = oracle::random_gaussian(9, 9, 100 + seed);
        MappingOptions o;
        o.epochs = 40;
        o.noisy_osp_passes = false;
        const BlockMappingRecord rec = map_block(b, target, o, 0, 9, 9);
        improved_zo += rec.dist_before < rec.dist_init;
        improved_osp += rec.dist_after <= rec.dist_before * (1.0 + 1e-6);
    }
    EXPECT_EQ(improved_zo, 4);
    EXPECT_EQ(improved_osp, 4);
}

TEST(MapBlock, ZeroTargetGoesStraightToProjection) {
    PTCBlock b = noisy_block(4, 0);
    MappingOptions o;
    const BlockMappingRecord rec = map_block(b, Matrix(4, 4), o, 0, 4, 4);
    EXPECT_EQ(rec.evaluations, 0u);
    // 16-bit attenuators leave cos(Q(pi/2)) slightly off zero.
    EXPECT_LT(rec.dist_after, 1e-8);
}

TEST(MapBlock, RejectsBadTargets) {
    PTCBlock b = noisy_block(4, 0);
    MappingOptions o;
    EXPECT_THROW(map_block(b, Matrix(3, 3), o, 0, 3, 3), ShapeError);
    Matrix bad(4, 4);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(map_block(b, bad, o, 0, 4, 4), InvalidInput);
}

TEST(ParallelMap, WorkerCountDoesNotChangeResults) {
    NoiseConfig cfg;
    cfg.seed = 3;
    const Matrix target = oracle::random_gaussian(13, 20, 5);
    MappingOptions o;
    o.epochs = 3;
    BlockedLinear a(13, 20, 9, cfg, 1), b(13, 20, 9, cfg, 1);
    calibrate_layer(a, o);
    ZooStageOptions ic = o;
    ic.workers = 3;
    calibrate_layer(b, ic);
    o.workers = 1;
    const MappingReport ra = parallel_map(a, target, o);
    o.workers = 3;
    const MappingReport rb = parallel_map(b, target, o);
    EXPECT_EQ(ra.to_json().dump(), rb.to_json().dump());
    EXPECT_EQ(a.probe_matrix().data().size(), 13u * 20u);
    EXPECT_EQ(oracle::max_abs_diff(a.probe_matrix(), b.probe_matrix()), 0.0);
}

TEST(MappingReport, CsvAndJson) {
    MappingReport r;
    r.blocks.push_back({0, 1, 0.5, 0.4, 0.4, 0.2, true, 10, 30, true});
    r.blocks.push_back({1, 0, 0.7, 0.6, 0.6, 0.4, true, 12, 40, true});
    std::ostringstream os;
    r.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "row,col,dist_before,dist_after,calls");
    EXPECT_NE(os.str().find("0,1,0.40000000000000002,0.20000000000000001,30"), std::string::npos);
    EXPECT_DOUBLE_EQ(r.mean_dist_after(), 0.3);
    EXPECT_EQ(r.total_calls(), 70u);
    EXPECT_EQ(r.to_json().at("blocks").size(), 2u);
}

TEST(MapBlock, ProjectionGuardNeverLosesGround) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Matrix target = oracle::random_gaussian(9, 9, 300 + seed);
        MappingOptions o;
        o.epochs = 10;
        PTCBlock guarded = noisy_block(9, seed);
        identity_calibrate(guarded, short_stage(20), 0);
        PTCBlock raw = guarded;
        const BlockMappingRecord g = map_block(guarded, target, o, 0, 9, 9);
        EXPECT_LE(g.dist_after, g.dist_before * (1.0 + 1e-9));
        EXPECT_EQ(g.osp_kept, g.dist_after == g.dist_osp);
        o.osp_guard = false;
        const BlockMappingRecord r = map_block(raw, target, o, 0, 9, 9);
        EXPECT_EQ(r.dist_after, r.dist_osp);
        EXPECT_EQ(r.dist_osp, g.dist_osp);
    }
}
