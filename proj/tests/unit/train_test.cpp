#include <gtest/gtest.h>

#include <sstream>

#include "ptcflow/data.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/train.hpp"

using namespace ptcflow;

namespace {

DatasetSplit blobs(std::uint64_t seed = 3) {
    BlobsConfig c;
    c.seed = seed;
    return make_blobs(c);
}

Model blobs_mlp(std::uint64_t seed, const NoiseConfig &noise) {
    BuildOptions o;
    o.noise = noise;
    o.seed = seed;
    return build_model(ModelSpec::mlp(8, {16, 16}, 4, 8), o);
}

std::vector<PhaseProgram> programs(Model &m) {
    std::vector<PhaseProgram> out;
    for (PhotonicLayer *l : m.photonic_layers()) {
        for (const PTCBlock &b : l->hardware().blocks()) {
            out.push_back(b.program());
        }
    }
    return out;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
    TrainConfig c;
    c.epochs = 7;
    c.scheduler = "constant";
    EXPECT_EQ(train_config_from_json(to_json(c)), c);
    EXPECT_THROW(train_config_from_json({{"scheduler", "step"}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"lr", -1.0}}), ConfigError);
}

TEST(Trainer, DataSamplingSkipsAboutHalfTheBatches) {
    const auto d = blobs();
    Model m = blobs_mlp(1, NoiseConfig::disabled());
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 4;  // 100 batches per epoch
    SamplingPlan plan;
    plan.alpha_d = 0.5;
    Trainer t(m, tc, plan, 11);
    std::size_t skipped = 0, total = 0;
    for (std::size_t e = 0; e < tc.epochs; ++e) {
        const auto r = t.run_epoch(d.train);
        skipped += r.skipped_batches;
        total += 100;
    }
    const double rate = static_cast<double>(skipped) / static_cast<double>(total);
    EXPECT_NEAR(rate, 0.5, 0.05);
    EXPECT_EQ(t.steps(), total - skipped);
}

TEST(Trainer, UnitaryPhasesStayFrozen) {
    const auto d = blobs();
    Model m = blobs_mlp(2, NoiseConfig{});
    const auto before = programs(m);
    TrainConfig tc;
    tc.epochs = 2;
    SamplingPlan plan;
    plan.alpha_w = 0.6;
    plan.alpha_c = 0.6;
    Trainer t(m, tc, plan, 5);
    t.fit(d.train, nullptr);
    const auto after = programs(m);
    ASSERT_EQ(before.size(), after.size());
    bool sigma_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(before[i].phi_u.phis, after[i].phi_u.phis);
        EXPECT_EQ(before[i].phi_u.d, after[i].phi_u.d);
        EXPECT_EQ(before[i].phi_v.phis, after[i].phi_v.phis);
        EXPECT_EQ(before[i].phi_v.d, after[i].phi_v.d);
        sigma_moved = sigma_moved || before[i].phi_sigma != after[i].phi_sigma;
    }
    EXPECT_TRUE(sigma_moved);
}

TEST(Trainer, NoisyBlobsMlpLearns) {
    const auto d = blobs();
    Model m = blobs_mlp(4, NoiseConfig{});
    TrainConfig tc;
    tc.epochs = 100;
    tc.lr = 0.01;
    tc.batch_size = 32;
    SamplingPlan plan;
    plan.alpha_w = 0.6;
    Trainer t(m, tc, plan, 9);
    double best = 0.0;
    while (t.epoch() < tc.epochs && best < 0.9) {
        best = std::max(best, t.run_epoch(d.train).train_acc);
    }
    EXPECT_GE(best, 0.9);
    EXPECT_GE(evaluate(m, d.test), 0.85);
}

TEST(Trainer, DeterministicAcrossWorkers) {
    const auto d = blobs();
    std::string csv[2];
    for (std::size_t w : {1u, 3u}) {
        Model m = blobs_mlp(6, NoiseConfig{});
        TrainConfig tc;
        tc.epochs = 3;
        SamplingPlan plan;
        plan.alpha_w = 0.5;
        plan.alpha_c = 0.5;
        plan.alpha_d = 0.8;
        Trainer t(m, tc, plan, 21, w);
        std::ostringstream os;
        write_metrics_header(os);
        t.fit(d.train, &d.test, &os);
        csv[w == 1 ? 0 : 1] = os.str();
    }
    EXPECT_EQ(csv[0], csv[1]);
    EXPECT_EQ(std::count(csv[0].begin(), csv[0].end(), '\n'), 4);
}

TEST(Trainer, RejectsMismatchedData) {
    Model m = blobs_mlp(1, NoiseConfig::disabled());
    Dataset bad;
    bad.x = Matrix(3, 5);
    bad.y = {0, 1, 2};
    Trainer t(m, TrainConfig{}, SamplingPlan{}, 1);
    EXPECT_THROW(t.run_epoch(bad), ShapeError);
}
