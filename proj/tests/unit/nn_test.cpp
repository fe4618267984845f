#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/nn.hpp"
#include "ptcflow/optim.hpp"
#include "ptcflow/testing/probe.hpp"

using namespace ptcflow;

namespace {

// Sliding-window reference, independent of the im2col layout.
Matrix direct_conv(const Matrix &x, const Shape &in, const Matrix &w, const Vector &b, std::size_t kernel,
                   std::size_t stride, std::size_t pad) {
    const std::size_t co = w.rows();
    const std::size_t ho = (in.h + 2 * pad - kernel) / stride + 1;
    const std::size_t wo = (in.w + 2 * pad - kernel) / stride + 1;
    Matrix y(x.rows(), co * ho * wo);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t i = 0; i < ho; ++i) {
                for (std::size_t j = 0; j < wo; ++j) {
                    double s = b[o];
                    for (std::size_t c = 0; c < in.c; ++c) {
                        for (std::size_t a = 0; a < kernel; ++a) {
                            for (std::size_t e = 0; e < kernel; ++e) {
                                const long r = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long q = static_cast<long>(j * stride + e) - static_cast<long>(pad);
                                if (r < 0 || q < 0 || r >= static_cast<long>(in.h) || q >= static_cast<long>(in.w)) {
                                    continue;
                                }
                                s += w(o, (c * kernel + a) * kernel + e) *
                                     x(n, (c * in.h + static_cast<std::size_t>(r)) * in.w + static_cast<std::size_t>(q));
                            }
                        }
                    }
                    y(n, (o * ho + i) * wo + j) = s;
                }
            }
        }
    }
    return y;
}

std::vector<int> labels_for(std::size_t n, int classes, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> d(0, classes - 1);
    std::vector<int> y(n);
    for (int &v : y) {
        v = d(rng);
    }
    return y;
}

double loss_of(Model &m, const Matrix &x, const std::vector<int> &y) {
    return softmax_cross_entropy(m.forward(x), y).loss;
}

LayerSpec spec(const std::string &kind, std::size_t out = 0, std::size_t kernel = 1, std::size_t stride = 1,
               std::size_t pad = 0, bool photonic = false) {
    LayerSpec s;
    s.kind = kind;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = pad;
    s.photonic = photonic;
    return s;
}

// Small conv net that exercises every layer kind.
ModelSpec mixed_spec(bool photonic) {
    ModelSpec s;
    s.input = Shape{2, 6, 6};
    s.k = 4;
    s.classes = 3;
    LayerSpec res = spec("residual");
    res.body = {spec("conv2d", 3, 3, 1, 1, photonic), spec("relu")};
    s.layers = {spec("conv2d", 3, 3, 1, 1, photonic),
                spec("relu"),
                res,
                spec("avgpool", 0, 2),
                spec("conv2d", 4, 2, 1, 0, photonic),
                spec("adaptive_avgpool"),
                spec("flatten"),
                spec("linear", 3, 1, 1, 0, photonic)};
    s.layers[5].out_h = 1;
    s.layers[5].out_w = 1;
    return s;
}

}  // namespace

TEST(Im2col, PointwiseKernelIsReshape) {
    const Shape in{3, 2, 2};
    const Matrix x = oracle::random_gaussian(2, in.size(), 1);
    const Matrix cols = im2col(x, ConvGeometry{in, 1, 1, 0});
    ASSERT_EQ(cols.rows(), 8u);
    ASSERT_EQ(cols.cols(), 3u);
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t s = 0; s < 4; ++s) {
            for (std::size_t c = 0; c < 3; ++c) {
                EXPECT_EQ(cols(b * 4 + s, c), x(b, c * 4 + s));
            }
        }
    }
}

TEST(Im2col, ColumnCount) {
    const ConvGeometry g{Shape{1, 4, 4}, 3, 1, 0};
    EXPECT_EQ(g.h_out(), 2u);
    EXPECT_EQ(g.w_out(), 2u);
    const Matrix cols = im2col(oracle::random_gaussian(1, 16, 2), g);
    EXPECT_EQ(cols.rows(), 4u);
    EXPECT_EQ(cols.cols(), 9u);
    EXPECT_THROW(im2col(Matrix(1, 16), ConvGeometry{Shape{1, 4, 4}, 5, 1, 0}), ShapeError);
    EXPECT_THROW(im2col(Matrix(1, 15), g), ShapeError);
}

TEST(Im2col, ConvAsMatmulEqualsDirectConvolution) {
    struct Case {
        Shape in;
        std::size_t co, kernel, stride, pad;
    };
    for (const Case c : {Case{{2, 7, 6}, 3, 3, 1, 1}, Case{{3, 9, 9}, 4, 3, 2, 0}, Case{{1, 5, 5}, 2, 2, 2, 1}}) {
        Conv2d conv(c.in, c.co, c.kernel, c.stride, c.pad);
        conv.weight = oracle::random_gaussian(c.co, c.in.c * c.kernel * c.kernel, 3);
        const Matrix b = oracle::random_gaussian(1, c.co, 4);
        conv.bias.assign(b.data().begin(), b.data().end());
        const Matrix x = oracle::random_gaussian(3, c.in.size(), 5);
        const Matrix y = conv.forward(x, {});
        const Matrix ref = direct_conv(x, c.in, conv.weight, conv.bias, c.kernel, c.stride, c.pad);
        EXPECT_LT(oracle::max_abs_diff(y, ref), 1e-10);
    }
}

TEST(Im2col, Col2imIsTheAdjoint) {
    const ConvGeometry g{Shape{2, 5, 4}, 3, 2, 1};
    const Matrix x = oracle::random_gaussian(2, g.input.size(), 6);
    const Matrix c = oracle::random_gaussian(2 * g.columns(), g.patch(), 7);
    const double lhs = dot(im2col(x, g).data(), c.data());
    const double rhs = dot(x.data(), col2im(c, g, 2).data());
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Nn, ElectronicGradientsMatchFiniteDifferences) {
    const ModelSpec s = mixed_spec(false);
    Model m = build_model(s, BuildOptions{NoiseConfig::disabled(), 3});
    for (Param &p : m.params()) {
        for (double &v : p.value) {
            v += 0.05;  // non-zero biases
        }
    }
    const Matrix x = oracle::random_gaussian(4, s.input.size(), 8);
    const auto y = labels_for(4, 3, 9);
    m.zero_grad();
    const LossResult r = softmax_cross_entropy(m.forward(x), y);
    m.backward(r.grad);
    const double h = 1e-6;
    double worst = 0.0;
    for (Param &p : m.params()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = loss_of(m, x, y);
            p.value[i] = keep - h;
            const double down = loss_of(m, x, y);
            p.value[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - p.grad[i]) / std::max(1.0, std::abs(fd)));
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Nn, ZeroInputWithoutBiasGivesZeroLogits) {
    ModelSpec s = ModelSpec::mlp(5, {7}, 3, 4);
    for (auto &l : s.layers) {
        l.bias = false;
    }
    for (bool photonic : {false, true}) {
        Model m = build_model(photonic ? s : s.electronic(), BuildOptions{NoiseConfig{}, 1});
        const Matrix z = m.forward(Matrix(3, 5));
        for (double v : z.data()) {
            EXPECT_EQ(v, 0.0);
        }
    }
}

TEST(Nn, PhotonicModelMatchesElectronicTwin) {
    for (const ModelSpec &s : {ModelSpec::mlp(7, {10}, 4, 4), mixed_spec(true)}) {
        Model pm = build_model(s, BuildOptions{NoiseConfig::disabled(), 5});
        for (PhotonicLayer *l : pm.photonic_layers()) {
            for (double &b : l->bias()) {
                b = 0.1;
            }
        }
        Model twin = electronic_twin(s, pm);
        const Matrix x = oracle::random_gaussian(3, s.input.size(), 10);
        const auto y = labels_for(3, static_cast<int>(s.classes), 11);

        const LossResult rp = softmax_cross_entropy(pm.forward(x), y);
        const LossResult re = softmax_cross_entropy(twin.forward(x), y);
        EXPECT_NEAR(rp.loss, re.loss, 1e-6);
        pm.zero_grad();
        twin.zero_grad();
        pm.backward(rp.grad);
        twin.backward(re.grad);

        // The twin's weight gradient projected on each block's singular vectors is the Sigma gradient.
        std::size_t electronic_index = 0;
        const auto twin_params = twin.params();
        for (PhotonicLayer *l : pm.photonic_layers()) {
            const Param &wg = twin_params[electronic_index];
            const Param &bg = twin_params[electronic_index + 1];
            electronic_index += 2;
            const BlockedLinear &hw = l->hardware();
            const std::size_t k = hw.k();
            for (std::size_t bp = 0; bp < hw.p(); ++bp) {
                for (std::size_t bq = 0; bq < hw.q(); ++bq) {
                    const Matrix &u = ptcflow::testing::HiddenStateProbe::effective_u(hw.block(bp, bq));
                    const Matrix &vt = ptcflow::testing::HiddenStateProbe::effective_vt(hw.block(bp, bq));
                    for (std::size_t i = 0; i < k; ++i) {
                        double proj = 0.0;
                        for (std::size_t r = 0; r < hw.valid_rows(bp); ++r) {
                            for (std::size_t c = 0; c < hw.valid_cols(bq); ++c) {
                                proj += u(r, i) * wg.grad[(bp * k + r) * hw.cols() + bq * k + c] * vt(i, c);
                            }
                        }
                        EXPECT_NEAR(l->sigma_grad()[(bp * hw.q() + bq) * k + i], proj, 1e-6);
                    }
                }
            }
            for (std::size_t i = 0; i < bg.grad.size(); ++i) {
                EXPECT_NEAR(l->params()[1].grad[i], bg.grad[i], 1e-9);
            }
        }
    }
}

TEST(Nn, PhotonicInputGradientMatchesTwin) {
    ModelSpec s = ModelSpec::mlp(6, {9, 5}, 3, 4);
    Model pm = build_model(s, BuildOptions{NoiseConfig::disabled(), 2});
    Model twin = electronic_twin(s, pm);
    pm.layers()[0]->set_propagate(true);
    twin.layers()[0]->set_propagate(true);
    const Matrix x = oracle::random_gaussian(2, 6, 1);
    const Matrix dy = oracle::random_gaussian(2, 9, 2);
    pm.layers()[0]->forward(x, {});
    twin.layers()[0]->forward(x, {});
    const Matrix a = pm.layers()[0]->backward(dy, {});
    const Matrix b = twin.layers()[0]->backward(dy, {});
    EXPECT_LT(oracle::max_abs_diff(a, b), 1e-6);
}

TEST(Nn, FirstLayerSkipsFeedback) {
    ModelSpec s = ModelSpec::mlp(6, {9}, 3, 4);
    Model m = build_model(s, BuildOptions{NoiseConfig{}, 2});
    CostMeter meter;
    StepContext ctx;
    ctx.meter = &meter;
    const LossResult r = softmax_cross_entropy(m.forward(oracle::random_gaussian(2, 6, 1), ctx), std::vector<int>{0, 1});
    m.backward(r.grad, ctx);
    // Only the second layer (P = 1, Q = 3) runs feedback: 2 rows x 3 blocks.
    EXPECT_EQ(meter.energy_feedback, 6u);
}

TEST(Nn, SpecShapesAndValidation) {
    const ModelSpec cnn = ModelSpec::cnn_s();
    EXPECT_EQ(cnn.validate(), (Shape{10, 1, 1}));
    Model m = build_model(cnn, BuildOptions{NoiseConfig{}, 0});
    const auto dims = m.cost_dims();
    ASSERT_EQ(dims.size(), 3u);
    EXPECT_EQ(dims[0].h_out, 13u);
    EXPECT_EQ(dims[1].h_out, 6u);
    EXPECT_EQ(dims[2].c_in, 216u);
    EXPECT_EQ(dims[0].q(), 1u);
    EXPECT_EQ(dims[1].q(), 8u);
    EXPECT_EQ(ModelSpec::vgg8().validate(), (Shape{10, 1, 1}));

    ModelSpec bad = ModelSpec::mlp(4, {5}, 3);
    bad.classes = 4;
    EXPECT_THROW(bad.validate(), ShapeError);
    ModelSpec unflat = cnn;
    unflat.layers.erase(unflat.layers.begin() + 4);
    EXPECT_THROW(unflat.validate(), ShapeError);
    ModelSpec unknown = cnn;
    unknown.layers[1].kind = "gelu";
    EXPECT_THROW(unknown.validate(), ConfigError);
    ModelSpec big = cnn;
    big.layers[0].kernel = 40;
    EXPECT_THROW(big.validate(), ShapeError);
}

TEST(Nn, SpecJsonRoundTrip) {
    for (const ModelSpec &s : {ModelSpec::cnn_s(), ModelSpec::vgg8(), mixed_spec(true), ModelSpec::mlp(8, {16, 16}, 4)}) {
        EXPECT_EQ(model_spec_from_json(to_json(s)), s);
    }
    EXPECT_THROW(model_spec_from_json({{"layers", nlohmann::json::array()}}), ConfigError);
}

TEST(Nn, CheckpointRoundTrip) {
    const ModelSpec s = mixed_spec(true);
    Model a = build_model(s, BuildOptions{NoiseConfig{}, 1});
    Model b = build_model(s, BuildOptions{NoiseConfig{}, 2});
    const Matrix x = oracle::random_gaussian(2, s.input.size(), 3);
    EXPECT_GT(oracle::max_abs_diff(a.forward(x), b.forward(x)), 1e-3);
    b.load_state(nlohmann::json::parse(a.state().dump()));
    EXPECT_EQ(a.forward(x), b.forward(x));
    EXPECT_THROW(b.load_state(nlohmann::json::array()), InvalidInput);
}

TEST(Nn, CommitWritesMasterSigma) {
    Model m = build_model(ModelSpec::mlp(5, {}, 4, 4), BuildOptions{NoiseConfig::disabled(), 1});
    PhotonicLayer *l = m.photonic_layers()[0];
    for (double &s : l->sigma()) {
        s *= 0.5;
    }
    m.commit();
    const Vector realized = l->hardware().block(0, 0).read_sigma();
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(realized[i], l->sigma()[i], 1e-8);
    }
}

TEST(Nn, NonFiniteActivationsAbort) {
    Model m = build_model(ModelSpec::mlp(3, {}, 2, 4).electronic(), BuildOptions{NoiseConfig::disabled(), 1});
    Matrix x(1, 3);
    x(0, 1) = std::nan("");
    EXPECT_THROW(m.forward(x), NumericalAbort);
}

TEST(Nn, CrossEntropy) {
    Matrix z{{0.0, 0.0}, {10.0, -10.0}};
    const LossResult r = softmax_cross_entropy(z, std::vector<int>{1, 0});
    EXPECT_NEAR(r.loss, 0.5 * std::log(2.0) + 0.5 * std::log1p(std::exp(-20.0)), 1e-12);
    EXPECT_EQ(r.correct, 1u);
    EXPECT_NEAR(r.grad(0, 1), -0.25, 1e-12);
    EXPECT_THROW(softmax_cross_entropy(z, std::vector<int>{1, 2}), InvalidInput);
}

TEST(Optim, CosineEndpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.002, 1e-5), 0.002);
    EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 0.002, 1e-5), 1e-5);
    EXPECT_NEAR(cosine_lr(50, 100, 0.002, 0.0), 0.001, 1e-15);
}

TEST(Optim, FirstStepMagnitudeIsLearningRate) {
    Vector w{1.0, -2.0, 0.5};
    Vector g{0.3, -7.0, 1e-3};
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    opt.step({Param{w, g, true}}, 0.01);
    EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-8);
    EXPECT_NEAR(w[1], -2.0 + 0.01, 1e-8);
    EXPECT_NEAR(w[2], 0.5 - 0.01, 1e-7);
}

TEST(Optim, DecayOnlyShrinksMonotonically) {
    Vector w{1.0, -2.0, 0.5};
    Vector g(3, 0.0);
    AdamW opt(AdamWConfig{});
    double prev = norm(w);
    for (int t = 0; t < 50; ++t) {
        opt.step({Param{w, g, true}}, 0.1);
        const double n = norm(w);
        EXPECT_LT(n, prev);
        prev = n;
    }
    Vector frozen{1.0};
    Vector zero{0.0};
    AdamW opt2(AdamWConfig{});
    opt2.step({Param{frozen, zero, false}}, 0.1);
    EXPECT_EQ(frozen[0], 1.0);
    EXPECT_THROW(AdamW(AdamWConfig{1.0, 0.999, 1e-8, 0.0}), ConfigError);
}
