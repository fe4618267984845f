#include "ptcflow/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ptcflow/errors.hpp"
#include "ptcflow/phase_program.hpp"
#include "ptcflow/rng.hpp"
#include "ptcflow/subspace.hpp"

namespace ptcflow {

namespace {

Vector column_sums(const Matrix &m) {
    Vector s(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            s[c] += row[c];
        }
    }
    return s;
}

void add_bias(Matrix &y, const Vector &b) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t c = 0; c < b.size(); ++c) {
            row[c] += b[c];
        }
    }
}

void accumulate(std::span<double> into, std::span<const double> from) {
    for (std::size_t i = 0; i < into.size(); ++i) {
        into[i] += from[i];
    }
}

void check_input(const Matrix &x, const Shape &s, const std::string &kind) {
    if (x.cols() != s.size()) {
        throw ShapeError(kind + ": input has " + std::to_string(x.cols()) + " features, expected " +
                         std::to_string(s.size()) + " (" + to_string(s) + ")");
    }
}

nlohmann::json to_array(std::span<const double> v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); }

void from_array(const nlohmann::json &j, std::span<double> out, const char *what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != out.size()) {
        throw InvalidInput(std::string("checkpoint: '") + what + "' has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(out.size()));
    }
    std::copy(v.begin(), v.end(), out.begin());
}

Matrix he_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
    Matrix w(rows, cols);
    for (double &v : w.data()) {
        v = g(rng);
    }
    return w;
}

}  // namespace

void Layer::zero_grad() {
    for (Param &p : params()) {
        std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }
}

// ---------------------------------------------------------------------------------------------
// Electronic layers

Linear::Linear(std::size_t in, std::size_t out, bool bias)
    : Layer(Shape{in, 1, 1}, Shape{out, 1, 1}), weight(out, in), bias(out, 0.0), has_bias_(bias), grad_w_(out, in),
      grad_b_(out, 0.0) {
    if (in == 0 || out == 0) {
        throw ConfigError("linear: features must be positive");
    }
}

Matrix Linear::forward(const Matrix &x, const StepContext &) {
    check_input(x, in_, "linear");
    x_ = x;
    Matrix y = matmul_nt(x, weight);
    if (has_bias_) {
        add_bias(y, bias);
    }
    return y;
}

Matrix Linear::backward(const Matrix &dy, const StepContext &) {
    accumulate(grad_w_.data(), matmul_tn(dy, x_).data());
    if (has_bias_) {
        accumulate(grad_b_, column_sums(dy));
    }
    return propagate_ ? matmul_nn(dy, weight) : Matrix();
}

std::vector<Param> Linear::params() {
    std::vector<Param> p{{weight.data(), grad_w_.data(), true}};
    if (has_bias_) {
        p.push_back({bias, grad_b_, true});
    }
    return p;
}

nlohmann::json Linear::state() const {
    return {{"kind", kind()}, {"weight", to_array(weight.data())}, {"bias", to_array(bias)}};
}

void Linear::load_state(const nlohmann::json &j) {
    from_array(j.at("weight"), weight.data(), "weight");
    from_array(j.at("bias"), bias, "bias");
}

Conv2d::Conv2d(Shape in, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
               bool bias)
    : Layer(in, in), geo_{in, kernel, stride, padding}, has_bias_(bias) {
    geo_.validate();
    if (out_channels == 0) {
        throw ConfigError("conv2d: output channels must be positive");
    }
    out_ = Shape{out_channels, geo_.h_out(), geo_.w_out()};
    weight = Matrix(out_channels, geo_.patch());
    grad_w_ = Matrix(out_channels, geo_.patch());
    this->bias.assign(out_channels, 0.0);
    grad_b_.assign(out_channels, 0.0);
}

Matrix Conv2d::forward(const Matrix &x, const StepContext &) {
    check_input(x, in_, "conv2d");
    cols_ = im2col(x, geo_);
    Matrix rows = matmul_nt(cols_, weight);
    if (has_bias_) {
        add_bias(rows, bias);
    }
    return rows_to_channels(rows, x.rows(), geo_.columns());
}

Matrix Conv2d::backward(const Matrix &dy, const StepContext &) {
    const Matrix rows = channels_to_rows(dy, out_.c, geo_.columns());
    accumulate(grad_w_.data(), matmul_tn(rows, cols_).data());
    if (has_bias_) {
        accumulate(grad_b_, column_sums(rows));
    }
    if (!propagate_) {
        return {};
    }
    return col2im(matmul_nn(rows, weight), geo_, dy.rows());
}

std::vector<Param> Conv2d::params() {
    std::vector<Param> p{{weight.data(), grad_w_.data(), true}};
    if (has_bias_) {
        p.push_back({bias, grad_b_, true});
    }
    return p;
}

nlohmann::json Conv2d::state() const {
    return {{"kind", kind()}, {"weight", to_array(weight.data())}, {"bias", to_array(bias)}};
}

void Conv2d::load_state(const nlohmann::json &j) {
    from_array(j.at("weight"), weight.data(), "weight");
    from_array(j.at("bias"), bias, "bias");
}

// ---------------------------------------------------------------------------------------------
// Photonic layers

PhotonicLayer::PhotonicLayer(Shape in, Shape out, std::size_t rows, std::size_t cols, std::size_t k,
                             const NoiseConfig &cfg, std::uint64_t layer_id, bool bias)
    : Layer(in, out), hw_(rows, cols, k, cfg, layer_id), id_(layer_id), has_bias_(bias),
      sigma_(hw_.block_count() * k, 0.0), grad_sigma_(hw_.block_count() * k, 0.0), bias_(rows, 0.0),
      grad_bias_(rows, 0.0) {
    sync_sigma();
}

void PhotonicLayer::program_exact(const Matrix &w) {
    if (w.rows() != hw_.rows() || w.cols() != hw_.cols()) {
        throw ShapeError("program_exact: weight must be " + std::to_string(hw_.rows()) + " x " +
                         std::to_string(hw_.cols()));
    }
    for (std::size_t bp = 0; bp < hw_.p(); ++bp) {
        for (std::size_t bq = 0; bq < hw_.q(); ++bq) {
            hw_.block(bp, bq).set_program(PhaseProgram::from_matrix(hw_.target_block(w, bp, bq)));
        }
    }
    sync_sigma();
}

void PhotonicLayer::sync_sigma() {
    const std::size_t k = hw_.k();
    for (std::size_t idx = 0; idx < hw_.block_count(); ++idx) {
        const Vector s = hw_.blocks()[idx].read_sigma();
        std::copy(s.begin(), s.end(), sigma_.begin() + static_cast<std::ptrdiff_t>(idx * k));
    }
}

std::vector<Param> PhotonicLayer::params() {
    std::vector<Param> p{{sigma_, grad_sigma_, true}};
    if (has_bias_) {
        p.push_back({bias_, grad_bias_, true});
    }
    return p;
}

void PhotonicLayer::commit() {
    const std::size_t k = hw_.k();
    for (std::size_t idx = 0; idx < hw_.block_count(); ++idx) {
        hw_.blocks()[idx].set_sigma_values(std::span<const double>(sigma_).subspan(idx * k, k));
    }
}

nlohmann::json PhotonicLayer::state() const {
    nlohmann::json blocks = nlohmann::json::array();
    for (const PTCBlock &b : hw_.blocks()) {
        blocks.push_back(to_json(b));
    }
    return {{"kind", kind()},
            {"layer_id", id_},
            {"rows", hw_.rows()},
            {"cols", hw_.cols()},
            {"k", hw_.k()},
            {"blocks", blocks},
            {"sigma", to_array(sigma_)},
            {"bias", to_array(bias_)}};
}

void PhotonicLayer::load_state(const nlohmann::json &j) {
    const auto &blocks = j.at("blocks");
    if (blocks.size() != hw_.block_count()) {
        throw InvalidInput("checkpoint: layer " + std::to_string(id_) + " has " + std::to_string(blocks.size()) +
                          " blocks, expected " + std::to_string(hw_.block_count()));
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        hw_.blocks()[i].set_program(phase_program_from_json(blocks[i]));
    }
    from_array(j.at("sigma"), sigma_, "sigma");
    from_array(j.at("bias"), bias_, "bias");
}

Matrix PhotonicLayer::forward_rows(const Matrix &x, const StepContext &ctx) const {
    Matrix y = photonic_forward(hw_, x, ctx.meter, ctx.workers);
    if (has_bias_) {
        add_bias(y, bias_);
    }
    return y;
}

Matrix PhotonicLayer::backward_rows(const Matrix &x, const Matrix &dy, std::size_t positions,
                                    const StepContext &ctx) {
    const SamplingPlan *plan = ctx.plan;
    if (has_bias_) {
        accumulate(grad_bias_, column_sums(dy));
    }

    std::vector<std::uint8_t> keep;
    double col_scale = 1.0;
    if (plan != nullptr && plan->alpha_c < 1.0) {
        Rng rng(derive_seed(ctx.seed, {id_, 2}));
        const auto mask = build_column_mask(positions, plan->alpha_c, rng);
        keep.resize(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            keep[r] = mask[r % positions];
        }
        const auto kept = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
        col_scale = sample_scale(plan->column_norm, kept, positions);
    }
    const Matrix g = subspace_weight_grad(hw_, x, dy, keep, col_scale, ctx.meter, ctx.workers);
    accumulate(grad_sigma_, g.data());

    if (!propagate_) {
        return {};
    }
    FeedbackMask mask = FeedbackMask::dense(hw_.q(), hw_.p());
    if (plan != nullptr) {
        Rng rng(derive_seed(ctx.seed, {id_, 1}));
        mask = build_feedback_mask(block_norm_grid(hw_), *plan, rng);
    }
    return sparse_error_feedback(hw_, dy, mask, ctx.meter, ctx.workers);
}

PhotonicLinear::PhotonicLinear(std::size_t in, std::size_t out, std::size_t k, const NoiseConfig &cfg,
                               std::uint64_t layer_id, bool bias)
    : PhotonicLayer(Shape{in, 1, 1}, Shape{out, 1, 1}, out, in, k, cfg, layer_id, bias) {}

LayerDims PhotonicLinear::dims() const { return LayerDims::linear(out_.c, in_.c, hardware().k()); }

Matrix PhotonicLinear::forward(const Matrix &x, const StepContext &ctx) {
    check_input(x, in_, kind());
    x_ = x;
    return forward_rows(x, ctx);
}

Matrix PhotonicLinear::backward(const Matrix &dy, const StepContext &ctx) { return backward_rows(x_, dy, 1, ctx); }

namespace {

ConvGeometry checked_geometry(Shape in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    ConvGeometry g{in, kernel, stride, padding};
    g.validate();
    return g;
}

}  // namespace

PhotonicConv2d::PhotonicConv2d(Shape in, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t k, const NoiseConfig &cfg, std::uint64_t layer_id,
                               bool bias)
    : PhotonicLayer(in,
                    Shape{out_channels, checked_geometry(in, kernel, stride, padding).h_out(),
                          checked_geometry(in, kernel, stride, padding).w_out()},
                    out_channels, in.c * kernel * kernel, k, cfg, layer_id, bias),
      geo_(checked_geometry(in, kernel, stride, padding)) {}

LayerDims PhotonicConv2d::dims() const {
    return LayerDims::conv(out_.c, in_.c, geo_.kernel, geo_.stride, geo_.padding, in_.h, in_.w, hardware().k());
}

Matrix PhotonicConv2d::forward(const Matrix &x, const StepContext &ctx) {
    check_input(x, in_, kind());
    cols_ = im2col(x, geo_);
    return rows_to_channels(forward_rows(cols_, ctx), x.rows(), geo_.columns());
}

Matrix PhotonicConv2d::backward(const Matrix &dy, const StepContext &ctx) {
    const Matrix rows = channels_to_rows(dy, out_.c, geo_.columns());
    const Matrix dcols = backward_rows(cols_, rows, geo_.columns(), ctx);
    if (!propagate_) {
        return {};
    }
    return col2im(dcols, geo_, dy.rows());
}

// ---------------------------------------------------------------------------------------------
// Parameter-free layers

Matrix ReLU::forward(const Matrix &x, const StepContext &) {
    check_input(x, in_, "relu");
    y_ = x;
    for (double &v : y_.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    return y_;
}

Matrix ReLU::backward(const Matrix &dy, const StepContext &) {
    Matrix dx = dy;
    const auto y = y_.data();
    auto d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(y[i] > 0.0)) {
            d[i] = 0.0;
        }
    }
    return dx;
}

AvgPool2d::AvgPool2d(Shape in, std::size_t kernel) : Layer(in, in), kernel_(kernel) {
    if (kernel == 0 || kernel > in.h || kernel > in.w) {
        throw ShapeError("avgpool: kernel " + std::to_string(kernel) + " does not fit " + to_string(in));
    }
    out_ = Shape{in.c, in.h / kernel, in.w / kernel};
}

Matrix AvgPool2d::forward(const Matrix &x, const StepContext &) {
    check_input(x, in_, "avgpool");
    Matrix y(x.rows(), out_.size());
    const double inv = 1.0 / static_cast<double>(kernel_ * kernel_);
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const auto in = x.row(b);
        auto out = y.row(b);
        for (std::size_t c = 0; c < out_.c; ++c) {
            for (std::size_t oh = 0; oh < out_.h; ++oh) {
                for (std::size_t ow = 0; ow < out_.w; ++ow) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < kernel_; ++i) {
                        for (std::size_t j = 0; j < kernel_; ++j) {
                            s += in[(c * in_.h + oh * kernel_ + i) * in_.w + ow * kernel_ + j];
                        }
                    }
                    out[(c * out_.h + oh) * out_.w + ow] = s * inv;
                }
            }
        }
    }
    return y;
}

Matrix AvgPool2d::backward(const Matrix &dy, const StepContext &) {
    Matrix dx(dy.rows(), in_.size());
    const double inv = 1.0 / static_cast<double>(kernel_ * kernel_);
    for (std::size_t b = 0; b < dy.rows(); ++b) {
        const auto g = dy.row(b);
        auto out = dx.row(b);
        for (std::size_t c = 0; c < out_.c; ++c) {
            for (std::size_t oh = 0; oh < out_.h; ++oh) {
                for (std::size_t ow = 0; ow < out_.w; ++ow) {
                    const double v = g[(c * out_.h + oh) * out_.w + ow] * inv;
                    for (std::size_t i = 0; i < kernel_; ++i) {
                        for (std::size_t j = 0; j < kernel_; ++j) {
                            out[(c * in_.h + oh * kernel_ + i) * in_.w + ow * kernel_ + j] += v;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

AdaptiveAvgPool2d::AdaptiveAvgPool2d(Shape in, std::size_t out_h, std::size_t out_w) : Layer(in, in) {
    if (out_h == 0 || out_w == 0 || out_h > in.h || out_w > in.w) {
        throw ShapeError("adaptive_avgpool: cannot pool " + to_string(in) + " to " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    }
    out_ = Shape{in.c, out_h, out_w};
    auto bins = [](std::size_t n, std::size_t m) {
        std::vector<Bin> v;
        for (std::size_t i = 0; i < m; ++i) {
            v.push_back({i * n / m, ((i + 1) * n + m - 1) / m});
        }
        return v;
    };
    rows_ = bins(in.h, out_h);
    cols_ = bins(in.w, out_w);
}

Matrix AdaptiveAvgPool2d::forward(const Matrix &x, const StepContext &) {
    check_input(x, in_, "adaptive_avgpool");
    Matrix y(x.rows(), out_.size());
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const auto in = x.row(b);
        auto out = y.row(b);
        for (std::size_t c = 0; c < out_.c; ++c) {
            for (std::size_t oh = 0; oh < out_.h; ++oh) {
                for (std::size_t ow = 0; ow < out_.w; ++ow) {
                    const Bin r = rows_[oh], q = cols_[ow];
                    double s = 0.0;
                    for (std::size_t i = r.begin; i < r.end; ++i) {
                        for (std::size_t j = q.begin; j < q.end; ++j) {
                            s += in[(c * in_.h + i) * in_.w + j];
                        }
                    }
                    out[(c * out_.h + oh) * out_.w + ow] =
                        s / static_cast<double>((r.end - r.begin) * (q.end - q.begin));
                }
            }
        }
    }
    return y;
}

Matrix AdaptiveAvgPool2d::backward(const Matrix &dy, const StepContext &) {
    Matrix dx(dy.rows(), in_.size());
    for (std::size_t b = 0; b < dy.rows(); ++b) {
        const auto g = dy.row(b);
        auto out = dx.row(b);
        for (std::size_t c = 0; c < out_.c; ++c) {
            for (std::size_t oh = 0; oh < out_.h; ++oh) {
                for (std::size_t ow = 0; ow < out_.w; ++ow) {
                    const Bin r = rows_[oh], q = cols_[ow];
                    const double v = g[(c * out_.h + oh) * out_.w + ow] /
                                     static_cast<double>((r.end - r.begin) * (q.end - q.begin));
                    for (std::size_t i = r.begin; i < r.end; ++i) {
                        for (std::size_t j = q.begin; j < q.end; ++j) {
                            out[(c * in_.h + i) * in_.w + j] += v;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

Residual::Residual(Shape s, std::vector<std::unique_ptr<Layer>> body) : Layer(s, s), body_(std::move(body)) {
    Shape cur = s;
    for (const auto &l : body_) {
        if (!(l->input_shape() == cur)) {
            throw ShapeError("residual: body layer expects " + to_string(l->input_shape()) + ", gets " +
                             to_string(cur));
        }
        cur = l->output_shape();
    }
    if (!(cur == s)) {
        throw ShapeError("residual: body maps " + to_string(s) + " to " + to_string(cur));
    }
}

Matrix Residual::forward(const Matrix &x, const StepContext &ctx) {
    Matrix h = x;
    for (auto &l : body_) {
        h = l->forward(h, ctx);
    }
    accumulate(h.data(), x.data());
    return h;
}

Matrix Residual::backward(const Matrix &dy, const StepContext &ctx) {
    Matrix g = dy;
    for (auto it = body_.rbegin(); it != body_.rend(); ++it) {
        g = (*it)->backward(g, ctx);
    }
    accumulate(g.data(), dy.data());
    return g;
}

std::vector<Param> Residual::params() {
    std::vector<Param> out;
    for (auto &l : body_) {
        for (const Param &p : l->params()) {
            out.push_back(p);
        }
    }
    return out;
}

void Residual::commit() {
    for (auto &l : body_) {
        l->commit();
    }
}

nlohmann::json Residual::state() const {
    nlohmann::json body = nlohmann::json::array();
    for (const auto &l : body_) {
        body.push_back(l->state());
    }
    return {{"kind", kind()}, {"body", body}};
}

void Residual::load_state(const nlohmann::json &j) {
    const auto &body = j.at("body");
    if (body.size() != body_.size()) {
        throw InvalidInput("checkpoint: residual body length mismatch");
    }
    for (std::size_t i = 0; i < body_.size(); ++i) {
        body_[i]->load_state(body[i]);
    }
}

// ---------------------------------------------------------------------------------------------
// Specs and model

namespace {

struct BuildState {
    const BuildOptions *opts = nullptr;  // null: shape check only
    std::size_t k = 9;
    std::uint64_t next_id = 0;
};

std::vector<std::unique_ptr<Layer>> build_chain(const std::vector<LayerSpec> &specs, Shape &shape, BuildState &st,
                                                const std::string &where);

std::unique_ptr<Layer> build_one(const LayerSpec &s, Shape &shape, BuildState &st, const std::string &where) {
    std::unique_ptr<Layer> layer;
    if (s.kind == "linear" || s.kind == "conv2d") {
        if (s.out == 0) {
            throw ConfigError(where + ": 'out' must be positive");
        }
        const std::uint64_t id = st.next_id++;
        if (s.kind == "linear") {
            if (shape.h != 1 || shape.w != 1) {
                throw ShapeError(where + ": linear needs a flat input, got " + to_string(shape));
            }
            if (s.photonic) {
                layer = std::make_unique<PhotonicLinear>(shape.c, s.out, st.k,
                                                         st.opts ? st.opts->noise : NoiseConfig::disabled(), id,
                                                         s.bias);
            } else {
                layer = std::make_unique<Linear>(shape.c, s.out, s.bias);
            }
        } else {
            ConvGeometry g{shape, s.kernel, s.stride, s.padding};
            try {
                g.validate();
            } catch (const ShapeError &e) {
                throw ShapeError(where + ": " + e.what());
            }
            if (s.photonic) {
                layer = std::make_unique<PhotonicConv2d>(shape, s.out, s.kernel, s.stride, s.padding, st.k,
                                                         st.opts ? st.opts->noise : NoiseConfig::disabled(), id,
                                                         s.bias);
            } else {
                layer = std::make_unique<Conv2d>(shape, s.out, s.kernel, s.stride, s.padding, s.bias);
            }
        }
        if (st.opts != nullptr) {
            const std::size_t fan_in = s.kind == "linear" ? shape.c : shape.c * s.kernel * s.kernel;
            const Matrix w = he_normal(s.out, fan_in, derive_seed(st.opts->seed, {tag(SeedStage::init), id}));
            if (auto *p = dynamic_cast<PhotonicLayer *>(layer.get())) {
                p->program_exact(w);
            } else if (auto *l = dynamic_cast<Linear *>(layer.get())) {
                l->weight = w;
            } else if (auto *c = dynamic_cast<Conv2d *>(layer.get())) {
                c->weight = w;
            }
        }
    } else if (s.kind == "relu") {
        layer = std::make_unique<ReLU>(shape);
    } else if (s.kind == "avgpool") {
        layer = std::make_unique<AvgPool2d>(shape, s.kernel);
    } else if (s.kind == "adaptive_avgpool") {
        layer = std::make_unique<AdaptiveAvgPool2d>(shape, s.out_h, s.out_w);
    } else if (s.kind == "flatten") {
        layer = std::make_unique<Flatten>(shape);
    } else if (s.kind == "residual") {
        Shape inner = shape;
        auto body = build_chain(s.body, inner, st, where + ".body");
        layer = std::make_unique<Residual>(shape, std::move(body));
    } else {
        throw ConfigError(where + ": unknown layer kind '" + s.kind + "'");
    }
    shape = layer->output_shape();
    return layer;
}

std::vector<std::unique_ptr<Layer>> build_chain(const std::vector<LayerSpec> &specs, Shape &shape, BuildState &st,
                                                const std::string &where) {
    std::vector<std::unique_ptr<Layer>> out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        out.push_back(build_one(specs[i], shape, st, where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

nlohmann::json layer_spec_json(const LayerSpec &s) {
    nlohmann::json j{{"kind", s.kind},         {"out", s.out},   {"kernel", s.kernel}, {"stride", s.stride},
                     {"padding", s.padding},   {"photonic", s.photonic}, {"bias", s.bias}, {"out_h", s.out_h},
                     {"out_w", s.out_w}};
    if (!s.body.empty()) {
        nlohmann::json body = nlohmann::json::array();
        for (const auto &b : s.body) {
            body.push_back(layer_spec_json(b));
        }
        j["body"] = body;
    }
    return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json &j) {
    LayerSpec s;
    s.kind = j.at("kind").get<std::string>();
    s.out = j.value("out", s.out);
    s.kernel = j.value("kernel", s.kernel);
    s.stride = j.value("stride", s.stride);
    s.padding = j.value("padding", s.padding);
    s.photonic = j.value("photonic", s.photonic);
    s.bias = j.value("bias", s.bias);
    s.out_h = j.value("out_h", s.out_h);
    s.out_w = j.value("out_w", s.out_w);
    if (j.contains("body")) {
        for (const auto &b : j.at("body")) {
            s.body.push_back(layer_spec_from_json(b));
        }
    }
    return s;
}

LayerSpec weight_layer(const std::string &kind, std::size_t out, std::size_t kernel = 1, std::size_t stride = 1,
                       std::size_t padding = 0) {
    LayerSpec s;
    s.kind = kind;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec simple(const std::string &kind, std::size_t kernel = 1) {
    LayerSpec s;
    s.kind = kind;
    s.kernel = kernel;
    return s;
}

void clear_photonic(std::vector<LayerSpec> &layers) {
    for (auto &l : layers) {
        l.photonic = false;
        clear_photonic(l.body);
    }
}

}  // namespace

Shape ModelSpec::validate() const {
    if (input.size() == 0) {
        throw ConfigError("model: input shape must be positive");
    }
    if (k < 2 || k > 32) {
        throw ConfigError("model: block size k must lie in [2, 32]");
    }
    BuildState st;
    st.k = k;
    Shape s = input;
    build_chain(layers, s, st, "model.layers");
    if (s.h != 1 || s.w != 1 || s.c != classes) {
        throw ShapeError("model: output shape " + to_string(s) + " does not match " + std::to_string(classes) +
                         " classes");
    }
    return s;
}

std::vector<LayerDims> ModelSpec::cost_dims() const {
    validate();
    BuildState st;
    st.k = k;
    Shape s = input;
    Model m(input, build_chain(layers, s, st, "model.layers"));
    return m.cost_dims();
}

ModelSpec ModelSpec::electronic() const {
    ModelSpec s = *this;
    clear_photonic(s.layers);
    return s;
}

ModelSpec ModelSpec::mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes, std::size_t k) {
    ModelSpec s;
    s.input = Shape{in, 1, 1};
    s.k = k;
    s.classes = classes;
    for (std::size_t h : hidden) {
        s.layers.push_back(weight_layer("linear", h));
        s.layers.push_back(simple("relu"));
    }
    s.layers.push_back(weight_layer("linear", classes));
    return s;
}

ModelSpec ModelSpec::cnn_s(std::size_t k, std::size_t classes) {
    ModelSpec s;
    s.input = Shape{1, 28, 28};
    s.k = k;
    s.classes = classes;
    s.layers = {weight_layer("conv2d", 8, 3, 2), simple("relu"), weight_layer("conv2d", 6, 3, 2),
                simple("relu"), simple("flatten"), weight_layer("linear", classes)};
    return s;
}

ModelSpec ModelSpec::vgg8(std::size_t classes, std::size_t k) {
    ModelSpec s;
    s.input = Shape{3, 32, 32};
    s.k = k;
    s.classes = classes;
    const std::size_t widths[] = {64, 64, 128, 128, 256, 256};
    for (std::size_t i = 0; i < 6; ++i) {
        s.layers.push_back(weight_layer("conv2d", widths[i], 3, 1, 1));
        s.layers.push_back(simple("relu"));
        if (i % 2 == 1) {
            s.layers.push_back(simple("avgpool", 2));
        }
    }
    LayerSpec pool = simple("adaptive_avgpool");
    s.layers.push_back(pool);
    s.layers.push_back(simple("flatten"));
    s.layers.push_back(weight_layer("linear", 512));
    s.layers.push_back(simple("relu"));
    s.layers.push_back(weight_layer("linear", classes));
    return s;
}

nlohmann::json to_json(const ModelSpec &s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &l : s.layers) {
        layers.push_back(layer_spec_json(l));
    }
    return {{"input", to_json(s.input)}, {"k", s.k}, {"classes", s.classes}, {"layers", layers}};
}

ModelSpec model_spec_from_json(const nlohmann::json &j) {
    ModelSpec s;
    try {
        if (j.contains("preset")) {
            const auto preset = j.at("preset").get<std::string>();
            const std::size_t k = j.value("k", std::size_t{9});
            const std::size_t classes = j.value("classes", std::size_t{10});
            if (preset == "cnn_s") {
                s = ModelSpec::cnn_s(k, classes);
            } else if (preset == "vgg8") {
                s = ModelSpec::vgg8(classes, k);
            } else if (preset == "mlp") {
                s = ModelSpec::mlp(j.at("in").get<std::size_t>(), j.at("hidden").get<std::vector<std::size_t>>(),
                                   classes, k);
            } else {
                throw ConfigError("model: unknown preset '" + preset + "' (expected mlp, cnn_s or vgg8)");
            }
            s.validate();
            return s;
        }
        const auto in = j.at("input").get<std::vector<std::size_t>>();
        if (in.size() != 3) {
            throw ConfigError("model: 'input' must be [c, h, w]");
        }
        s.input = Shape{in[0], in[1], in[2]};
        s.k = j.value("k", s.k);
        s.classes = j.value("classes", s.classes);
        for (const auto &l : j.at("layers")) {
            s.layers.push_back(layer_spec_from_json(l));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return s;
}

Model::Model(Shape input, std::vector<std::unique_ptr<Layer>> layers) : input_(input), layers_(std::move(layers)) {
    if (!layers_.empty()) {
        layers_.front()->set_propagate(false);
    }
}

Shape Model::output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(); }

Matrix Model::forward(const Matrix &x, const StepContext &ctx) {
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i]->forward(h, ctx);
        for (double v : h.data()) {
            if (!std::isfinite(v)) {
                throw NumericalAbort("non-finite activation after layer " + std::to_string(i) + " (" +
                                     layers_[i]->kind() + ")");
            }
        }
    }
    return h;
}

void Model::backward(const Matrix &dlogits, const StepContext &ctx) {
    Matrix g = dlogits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        g = (*it)->backward(g, ctx);
    }
}

std::vector<Param> Model::params() {
    std::vector<Param> out;
    for (auto &l : layers_) {
        for (const Param &p : l->params()) {
            out.push_back(p);
        }
    }
    return out;
}

void Model::zero_grad() {
    for (auto &l : layers_) {
        l->zero_grad();
    }
}

void Model::commit() {
    for (auto &l : layers_) {
        l->commit();
    }
}

namespace {

void collect_photonic(std::vector<std::unique_ptr<Layer>> &layers, std::vector<PhotonicLayer *> &out) {
    for (auto &l : layers) {
        if (auto *p = dynamic_cast<PhotonicLayer *>(l.get())) {
            out.push_back(p);
        } else if (auto *r = dynamic_cast<Residual *>(l.get())) {
            collect_photonic(r->body(), out);
        }
    }
}

void copy_to_twin(std::vector<std::unique_ptr<Layer>> &src, std::vector<std::unique_ptr<Layer>> &dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (auto *p = dynamic_cast<PhotonicLayer *>(src[i].get())) {
            const Matrix w = p->probe_weight();
            if (auto *l = dynamic_cast<Linear *>(dst[i].get())) {
                l->weight = w;
                l->bias = p->bias();
            } else if (auto *c = dynamic_cast<Conv2d *>(dst[i].get())) {
                c->weight = w;
                c->bias = p->bias();
            }
        } else if (auto *r = dynamic_cast<Residual *>(src[i].get())) {
            copy_to_twin(r->body(), dynamic_cast<Residual &>(*dst[i]).body());
        } else {
            dst[i]->load_state(src[i]->state());
        }
    }
}

}  // namespace

std::vector<PhotonicLayer *> Model::photonic_layers() {
    std::vector<PhotonicLayer *> out;
    collect_photonic(layers_, out);
    return out;
}

std::vector<LayerDims> Model::cost_dims() {
    std::vector<LayerDims> out;
    for (PhotonicLayer *p : photonic_layers()) {
        out.push_back(p->dims());
    }
    return out;
}

nlohmann::json Model::state() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &l : layers_) {
        layers.push_back(l->state());
    }
    return layers;
}

void Model::load_state(const nlohmann::json &j) {
    if (!j.is_array() || j.size() != layers_.size()) {
        throw InvalidInput("checkpoint: expected " + std::to_string(layers_.size()) + " layer entries");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto &e = j[i];
        if (e.contains("kind") && e.at("kind").get<std::string>() != layers_[i]->kind()) {
            throw InvalidInput("checkpoint: layer " + std::to_string(i) + " is '" + e.at("kind").get<std::string>() +
                              "', model has '" + layers_[i]->kind() + "'");
        }
        layers_[i]->load_state(e);
    }
}

Model build_model(const ModelSpec &spec, const BuildOptions &opts) {
    spec.validate();
    opts.noise.validate();
    BuildState st;
    st.opts = &opts;
    st.k = spec.k;
    Shape s = spec.input;
    auto layers = build_chain(spec.layers, s, st, "model.layers");
    return Model(spec.input, std::move(layers));
}

Model electronic_twin(const ModelSpec &spec, Model &photonic) {
    Model twin = build_model(spec.electronic(), BuildOptions{NoiseConfig::disabled(), 0});
    if (twin.size() != photonic.size()) {
        throw ShapeError("electronic_twin: spec does not match the photonic model");
    }
    copy_to_twin(photonic.layers(), twin.layers());
    return twin;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

LossResult softmax_cross_entropy(const Matrix &logits, std::span<const int> labels) {
    if (logits.rows() != labels.size() || logits.rows() == 0) {
        throw ShapeError("softmax_cross_entropy: one label per non-empty batch row required");
    }
    LossResult r;
    r.grad = Matrix(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto z = logits.row(b);
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw InvalidInput("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
        }
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z) {
            s += std::exp(v - m);
        }
        const double log_s = std::log(s) + m;
        r.loss += (log_s - z[static_cast<std::size_t>(y)]) * inv_b;
        r.correct += argmax(z) == static_cast<std::size_t>(y);
        auto g = r.grad.row(b);
        for (std::size_t c = 0; c < z.size(); ++c) {
            g[c] = (std::exp(z[c] - log_s) - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0)) * inv_b;
        }
    }
    return r;
}

}  // namespace ptcflow
