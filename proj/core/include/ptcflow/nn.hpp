#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/blocked_linear.hpp"
#include "ptcflow/cost.hpp"
#include "ptcflow/noise.hpp"
#include "ptcflow/sampling.hpp"
#include "ptcflow/tensor.hpp"

namespace ptcflow {

/// A trainable array and its gradient buffer.
struct Param {
    std::span<double> value;
    std::span<double> grad;
    bool decay = true;
};

/// Per-step settings threaded through forward and backward.
struct StepContext {
    /// Sparse plan for photonic backward passes; null means dense.
    const SamplingPlan *plan = nullptr;
    /// Seed of this optimizer step; masks derive from (seed, layer id).
    std::uint64_t seed = 0;
    CostMeter *meter = nullptr;
    std::size_t workers = 1;
};

class Layer {
  public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    const Shape &input_shape() const noexcept { return in_; }
    const Shape &output_shape() const noexcept { return out_; }

    /// batch x in.size() -> batch x out.size(). Caches what backward needs.
    virtual Matrix forward(const Matrix &x, const StepContext &ctx) = 0;
    /// Accumulates parameter gradients and returns the input gradient (empty when the layer was told
    /// not to propagate).
    virtual Matrix backward(const Matrix &dy, const StepContext &ctx) = 0;

    virtual std::vector<Param> params() { return {}; }
    void zero_grad();
    /// Pushes updated parameters to hardware (photonic layers).
    virtual void commit() {}

    virtual nlohmann::json state() const { return nlohmann::json::object(); }
    virtual void load_state(const nlohmann::json &) {}

    void set_propagate(bool p) noexcept { propagate_ = p; }

  protected:
    Layer(Shape in, Shape out) : in_(in), out_(out) {}
    Shape in_, out_;
    bool propagate_ = true;
};

class Linear final : public Layer {
  public:
    Linear(std::size_t in, std::size_t out, bool bias = true);
    std::string kind() const override { return "linear"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;
    std::vector<Param> params() override;
    nlohmann::json state() const override;
    void load_state(const nlohmann::json &j) override;

    /// out x in.
    Matrix weight;
    Vector bias;

  private:
    bool has_bias_;
    Matrix grad_w_;
    Vector grad_b_;
    Matrix x_;
};

class Conv2d final : public Layer {
  public:
    Conv2d(Shape in, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
           bool bias = true);
    std::string kind() const override { return "conv2d"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;
    std::vector<Param> params() override;
    nlohmann::json state() const override;
    void load_state(const nlohmann::json &j) override;

    const ConvGeometry &geometry() const noexcept { return geo_; }

    /// C_out x (C_in K^2), columns ordered (c, kh, kw).
    Matrix weight;
    Vector bias;

  private:
    ConvGeometry geo_;
    bool has_bias_;
    Matrix grad_w_;
    Vector grad_b_;
    Matrix cols_;
};

/// Blocked photonic weight with a master copy of every block's Sigma and an electronic bias.
/// Optimizers update the master values; commit() writes them to the attenuators.
class PhotonicLayer : public Layer {
  public:
    BlockedLinear &hardware() noexcept { return hw_; }
    const BlockedLinear &hardware() const noexcept { return hw_; }
    std::uint64_t layer_id() const noexcept { return id_; }
    virtual LayerDims dims() const = 0;

    /// Programs every block with the exact SVD of its slice of `w` (rows x cols of the lowered weight).
    void program_exact(const Matrix &w);
    /// Re-reads the master Sigma from the hardware monitors after an external write.
    void sync_sigma();
    /// Dense lowered weight read out with basis probes.
    Matrix probe_weight() const { return hw_.probe_matrix(); }

    std::vector<Param> params() override;
    void commit() override;
    nlohmann::json state() const override;
    void load_state(const nlohmann::json &j) override;

    Vector &sigma() noexcept { return sigma_; }
    Vector &bias() noexcept { return bias_; }
    const Vector &sigma_grad() const noexcept { return grad_sigma_; }

  protected:
    PhotonicLayer(Shape in, Shape out, std::size_t rows, std::size_t cols, std::size_t k, const NoiseConfig &cfg,
                  std::uint64_t layer_id, bool bias);

    /// rows x N lowered inputs -> rows x M outputs plus bias.
    Matrix forward_rows(const Matrix &x, const StepContext &ctx) const;
    /// Sigma / bias gradients over the kept columns and the sparse feedback for all rows. `positions`
    /// rows per sample share one column mask.
    Matrix backward_rows(const Matrix &x, const Matrix &dy, std::size_t positions, const StepContext &ctx);

  private:
    BlockedLinear hw_;
    std::uint64_t id_;
    bool has_bias_;
    Vector sigma_, grad_sigma_;
    Vector bias_, grad_bias_;
};

class PhotonicLinear final : public PhotonicLayer {
  public:
    PhotonicLinear(std::size_t in, std::size_t out, std::size_t k, const NoiseConfig &cfg, std::uint64_t layer_id,
                   bool bias = true);
    std::string kind() const override { return "photonic_linear"; }
    LayerDims dims() const override;
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;

  private:
    Matrix x_;
};

class PhotonicConv2d final : public PhotonicLayer {
  public:
    PhotonicConv2d(Shape in, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t padding,
                   std::size_t k, const NoiseConfig &cfg, std::uint64_t layer_id, bool bias = true);
    std::string kind() const override { return "photonic_conv2d"; }
    LayerDims dims() const override;
    const ConvGeometry &geometry() const noexcept { return geo_; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;

  private:
    ConvGeometry geo_;
    Matrix cols_;
};

class ReLU final : public Layer {
  public:
    explicit ReLU(Shape s) : Layer(s, s) {}
    std::string kind() const override { return "relu"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;

  private:
    Matrix y_;
};

/// Non-overlapping average pooling with window = stride = kernel; trailing rows/columns are dropped.
class AvgPool2d final : public Layer {
  public:
    AvgPool2d(Shape in, std::size_t kernel);
    std::string kind() const override { return "avgpool"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;

  private:
    std::size_t kernel_;
};

/// Averages bins [floor(i H / H_o), ceil((i + 1) H / H_o)) to a fixed output map.
class AdaptiveAvgPool2d final : public Layer {
  public:
    AdaptiveAvgPool2d(Shape in, std::size_t out_h, std::size_t out_w);
    std::string kind() const override { return "adaptive_avgpool"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;

  private:
    struct Bin {
        std::size_t begin, end;
    };
    std::vector<Bin> rows_, cols_;
};

class Flatten final : public Layer {
  public:
    explicit Flatten(Shape in) : Layer(in, Shape{in.size(), 1, 1}) {}
    std::string kind() const override { return "flatten"; }
    Matrix forward(const Matrix &x, const StepContext &) override { return x; }
    Matrix backward(const Matrix &dy, const StepContext &) override { return dy; }
};

/// y = x + body(x); the body must preserve the shape.
class Residual final : public Layer {
  public:
    Residual(Shape s, std::vector<std::unique_ptr<Layer>> body);
    std::string kind() const override { return "residual"; }
    Matrix forward(const Matrix &x, const StepContext &ctx) override;
    Matrix backward(const Matrix &dy, const StepContext &ctx) override;
    std::vector<Param> params() override;
    void commit() override;
    nlohmann::json state() const override;
    void load_state(const nlohmann::json &j) override;

    std::vector<std::unique_ptr<Layer>> &body() noexcept { return body_; }

  private:
    std::vector<std::unique_ptr<Layer>> body_;
};

/// Declarative layer description. Kinds: linear, conv2d, relu, avgpool, adaptive_avgpool, flatten,
/// residual. `out` is features (linear) or channels (conv2d).
struct LayerSpec {
    std::string kind;
    std::size_t out = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool photonic = true;
    bool bias = true;
    std::size_t out_h = 2, out_w = 2;
    std::vector<LayerSpec> body;

    bool operator==(const LayerSpec &) const = default;
};

struct ModelSpec {
    Shape input;
    std::size_t k = 9;
    std::size_t classes = 10;
    std::vector<LayerSpec> layers;

    /// Propagates shapes through the chain; throws ShapeError / ConfigError on the first bad layer.
    Shape validate() const;
    /// Copy with every photonic flag cleared.
    ModelSpec electronic() const;
    /// Geometry of every photonic layer in build order, without programming any weights.
    std::vector<LayerDims> cost_dims() const;
    bool operator==(const ModelSpec &) const = default;

    /// in -> hidden... -> classes with ReLU between photonic linear layers.
    static ModelSpec mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes, std::size_t k = 9);
    /// CONV8K3S2 - CONV6K3S2 - FC on 1 x 28 x 28 inputs.
    static ModelSpec cnn_s(std::size_t k = 9, std::size_t classes = 10);
    /// Six 3 x 3 convolutions (64, 64, 128, 128, 256, 256) with pooling and two FC layers on 3 x 32 x 32.
    static ModelSpec vgg8(std::size_t classes = 10, std::size_t k = 9);
};

nlohmann::json to_json(const ModelSpec &s);
ModelSpec model_spec_from_json(const nlohmann::json &j);

class Model {
  public:
    Model() = default;
    Model(Shape input, std::vector<std::unique_ptr<Layer>> layers);
    Model(Model &&) noexcept = default;
    Model &operator=(Model &&) noexcept = default;

    Shape input_shape() const noexcept { return input_; }
    Shape output_shape() const;
    std::size_t size() const noexcept { return layers_.size(); }
    Layer &layer(std::size_t i) { return *layers_[i]; }
    std::vector<std::unique_ptr<Layer>> &layers() noexcept { return layers_; }

    Matrix forward(const Matrix &x, const StepContext &ctx = {});
    /// Backpropagates the gradient of the loss w.r.t. the logits.
    void backward(const Matrix &dlogits, const StepContext &ctx = {});

    std::vector<Param> params();
    void zero_grad();
    void commit();

    /// Photonic layers in depth order, including those nested in residual bodies.
    std::vector<PhotonicLayer *> photonic_layers();
    std::vector<LayerDims> cost_dims();

    /// Per-layer parameter and phase state (the block checkpoint form).
    nlohmann::json state() const;
    void load_state(const nlohmann::json &j);

  private:
    Shape input_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct BuildOptions {
    /// Chip manufacturing seed and noise model of the photonic blocks.
    NoiseConfig noise;
    /// Seed of weight initialization.
    std::uint64_t seed = 0;
};

/// Instantiates a spec. Photonic layers are initialized by programming the exact SVD of a
/// He-normal weight; electronic layers draw the same weights directly.
Model build_model(const ModelSpec &spec, const BuildOptions &opts);

/// Electronic model whose weights equal the photonic model's probed transfer matrices.
Model electronic_twin(const ModelSpec &spec, Model &photonic);

struct LossResult {
    double loss = 0.0;
    std::size_t correct = 0;
    /// d loss / d logits.
    Matrix grad;
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Matrix &logits, std::span<const int> labels);

std::size_t argmax(std::span<const double> v);

}  // namespace ptcflow
