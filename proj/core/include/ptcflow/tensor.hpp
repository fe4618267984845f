#pragma once

#include <cstddef>

#include <nlohmann/json.hpp>

#include "ptcflow/linalg.hpp"

namespace ptcflow {

/// Per-sample activation shape. Activations are stored as batch x (c * h * w) matrices in CHW order.
struct Shape {
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t size() const noexcept { return c * h * w; }
    bool operator==(const Shape &) const = default;
};

nlohmann::json to_json(const Shape &s);
std::string to_string(const Shape &s);

struct ConvGeometry {
    Shape input;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    /// Throws ShapeError when the padded input is smaller than the kernel.
    void validate() const;
    std::size_t h_out() const noexcept { return (input.h + 2 * padding - kernel) / stride + 1; }
    std::size_t w_out() const noexcept { return (input.w + 2 * padding - kernel) / stride + 1; }
    std::size_t columns() const noexcept { return h_out() * w_out(); }
    /// C * K^2, ordered (c, kh, kw).
    std::size_t patch() const noexcept { return input.c * kernel * kernel; }
};

/// (B * H'W') x (C K^2): row b * H'W' + (oh * W' + ow) holds the zero-padded receptive field.
Matrix im2col(const Matrix &x, const ConvGeometry &g);
/// Adjoint of im2col: scatters columns back into a batch x (C H W) matrix, summing overlaps.
Matrix col2im(const Matrix &cols, const ConvGeometry &g, std::size_t batch);

/// (B * S) x C position-major rows <-> B x (C * S) channel-major activations.
Matrix rows_to_channels(const Matrix &rows, std::size_t batch, std::size_t positions);
Matrix channels_to_rows(const Matrix &x, std::size_t channels, std::size_t positions);

/// a * b^T, a^T * b and a * b.
Matrix matmul_nt(const Matrix &a, const Matrix &b);
Matrix matmul_tn(const Matrix &a, const Matrix &b);
Matrix matmul_nn(const Matrix &a, const Matrix &b);

}  // namespace ptcflow
