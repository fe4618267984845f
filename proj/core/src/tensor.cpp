#include "ptcflow/tensor.hpp"

#include "ptcflow/errors.hpp"

namespace ptcflow {

nlohmann::json to_json(const Shape &s) { return nlohmann::json::array({s.c, s.h, s.w}); }

std::string to_string(const Shape &s) {
    return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

void ConvGeometry::validate() const {
    if (input.size() == 0 || kernel == 0 || stride == 0 || input.h + 2 * padding < kernel ||
        input.w + 2 * padding < kernel) {
        throw ShapeError("convolution: kernel " + std::to_string(kernel) + " does not fit input " +
                         to_string(input) + " with padding " + std::to_string(padding));
    }
}

Matrix im2col(const Matrix &x, const ConvGeometry &g) {
    g.validate();
    if (x.cols() != g.input.size()) {
        throw ShapeError("im2col: input has " + std::to_string(x.cols()) + " features, expected " +
                         std::to_string(g.input.size()));
    }
    const std::size_t ho = g.h_out(), wo = g.w_out(), k = g.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.input.h);
    const auto w = static_cast<std::ptrdiff_t>(g.input.w);
    Matrix cols(x.rows() * ho * wo, g.patch());
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const auto img = x.row(b);
        for (std::size_t oh = 0; oh < ho; ++oh) {
            for (std::size_t ow = 0; ow < wo; ++ow) {
                auto out = cols.row((b * ho + oh) * wo + ow);
                std::size_t i = 0;
                for (std::size_t c = 0; c < g.input.c; ++c) {
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
                        for (std::size_t kw = 0; kw < k; ++kw, ++i) {
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
                            if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                                out[i] = img[(c * g.input.h + static_cast<std::size_t>(ih)) * g.input.w +
                                             static_cast<std::size_t>(iw)];
                            }
                        }
                    }
                }
            }
        }
    }
    return cols;
}

Matrix col2im(const Matrix &cols, const ConvGeometry &g, std::size_t batch) {
    g.validate();
    const std::size_t ho = g.h_out(), wo = g.w_out(), k = g.kernel;
    if (cols.rows() != batch * ho * wo || cols.cols() != g.patch()) {
        throw ShapeError("col2im: column matrix does not match the geometry");
    }
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.input.h);
    const auto w = static_cast<std::ptrdiff_t>(g.input.w);
    Matrix x(batch, g.input.size());
    for (std::size_t b = 0; b < batch; ++b) {
        auto img = x.row(b);
        for (std::size_t oh = 0; oh < ho; ++oh) {
            for (std::size_t ow = 0; ow < wo; ++ow) {
                const auto in = cols.row((b * ho + oh) * wo + ow);
                std::size_t i = 0;
                for (std::size_t c = 0; c < g.input.c; ++c) {
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
                        for (std::size_t kw = 0; kw < k; ++kw, ++i) {
                            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
                            if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                                img[(c * g.input.h + static_cast<std::size_t>(ih)) * g.input.w +
                                    static_cast<std::size_t>(iw)] += in[i];
                            }
                        }
                    }
                }
            }
        }
    }
    return x;
}

Matrix rows_to_channels(const Matrix &rows, std::size_t batch, std::size_t positions) {
    if (rows.rows() != batch * positions) {
        throw ShapeError("rows_to_channels: row count mismatch");
    }
    const std::size_t c = rows.cols();
    Matrix x(batch, c * positions);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < positions; ++s) {
            const auto r = rows.row(b * positions + s);
            for (std::size_t ch = 0; ch < c; ++ch) {
                x(b, ch * positions + s) = r[ch];
            }
        }
    }
    return x;
}

Matrix channels_to_rows(const Matrix &x, std::size_t channels, std::size_t positions) {
    if (x.cols() != channels * positions) {
        throw ShapeError("channels_to_rows: feature count mismatch");
    }
    Matrix rows(x.rows() * positions, channels);
    for (std::size_t b = 0; b < x.rows(); ++b) {
        for (std::size_t s = 0; s < positions; ++s) {
            auto r = rows.row(b * positions + s);
            for (std::size_t ch = 0; ch < channels; ++ch) {
                r[ch] = x(b, ch * positions + s);
            }
        }
    }
    return rows;
}

Matrix matmul_nt(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dimensions differ");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            c(i, j) = dot(ar, b.row(j));
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix &a, const Matrix &b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dimensions differ");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto ar = a.row(r);
        const auto br = b.row(r);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double s = ar[i];
            if (s == 0.0) {
                continue;
            }
            auto cr = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                cr[j] += s * br[j];
            }
        }
    }
    return c;
}

Matrix matmul_nn(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul_nn: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto cr = c.row(i);
        const auto ar = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double s = ar[k];
            if (s == 0.0) {
                continue;
            }
            const auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                cr[j] += s * br[j];
            }
        }
    }
    return c;
}

}  // namespace ptcflow
