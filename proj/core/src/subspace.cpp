#include "ptcflow/subspace.hpp"

#include <algorithm>

#include "ptcflow/errors.hpp"
#include "ptcflow/parallel.hpp"

namespace ptcflow {

namespace {

void check_width(const Matrix &m, std::size_t width, const char *what) {
    if (m.cols() != width) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(width) + " columns, got " +
                         std::to_string(m.cols()));
    }
}

// Zero-padded k-slice of a row.
void load_slice(std::span<const double> row, std::size_t offset, std::size_t valid, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    std::copy_n(row.begin() + offset, valid, out.begin());
}

}  // namespace

Matrix block_norm_grid(const BlockedLinear &layer) {
    Matrix g(layer.q(), layer.p());
    for (std::size_t bp = 0; bp < layer.p(); ++bp) {
        for (std::size_t bq = 0; bq < layer.q(); ++bq) {
            double s = 0.0;
            for (double v : layer.block(bp, bq).read_sigma()) {
                s += v * v;
            }
            g(bq, bp) = s;
        }
    }
    return g;
}

Matrix photonic_forward(const BlockedLinear &layer, const Matrix &x, CostMeter *meter, std::size_t workers) {
    check_width(x, layer.cols(), "photonic_forward");
    const std::size_t k = layer.k();
    Matrix y(x.rows(), layer.rows());
    parallel_for(x.rows(), workers, [&](std::size_t r) {
        Vector xin(k), out(k);
        const auto row = x.row(r);
        auto yr = y.row(r);
        for (std::size_t bq = 0; bq < layer.q(); ++bq) {
            load_slice(row, bq * k, layer.valid_cols(bq), xin);
            for (std::size_t bp = 0; bp < layer.p(); ++bp) {
                layer.block(bp, bq).forward(xin, out);
                for (std::size_t i = 0; i < layer.valid_rows(bp); ++i) {
                    yr[bp * k + i] += out[i];
                }
            }
        }
    });
    if (meter != nullptr) {
        meter->energy_forward += x.rows() * layer.rows() * layer.cols();
    }
    return y;
}

Matrix sparse_error_feedback(const BlockedLinear &layer, const Matrix &dy, const FeedbackMask &mask, CostMeter *meter,
                             std::size_t workers) {
    check_width(dy, layer.rows(), "sparse_error_feedback");
    if (mask.q != layer.q() || mask.p != layer.p()) {
        throw ShapeError("sparse_error_feedback: mask must be Q x P");
    }
    const std::size_t k = layer.k();
    Matrix dx(dy.rows(), layer.cols());
    parallel_for(dy.rows(), workers, [&](std::size_t r) {
        Vector din(k), out(k);
        const auto row = dy.row(r);
        auto dxr = dx.row(r);
        for (std::size_t bp = 0; bp < layer.p(); ++bp) {
            bool loaded = false;
            for (std::size_t bq = 0; bq < layer.q(); ++bq) {
                if (!mask.kept(bq, bp)) {
                    continue;
                }
                if (!loaded) {
                    load_slice(row, bp * k, layer.valid_rows(bp), din);
                    loaded = true;
                }
                layer.block(bp, bq).adjoint(din, out);
                for (std::size_t j = 0; j < layer.valid_cols(bq); ++j) {
                    dxr[bq * k + j] += out[j];
                }
            }
        }
        if (mask.scale != 1.0) {
            for (double &v : dxr) {
                v *= mask.scale;
            }
        }
    });
    if (meter != nullptr) {
        meter->energy_feedback += dy.rows() * mask.total();
    }
    return dx;
}

Matrix subspace_weight_grad(const BlockedLinear &layer, const Matrix &x, const Matrix &dy,
                            std::span<const std::uint8_t> keep, double scale, CostMeter *meter, std::size_t workers) {
    check_width(x, layer.cols(), "subspace_weight_grad");
    check_width(dy, layer.rows(), "subspace_weight_grad");
    if (x.rows() != dy.rows()) {
        throw ShapeError("subspace_weight_grad: x and dy row counts differ");
    }
    if (!keep.empty() && keep.size() != x.rows()) {
        throw ShapeError("subspace_weight_grad: column mask length differs from row count");
    }
    const std::size_t k = layer.k();
    const std::size_t q = layer.q();
    Matrix g(layer.block_count(), k);
    std::size_t kept = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        kept += keep.empty() || keep[r] != 0;
    }
    parallel_for(layer.block_count(), workers, [&](std::size_t idx) {
        const std::size_t bp = idx / q;
        const std::size_t bq = idx % q;
        const PTCBlock &block = layer.block(bp, bq);
        Vector xin(k), din(k), scratch(2 * k);
        auto gr = g.row(idx);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            if (!keep.empty() && keep[r] == 0) {
                continue;
            }
            load_slice(x.row(r), bq * k, layer.valid_cols(bq), xin);
            load_slice(dy.row(r), bp * k, layer.valid_rows(bp), din);
            block.accumulate_subspace_grad(xin, din, gr, scratch);
        }
        if (scale != 1.0) {
            for (double &v : gr) {
                v *= scale;
            }
        }
    });
    if (meter != nullptr) {
        meter->energy_weight_grad += 2 * kept * layer.block_count();
    }
    return g;
}

}  // namespace ptcflow
