#include "ptcflow/blocked_linear.hpp"

#include <algorithm>

#include "ptcflow/errors.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

BlockedLinear::BlockedLinear(std::size_t out_features, std::size_t in_features, std::size_t k, const NoiseConfig &cfg,
                             std::uint64_t layer_id)
    : m_(out_features), n_(in_features), k_(k) {
    if (m_ == 0 || n_ == 0) {
        throw ConfigError("BlockedLinear: dimensions must be positive");
    }
    if (k < 2 || k > 32) {
        throw ConfigError("BlockedLinear: block size must lie in [2, 32]");
    }
    p_ = (m_ + k - 1) / k;
    q_ = (n_ + k - 1) / k;
    blocks_.reserve(p_ * q_);
    for (std::size_t bp = 0; bp < p_; ++bp) {
        for (std::size_t bq = 0; bq < q_; ++bq) {
            blocks_.emplace_back(k, cfg, derive_seed(layer_id, {bp, bq}));
        }
    }
}

std::size_t BlockedLinear::valid_rows(std::size_t bp) const noexcept { return std::min(k_, m_ - bp * k_); }

std::size_t BlockedLinear::valid_cols(std::size_t bq) const noexcept { return std::min(k_, n_ - bq * k_); }

Vector BlockedLinear::forward(std::span<const double> x) const {
    if (x.size() != n_) {
        throw ShapeError("BlockedLinear::forward: input length mismatch");
    }
    Vector y(m_, 0.0);
    Vector xin(k_), out(k_);
    for (std::size_t bq = 0; bq < q_; ++bq) {
        std::fill(xin.begin(), xin.end(), 0.0);
        std::copy_n(x.begin() + bq * k_, valid_cols(bq), xin.begin());
        for (std::size_t bp = 0; bp < p_; ++bp) {
            block(bp, bq).forward(xin, out);
            for (std::size_t r = 0; r < valid_rows(bp); ++r) {
                y[bp * k_ + r] += out[r];
            }
        }
    }
    return y;
}

Vector BlockedLinear::adjoint(std::span<const double> dy) const {
    if (dy.size() != m_) {
        throw ShapeError("BlockedLinear::adjoint: gradient length mismatch");
    }
    Vector dx(n_, 0.0);
    Vector din(k_), out(k_);
    for (std::size_t bp = 0; bp < p_; ++bp) {
        std::fill(din.begin(), din.end(), 0.0);
        std::copy_n(dy.begin() + bp * k_, valid_rows(bp), din.begin());
        for (std::size_t bq = 0; bq < q_; ++bq) {
            block(bp, bq).adjoint(din, out);
            for (std::size_t c = 0; c < valid_cols(bq); ++c) {
                dx[bq * k_ + c] += out[c];
            }
        }
    }
    return dx;
}

Matrix BlockedLinear::probe_matrix() const {
    Matrix w(m_, n_);
    Vector e(k_, 0.0), out(k_);
    for (std::size_t bp = 0; bp < p_; ++bp) {
        for (std::size_t bq = 0; bq < q_; ++bq) {
            for (std::size_t c = 0; c < valid_cols(bq); ++c) {
                e[c] = 1.0;
                block(bp, bq).forward(e, out);
                e[c] = 0.0;
                for (std::size_t r = 0; r < valid_rows(bp); ++r) {
                    w(bp * k_ + r, bq * k_ + c) = out[r];
                }
            }
        }
    }
    return w;
}

Matrix BlockedLinear::target_block(const Matrix &w, std::size_t bp, std::size_t bq) const {
    if (w.rows() != m_ || w.cols() != n_) {
        throw ShapeError("BlockedLinear: target shape differs from layer shape");
    }
    return w.block(bp * k_, bq * k_, k_, k_);
}

std::uint64_t BlockedLinear::calls() const noexcept {
    std::uint64_t total = 0;
    for (const auto &b : blocks_) {
        total += b.calls();
    }
    return total;
}

void BlockedLinear::reset_calls() noexcept {
    for (auto &b : blocks_) {
        b.reset_calls();
    }
}

}  // namespace ptcflow
