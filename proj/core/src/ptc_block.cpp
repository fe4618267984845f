#include "ptcflow/ptc_block.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptcflow/errors.hpp"

namespace ptcflow {

SignFlipMatrix::SignFlipMatrix(std::vector<int> s) : signs(std::move(s)) {
    for (int v : signs) {
        if (v != 1 && v != -1) {
            throw InvalidInput("SignFlipMatrix: entries must be +1 or -1");
        }
    }
}

Matrix SignFlipMatrix::matrix() const {
    Matrix m(signs.size(), signs.size());
    for (std::size_t i = 0; i < signs.size(); ++i) {
        m(i, i) = signs[i];
    }
    return m;
}

SignFlipMatrix SignFlipMatrix::operator*(const SignFlipMatrix &o) const {
    if (o.size() != size()) {
        throw ShapeError("SignFlipMatrix: size mismatch");
    }
    std::vector<int> s(size());
    for (std::size_t i = 0; i < size(); ++i) {
        s[i] = signs[i] * o.signs[i];
    }
    return SignFlipMatrix(std::move(s));
}

PTCBlock::PTCBlock(std::size_t k, const NoiseConfig &cfg, std::uint64_t block_seed)
    : k_(k), cfg_(cfg), hidden_(k, cfg, block_seed), program_(k), calib_u_(k), calib_v_(k) {
    if (k < 2 || k > 64) {
        throw ConfigError("PTCBlock: k must lie in [2, 64]");
    }
    realize_u();
    realize_v();
    realize_sigma();
    rebuild_w();
}

PTCBlock::PTCBlock(const PTCBlock &o)
    : k_(o.k_), cfg_(o.cfg_), hidden_(o.hidden_), program_(o.program_), calib_u_(o.calib_u_), calib_v_(o.calib_v_),
      u_(o.u_), vt_(o.vt_), w_(o.w_), sigma_(o.sigma_), calls_(o.calls()) {}

PTCBlock &PTCBlock::operator=(const PTCBlock &o) {
    if (this != &o) {
        k_ = o.k_;
        cfg_ = o.cfg_;
        hidden_ = o.hidden_;
        program_ = o.program_;
        calib_u_ = o.calib_u_;
        calib_v_ = o.calib_v_;
        u_ = o.u_;
        vt_ = o.vt_;
        w_ = o.w_;
        sigma_ = o.sigma_;
        calls_.store(o.calls(), std::memory_order_relaxed);
    }
    return *this;
}

PTCBlock::PTCBlock(PTCBlock &&o) noexcept
    : k_(o.k_), cfg_(o.cfg_), hidden_(std::move(o.hidden_)), program_(std::move(o.program_)),
      calib_u_(std::move(o.calib_u_)), calib_v_(std::move(o.calib_v_)), u_(std::move(o.u_)), vt_(std::move(o.vt_)),
      w_(std::move(o.w_)), sigma_(std::move(o.sigma_)), calls_(o.calls()) {}

PTCBlock &PTCBlock::operator=(PTCBlock &&o) noexcept {
    if (this != &o) {
        k_ = o.k_;
        cfg_ = o.cfg_;
        hidden_ = std::move(o.hidden_);
        program_ = std::move(o.program_);
        calib_u_ = std::move(o.calib_u_);
        calib_v_ = std::move(o.calib_v_);
        u_ = std::move(o.u_);
        vt_ = std::move(o.vt_);
        w_ = std::move(o.w_);
        sigma_ = std::move(o.sigma_);
        calls_.store(o.calls(), std::memory_order_relaxed);
    }
    return *this;
}

void PTCBlock::realize_u() { u_ = MeshOperator(realize_mesh(program_.phi_u, hidden_, cfg_, false)).matrix(); }

void PTCBlock::realize_v() { vt_ = MeshOperator(realize_mesh(program_.phi_v, hidden_, cfg_, true)).matrix(); }

void PTCBlock::realize_sigma() {
    sigma_.resize(k_);
    for (std::size_t i = 0; i < k_; ++i) {
        sigma_[i] = program_.sigma_scale * std::cos(quantize_phase(program_.phi_sigma[i], cfg_.bitwidth_sigma));
    }
}

void PTCBlock::rebuild_w() {
    w_ = Matrix(k_, k_);
    for (std::size_t i = 0; i < k_; ++i) {
        for (std::size_t m = 0; m < k_; ++m) {
            const double us = u_(i, m) * sigma_[m];
            if (us == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < k_; ++j) {
                w_(i, j) += us * vt_(m, j);
            }
        }
    }
}

Matrix PTCBlock::realize_calibration(const UnitaryPhases &programmed, bool which_v) const {
    return MeshOperator(realize_mesh(programmed, hidden_, cfg_, which_v)).matrix();
}

void PTCBlock::set_program(const PhaseProgram &p) {
    p.validate();
    if (p.size() != k_) {
        throw ShapeError("PTCBlock::set_program: block size mismatch");
    }
    program_ = p;
    realize_u();
    realize_v();
    realize_sigma();
    rebuild_w();
}

void PTCBlock::set_phi_u(const UnitaryPhases &p) {
    p.validate();
    if (p.k != k_) {
        throw ShapeError("PTCBlock::set_phi_u: block size mismatch");
    }
    program_.phi_u = p;
    realize_u();
    rebuild_w();
}

void PTCBlock::set_phi_v(const UnitaryPhases &p) {
    p.validate();
    if (p.k != k_) {
        throw ShapeError("PTCBlock::set_phi_v: block size mismatch");
    }
    program_.phi_v = p;
    realize_v();
    rebuild_w();
}

void PTCBlock::set_sigma_phases(const Vector &phi_sigma, double sigma_scale) {
    if (phi_sigma.size() != k_) {
        throw ShapeError("PTCBlock::set_sigma_phases: length mismatch");
    }
    if (!(sigma_scale > 0.0) || !std::isfinite(sigma_scale)) {
        throw InvalidInput("PTCBlock::set_sigma_phases: scale must be positive and finite");
    }
    program_.phi_sigma = phi_sigma;
    program_.sigma_scale = sigma_scale;
    realize_sigma();
    rebuild_w();
}

void PTCBlock::set_sigma_values(std::span<const double> sigma) {
    if (sigma.size() != k_) {
        throw ShapeError("PTCBlock::set_sigma_values: length mismatch");
    }
    encode_sigma(sigma, program_.phi_sigma, program_.sigma_scale);
    realize_sigma();
    rebuild_w();
}

void PTCBlock::set_calibration(const UnitaryPhases &u, const UnitaryPhases &v) {
    u.validate();
    v.validate();
    if (u.k != k_ || v.k != k_) {
        throw ShapeError("PTCBlock::set_calibration: block size mismatch");
    }
    calib_u_ = u;
    calib_v_ = v;
}

void PTCBlock::check(std::span<const double> x) const {
    if (x.size() != k_) {
        throw ShapeError("PTCBlock: port vector has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(k_));
    }
}

Vector PTCBlock::forward(std::span<const double> x) const {
    check(x);
    add_calls(1);
    return matvec(w_, x);
}

Vector PTCBlock::adjoint(std::span<const double> z) const {
    check(z);
    add_calls(1);
    return matvec_transposed(w_, z);
}

Vector PTCBlock::forward_u(std::span<const double> x) const {
    check(x);
    add_calls(1);
    return matvec(u_, x);
}

Vector PTCBlock::adjoint_u(std::span<const double> z) const {
    check(z);
    add_calls(1);
    return matvec_transposed(u_, z);
}

Vector PTCBlock::forward_v(std::span<const double> x) const {
    check(x);
    add_calls(1);
    return matvec(vt_, x);
}

Vector PTCBlock::adjoint_v(std::span<const double> x) const {
    check(x);
    add_calls(1);
    return matvec_transposed(vt_, x);
}

namespace {

void dense_apply(const Matrix &a, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            acc += r[j] * x[j];
        }
        out[i] = acc;
    }
}

void dense_apply_transposed(const Matrix &a, std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        const double xi = x[i];
        if (xi == 0.0) {
            continue;
        }
        for (std::size_t j = 0; j < r.size(); ++j) {
            out[j] += r[j] * xi;
        }
    }
}

}  // namespace

void PTCBlock::forward(std::span<const double> x, std::span<double> out) const {
    check(x);
    check(out);
    add_calls(1);
    dense_apply(w_, x, out);
}

void PTCBlock::adjoint(std::span<const double> z, std::span<double> out) const {
    check(z);
    check(out);
    add_calls(1);
    dense_apply_transposed(w_, z, out);
}

void PTCBlock::adjoint_u(std::span<const double> z, std::span<double> out) const {
    check(z);
    check(out);
    add_calls(1);
    dense_apply_transposed(u_, z, out);
}

void PTCBlock::forward_v(std::span<const double> x, std::span<double> out) const {
    check(x);
    check(out);
    add_calls(1);
    dense_apply(vt_, x, out);
}

void PTCBlock::accumulate_subspace_grad(std::span<const double> x, std::span<const double> dy, std::span<double> g,
                                        std::span<double> scratch) const {
    const auto a = scratch.subspan(0, k_);
    const auto b = scratch.subspan(k_, k_);
    adjoint_u(dy, a);
    forward_v(x, b);
    for (std::size_t i = 0; i < k_; ++i) {
        g[i] += a[i] * b[i];
    }
}

Vector PTCBlock::read_sigma() const { return sigma_; }

void PTCBlock::osp_project(const Matrix &target, bool noisy_passes) {
    if (target.rows() != k_ || target.cols() != k_) {
        throw ShapeError("PTCBlock::osp_project: target must be k x k");
    }
    for (double v : target.data()) {
        if (!std::isfinite(v)) {
            throw InvalidInput("PTCBlock::osp_project: target entries must be finite");
        }
    }
    // Pass 1: V* in its calibrated state, Sigma = I, W's columns injected from the right ports.
    // The left ports read C_V^T U~^T W.
    const Matrix c_v = noisy_passes ? realize_calibration(calib_v_, true) : Matrix::identity(k_);
    const Matrix c_u = noisy_passes ? realize_calibration(calib_u_, false) : Matrix::identity(k_);
    Matrix left(k_, k_);
    for (std::size_t j = 0; j < k_; ++j) {
        const Vector col = target.column(j);
        const Vector through = matvec_transposed(c_v, matvec_transposed(u_, col));
        left.set_column(j, through);
    }
    // Pass 2: U in its calibrated state, Sigma = I, the adjoint field (rows of pass 1) injected
    // from the left ports. Column i of the output is C_U V*~ W^T U~ C_V e_i.
    Vector sigma(k_);
    for (std::size_t i = 0; i < k_; ++i) {
        const Vector field(left.row(i).begin(), left.row(i).end());
        const Vector out = matvec(c_u, matvec(vt_, field));
        sigma[i] = out[i];
    }
    add_calls(2 * k_);
    set_sigma_values(sigma);
}

Vector PTCBlock::subspace_grad(std::span<const double> x, std::span<const double> dy) const {
    Vector g = adjoint_u(dy);
    const Vector yv = forward_v(x);
    for (std::size_t i = 0; i < k_; ++i) {
        g[i] *= yv[i];
    }
    return g;
}

}  // namespace ptcflow
