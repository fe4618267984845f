#include "ptcflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ptcflow/errors.hpp"

namespace ptcflow {

namespace {

void require_finite(double phi, const char *what) {
    if (!std::isfinite(phi)) {
        throw InvalidInput(std::string(what) + ": phase must be finite");
    }
}

}  // namespace

double wrap_phase(double phi) {
    double w = std::fmod(phi, kTwoPi);
    if (w < 0.0) {
        w += kTwoPi;
    }
    // fmod of a tiny negative value can round up to exactly 2pi
    return w >= kTwoPi ? 0.0 : w;
}

Matrix rotator(double phi) {
    require_finite(phi, "rotator");
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    return Matrix{{c, -s}, {s, c}};
}

MziPhaseSettings mzi_phase_settings(double phi) {
    require_finite(phi, "mzi_phase_settings");
    const double delta_omega = kPi - 2.0 * phi;
    return {kPi / 2.0, 3.0 * kPi / 2.0, kPi + delta_omega / 2.0, kPi - delta_omega / 2.0};
}

Complex2x2 mzi_transfer_matrix(const MziPhaseSettings &s) {
    using C = std::complex<double>;
    const double t = std::sqrt(2.0) / 2.0;
    const C j(0.0, 1.0);
    const Complex2x2 coupler{{{C(t), j * t}, {j * t, C(t)}}};
    auto mul = [](const Complex2x2 &a, const Complex2x2 &b) {
        Complex2x2 c{};
        for (int r = 0; r < 2; ++r) {
            for (int col = 0; col < 2; ++col) {
                c[r][col] = a[r][0] * b[0][col] + a[r][1] * b[1][col];
            }
        }
        return c;
    };
    const Complex2x2 arms{{{std::polar(1.0, s.omega_p), C(0.0)}, {C(0.0), std::polar(1.0, s.omega_w)}}};
    const Complex2x2 inputs{{{std::polar(1.0, s.theta_t), C(0.0)}, {C(0.0), std::polar(1.0, s.theta_l)}}};
    return mul(mul(mul(coupler, arms), coupler), inputs);
}

std::vector<std::pair<std::size_t, std::size_t>> mesh_pairs(std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(mesh_size(k));
    for (std::size_t i = k; i-- > 1;) {
        for (std::size_t j = 0; j < i; ++j) {
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

void UnitaryPhases::validate() const {
    if (phis.size() != mesh_size(k)) {
        throw InvalidInput("UnitaryPhases: expected " + std::to_string(mesh_size(k)) + " phases, got " +
                           std::to_string(phis.size()));
    }
    if (d.size() != k) {
        throw InvalidInput("UnitaryPhases: sign vector length differs from k");
    }
    for (int s : d) {
        if (s != 1 && s != -1) {
            throw InvalidInput("UnitaryPhases: sign entries must be +1 or -1");
        }
    }
    for (double p : phis) {
        require_finite(p, "UnitaryPhases");
    }
}

MeshOperator::MeshOperator(const UnitaryPhases &p) : k_(p.k), pairs_(mesh_pairs(p.k)), d_(p.d) {
    cos_.resize(p.phis.size());
    sin_.resize(p.phis.size());
    for (std::size_t n = 0; n < p.phis.size(); ++n) {
        cos_[n] = std::cos(p.phis[n]);
        sin_[n] = std::sin(p.phis[n]);
    }
}

void MeshOperator::apply(std::span<double> x) const {
    // U x = D R_0 R_1 ... R_{n-1} x: the last factor acts first.
    for (std::size_t n = pairs_.size(); n-- > 0;) {
        const auto [i, j] = pairs_[n];
        const double xi = x[i];
        const double xj = x[j];
        x[j] = cos_[n] * xj - sin_[n] * xi;
        x[i] = sin_[n] * xj + cos_[n] * xi;
    }
    for (std::size_t i = 0; i < k_; ++i) {
        x[i] *= d_[i];
    }
}

void MeshOperator::apply_transpose(std::span<double> x) const {
    for (std::size_t i = 0; i < k_; ++i) {
        x[i] *= d_[i];
    }
    for (std::size_t n = 0; n < pairs_.size(); ++n) {
        const auto [i, j] = pairs_[n];
        const double xi = x[i];
        const double xj = x[j];
        x[j] = cos_[n] * xj + sin_[n] * xi;
        x[i] = -sin_[n] * xj + cos_[n] * xi;
    }
}

Matrix MeshOperator::matrix() const {
    // Row r of the result's transpose is U e_r, i.e. column r of U.
    Matrix ut(k_, k_);
    Vector e(k_);
    for (std::size_t r = 0; r < k_; ++r) {
        std::fill(e.begin(), e.end(), 0.0);
        e[r] = 1.0;
        apply(e);
        std::copy(e.begin(), e.end(), ut.row(r).begin());
    }
    return ut.transposed();
}

Matrix reconstruct_unitary(const UnitaryPhases &p) {
    p.validate();
    return MeshOperator(p).matrix();
}

UnitaryPhases decompose_unitary(const Matrix &u) {
    if (u.rows() != u.cols()) {
        throw InvalidInput("decompose_unitary: matrix must be square");
    }
    const double residual = orthogonality_residual(u);
    if (!(residual <= 1e-6)) {
        throw DecompositionFailure("decompose_unitary: input is not orthogonal (||UU^T - I||_F = " +
                                       std::to_string(residual) + ")",
                                   residual);
    }
    const std::size_t k = u.rows();
    UnitaryPhases out(k);
    if (k < 2) {
        out.d[0] = u(0, 0) < 0.0 ? -1 : 1;
        return out;
    }
    Matrix m = u;
    const auto pairs = mesh_pairs(k);
    Vector raw(pairs.size(), 0.0);
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto [i, j] = pairs[n];
        // R_ij^T on rows (i, j) clears m(j, i) against pivot m(i, i).
        const double a_i = m(i, i);
        const double a_j = m(j, i);
        double r = std::hypot(a_i, a_j);
        if (r == 0.0) {
            continue;
        }
        if (a_i < 0.0) {
            r = -r;
        }
        const double c = a_i / r;
        const double s = a_j / r;
        raw[n] = std::atan2(-s, c);
        auto row_i = m.row(i);
        auto row_j = m.row(j);
        for (std::size_t col = 0; col < k; ++col) {
            const double xi = row_i[col];
            const double xj = row_j[col];
            row_i[col] = c * xi + s * xj;
            row_j[col] = -s * xi + c * xj;
        }
    }
    // Now U = P * S with S = diag(m). Move S to the front: S R_ij(phi) S = R_ij(s_i s_j phi).
    for (std::size_t i = 0; i < k; ++i) {
        out.d[i] = m(i, i) < 0.0 ? -1 : 1;
    }
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto [i, j] = pairs[n];
        out.phis[n] = wrap_phase(out.d[i] * out.d[j] * raw[n]);
    }
    return out;
}

SvdTriple svd(const Matrix &w) {
    if (w.rows() != w.cols()) {
        throw InvalidInput("svd: only square blocks are supported");
    }
    for (double v : w.data()) {
        if (!std::isfinite(v)) {
            throw InvalidInput("svd: matrix entries must be finite");
        }
    }
    const std::size_t n = w.rows();
    // Work on columns: A = W, V = I; rotate column pairs until A^T A is diagonal.
    Matrix a = w.transposed();  // row c of `a` is column c of W
    Matrix v = Matrix::identity(n);  // row c of `v` is column c of V
    constexpr double kTol = 1e-12;
    constexpr int kMaxSweeps = 60;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto ap = a.row(p);
                auto aq = a.row(q);
                const double alpha = dot(ap, ap);
                const double beta = dot(aq, aq);
                const double gamma = dot(ap, aq);
                if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = ap[i];
                    const double y = aq[i];
                    ap[i] = c * x - s * y;
                    aq[i] = s * x + c * y;
                }
                auto vp = v.row(p);
                auto vq = v.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) {
            break;
        }
    }

    Vector sigma(n);
    for (std::size_t c = 0; c < n; ++c) {
        sigma[c] = norm(a.row(c));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdTriple out{Matrix(n, n), Vector(n), Matrix(n, n)};
    const double sigma_max = sigma[order[0]];
    const double null_tol = std::max(sigma_max * 1e-13, 1e-300);
    std::vector<bool> filled(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t c = order[r];
        out.sigma[r] = sigma[c];
        for (std::size_t i = 0; i < n; ++i) {
            out.v_t(r, i) = v(c, i);
        }
        if (sigma[c] > null_tol) {
            for (std::size_t i = 0; i < n; ++i) {
                out.u(i, r) = a(c, i) / sigma[c];
            }
            filled[r] = true;
        } else {
            out.sigma[r] = 0.0;
        }
    }
    // Modified Gram-Schmidt over U's columns in sigma order. Empty columns take the standard basis
    // vector with the largest residual, which is at least 1/sqrt(n).
    auto orthogonalize = [&](Vector &x, std::size_t r) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t prev = 0; prev < r; ++prev) {
                const Vector pc = out.u.column(prev);
                const double proj = dot(pc, x);
                for (std::size_t i = 0; i < n; ++i) {
                    x[i] -= proj * pc[i];
                }
            }
        }
    };
    for (std::size_t r = 0; r < n; ++r) {
        Vector col = out.u.column(r);
        double len = 0.0;
        if (filled[r]) {
            orthogonalize(col, r);
            len = norm(col);
        }
        if (!filled[r] || len < 0.5) {
            len = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                Vector e(n, 0.0);
                e[b] = 1.0;
                orthogonalize(e, r);
                const double l = norm(e);
                if (l > len) {
                    len = l;
                    col = e;
                }
            }
            if (len < 0.5 / std::sqrt(static_cast<double>(n))) {
                throw NumericalAbort("svd: failed to complete orthonormal basis");
            }
        }
        for (double &x : col) {
            x /= len;
        }
        out.u.set_column(r, col);
    }
    return out;
}

}  // namespace ptcflow
