#pragma once

// Oracle access to a block's hidden state. Test and acceptance code only: anything that models
// on-chip training must stay on the PTCBlock port interface.

#include <cmath>

#include "ptcflow/ptc_block.hpp"

namespace ptcflow::testing {

class HiddenStateProbe {
  public:
    static const Matrix &effective_u(const PTCBlock &b) { return b.u_; }
    static const Matrix &effective_vt(const PTCBlock &b) { return b.vt_; }
    static const Matrix &effective_w(const PTCBlock &b) { return b.w_; }
    static const HiddenNoiseState &hidden(const PTCBlock &b) { return b.hidden_; }

    /// ||(|U~| - I)||_F^2 / k^2
    static double mse_u(const PTCBlock &b) { return abs_identity_mse(b.u_); }
    static double mse_v(const PTCBlock &b) { return abs_identity_mse(b.vt_); }

    /// Signs on the diagonal of each realized mesh.
    static SignFlipMatrix sign_flip_u(const PTCBlock &b) { return diag_signs(b.u_); }
    static SignFlipMatrix sign_flip_v(const PTCBlock &b) { return diag_signs(b.vt_); }

  private:
    static double abs_identity_mse(const Matrix &m) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const double d = std::abs(m(i, j)) - (i == j ? 1.0 : 0.0);
                s += d * d;
            }
        }
        return s / static_cast<double>(m.rows() * m.cols());
    }
    static SignFlipMatrix diag_signs(const Matrix &m) {
        std::vector<int> s(m.rows());
        for (std::size_t i = 0; i < m.rows(); ++i) {
            s[i] = m(i, i) < 0.0 ? -1 : 1;
        }
        return SignFlipMatrix(std::move(s));
    }
};

}  // namespace ptcflow::testing
