#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "ptcflow/linalg.hpp"
#include "ptcflow/noise.hpp"
#include "ptcflow/phase_program.hpp"

namespace ptcflow {

namespace testing {
class HiddenStateProbe;
}

/// Diagonal +-1 matrix.
struct SignFlipMatrix {
    std::vector<int> signs;

    SignFlipMatrix() = default;
    explicit SignFlipMatrix(std::vector<int> s);
    static SignFlipMatrix identity(std::size_t k) { return SignFlipMatrix(std::vector<int>(k, 1)); }

    std::size_t size() const noexcept { return signs.size(); }
    Matrix matrix() const;
    SignFlipMatrix operator*(const SignFlipMatrix &o) const;
    bool operator==(const SignFlipMatrix &) const = default;
};

/// One simulated k x k photonic tensor core.
///
/// Callers program phases and observe the block only through optical port vectors and the monitored
/// Sigma diagonal. Realized matrices are rebuilt whenever the program changes, so passes are cheap
/// reads and may run concurrently on an unmodified block.
class PTCBlock {
  public:
    PTCBlock() = default;
    PTCBlock(std::size_t k, const NoiseConfig &cfg, std::uint64_t block_seed);

    PTCBlock(const PTCBlock &o);
    PTCBlock &operator=(const PTCBlock &o);
    PTCBlock(PTCBlock &&o) noexcept;
    PTCBlock &operator=(PTCBlock &&o) noexcept;

    std::size_t size() const noexcept { return k_; }
    const NoiseConfig &noise_config() const noexcept { return cfg_; }

    const PhaseProgram &program() const noexcept { return program_; }
    void set_program(const PhaseProgram &p);
    void set_phi_u(const UnitaryPhases &p);
    void set_phi_v(const UnitaryPhases &p);
    void set_sigma_phases(const Vector &phi_sigma, double sigma_scale);
    /// Encodes desired singular values via arccos with scale = max |sigma|.
    void set_sigma_values(std::span<const double> sigma);

    /// Programs that realize the calibrated (sign-flip) state of each mesh. Written by identity
    /// calibration and used as the reference for OSP passes and mapping initialization.
    const UnitaryPhases &calibration_u() const noexcept { return calib_u_; }
    const UnitaryPhases &calibration_v() const noexcept { return calib_v_; }
    void set_calibration(const UnitaryPhases &u, const UnitaryPhases &v);

    /// y = U~ Sigma~ V*~ x.
    Vector forward(std::span<const double> x) const;
    /// Full reverse pass: W~^T z.
    Vector adjoint(std::span<const double> z) const;
    /// U~ x and U~^T z through the U mesh alone.
    Vector forward_u(std::span<const double> x) const;
    Vector adjoint_u(std::span<const double> z) const;
    /// V*~ x and its reverse V~ x through the V* mesh alone.
    Vector forward_v(std::span<const double> x) const;
    Vector adjoint_v(std::span<const double> x) const;

    /// Output-parameter forms of the passes above; `out` must not alias the input.
    void forward(std::span<const double> x, std::span<double> out) const;
    void adjoint(std::span<const double> z, std::span<double> out) const;
    void adjoint_u(std::span<const double> z, std::span<double> out) const;
    void forward_v(std::span<const double> x, std::span<double> out) const;

    /// Realized Sigma diagonal (quantized at bitwidth_sigma).
    Vector read_sigma() const;

    /// Optimal singular-value projection onto `target` using two optical passes with the
    /// opposite mesh held in its calibrated state. `noisy_passes = false` idealizes both passes.
    void osp_project(const Matrix &target, bool noisy_passes = true);

    /// (U~^T dy) * (V*~ x), elementwise.
    Vector subspace_grad(std::span<const double> x, std::span<const double> dy) const;
    /// g += (U~^T dy) * (V*~ x); `scratch` needs 2k entries.
    void accumulate_subspace_grad(std::span<const double> x, std::span<const double> dy, std::span<double> g,
                                  std::span<double> scratch) const;

    /// Number of optical passes issued since construction or the last reset.
    std::uint64_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }
    void reset_calls() noexcept { calls_.store(0, std::memory_order_relaxed); }
    void add_calls(std::uint64_t n) const noexcept { calls_.fetch_add(n, std::memory_order_relaxed); }

  private:
    friend class testing::HiddenStateProbe;

    void check(std::span<const double> x) const;
    void realize_u();
    void realize_v();
    void realize_sigma();
    void rebuild_w();
    Matrix realize_calibration(const UnitaryPhases &programmed, bool which_v) const;

    std::size_t k_ = 0;
    NoiseConfig cfg_;
    HiddenNoiseState hidden_;
    PhaseProgram program_;
    UnitaryPhases calib_u_, calib_v_;

    Matrix u_, vt_, w_;
    Vector sigma_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

/// Block checkpoint in the program JSON form.
inline nlohmann::json to_json(const PTCBlock &b) { return to_json(b.program()); }

}  // namespace ptcflow
