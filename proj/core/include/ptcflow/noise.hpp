#pragma once

#include <cstdint>

#include "ptcflow/linalg.hpp"
#include "ptcflow/mesh.hpp"
#include "ptcflow/phase_program.hpp"

namespace ptcflow {

/// Circuit non-ideality knobs. Defaults are the reference setting: 8-bit mesh phases, 16-bit
/// attenuators, 0.002 shifter variation, 0.005 coupling between adjacent MZIs, unknown phase bias.
struct NoiseConfig {
    int bitwidth_unitary = 8;
    int bitwidth_sigma = 16;
    double gamma_std = 0.002;
    double crosstalk_factor = 0.005;
    bool phase_bias_enabled = true;
    std::uint64_t seed = 0;

    /// 32-bit phases and no variation, crosstalk or bias.
    static NoiseConfig disabled();

    void validate() const;
    bool operator==(const NoiseConfig &) const = default;
};

/// Q(phi) = Round((phi mod 2pi) / (2pi / (2^b - 1))) * 2pi / (2^b - 1), ties away from zero.
double quantize_phase(double phi, int bits);

/// Per-block manufacturing state. Drawn once from the seed, then immutable.
///
/// Each mesh gets one multiplicative factor per MZI rotation phase and one bias per phase. Crosstalk
/// couples each MZI to its two neighbours in mesh_pairs order inside the same mesh; it never couples
/// across the U / V boundary. Attenuator (Sigma) phases only see quantization.
class HiddenNoiseState {
  public:
    HiddenNoiseState() = default;
    HiddenNoiseState(std::size_t k, const NoiseConfig &cfg, std::uint64_t block_seed);

    std::size_t size() const noexcept { return k_; }
    double crosstalk_factor() const noexcept { return crosstalk_; }

    const Vector &gamma_u() const noexcept { return gamma_u_; }
    const Vector &gamma_v() const noexcept { return gamma_v_; }
    const Vector &bias_u() const noexcept { return bias_u_; }
    const Vector &bias_v() const noexcept { return bias_v_; }

    /// Dense coupling matrix Omega for one mesh (unit diagonal, factor on chain neighbours).
    Matrix crosstalk_matrix() const;

    bool operator==(const HiddenNoiseState &) const = default;

  private:
    std::size_t k_ = 0;
    double crosstalk_ = 0.0;
    Vector gamma_u_, gamma_v_;
    Vector bias_u_, bias_v_;
};

/// Phases as the hardware realizes them.
struct EffectivePhases {
    UnitaryPhases u;
    UnitaryPhases v;
    Vector sigma_phases;
};

/// Omega * (Gamma * Q(phi)) + Phi_b for each mesh; Q at bitwidth_sigma for the attenuators.
EffectivePhases apply_noise(const PhaseProgram &program, const HiddenNoiseState &state, const NoiseConfig &cfg);

/// Realizes one mesh only. `which_v` selects the V* mesh's variation and bias draws.
UnitaryPhases realize_mesh(const UnitaryPhases &programmed, const HiddenNoiseState &state, const NoiseConfig &cfg,
                           bool which_v);

}  // namespace ptcflow
