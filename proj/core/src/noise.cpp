#include "ptcflow/noise.hpp"

#include <cmath>
#include <random>

#include "ptcflow/errors.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

NoiseConfig NoiseConfig::disabled() {
    NoiseConfig c;
    c.bitwidth_unitary = 32;
    c.bitwidth_sigma = 32;
    c.gamma_std = 0.0;
    c.crosstalk_factor = 0.0;
    c.phase_bias_enabled = false;
    return c;
}

void NoiseConfig::validate() const {
    if (bitwidth_unitary < 1 || bitwidth_unitary > 32 || bitwidth_sigma < 1 || bitwidth_sigma > 32) {
        throw ConfigError("noise: bitwidths must lie in [1, 32]");
    }
    if (!(gamma_std >= 0.0)) {
        throw ConfigError("noise: gamma_std must be >= 0");
    }
    if (!(crosstalk_factor >= 0.0 && crosstalk_factor < 1.0)) {
        throw ConfigError("noise: crosstalk_factor must lie in [0, 1)");
    }
}

double quantize_phase(double phi, int bits) {
    if (bits < 1) {
        throw InvalidInput("quantize_phase: bits must be >= 1");
    }
    const double step = kTwoPi / (std::ldexp(1.0, bits) - 1.0);
    double wrapped = std::fmod(phi, kTwoPi);
    if (wrapped < 0.0) {
        wrapped += kTwoPi;
    }
    return std::round(wrapped / step) * step;
}

HiddenNoiseState::HiddenNoiseState(std::size_t k, const NoiseConfig &cfg, std::uint64_t block_seed)
    : k_(k), crosstalk_(cfg.crosstalk_factor) {
    cfg.validate();
    const std::size_t n = mesh_size(k);
    Rng rng(derive_seed(cfg.seed, {tag(SeedStage::chip), block_seed}));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
    auto draw_gamma = [&](Vector &g) {
        g.resize(n);
        for (double &x : g) {
            x = 1.0 + cfg.gamma_std * gauss(rng);
        }
    };
    auto draw_bias = [&](Vector &b) {
        b.assign(n, 0.0);
        if (cfg.phase_bias_enabled) {
            for (double &x : b) {
                x = uniform(rng);
            }
        }
    };
    draw_gamma(gamma_u_);
    draw_gamma(gamma_v_);
    draw_bias(bias_u_);
    draw_bias(bias_v_);
}

Matrix HiddenNoiseState::crosstalk_matrix() const {
    const std::size_t n = mesh_size(k_);
    Matrix omega = Matrix::identity(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        omega(i, i + 1) = crosstalk_;
        omega(i + 1, i) = crosstalk_;
    }
    return omega;
}

UnitaryPhases realize_mesh(const UnitaryPhases &programmed, const HiddenNoiseState &state, const NoiseConfig &cfg,
                           bool which_v) {
    const std::size_t n = programmed.phis.size();
    if (programmed.k != state.size() || n != mesh_size(state.size())) {
        throw ConfigError("apply_noise: program and hidden state sizes differ");
    }
    const Vector &gamma = which_v ? state.gamma_v() : state.gamma_u();
    const Vector &bias = which_v ? state.bias_v() : state.bias_u();
    Vector varied(n);
    for (std::size_t i = 0; i < n; ++i) {
        varied[i] = gamma[i] * quantize_phase(programmed.phis[i], cfg.bitwidth_unitary);
    }
    UnitaryPhases out = programmed;
    const double xt = state.crosstalk_factor();
    for (std::size_t i = 0; i < n; ++i) {
        double coupled = varied[i];
        if (xt != 0.0) {
            if (i > 0) {
                coupled += xt * varied[i - 1];
            }
            if (i + 1 < n) {
                coupled += xt * varied[i + 1];
            }
        }
        out.phis[i] = coupled + bias[i];
    }
    return out;
}

EffectivePhases apply_noise(const PhaseProgram &program, const HiddenNoiseState &state, const NoiseConfig &cfg) {
    if (program.size() != state.size() || program.phi_sigma.size() != state.size()) {
        throw ConfigError("apply_noise: program and hidden state sizes differ");
    }
    EffectivePhases eff{realize_mesh(program.phi_u, state, cfg, false), realize_mesh(program.phi_v, state, cfg, true),
                        Vector(program.phi_sigma.size())};
    for (std::size_t i = 0; i < eff.sigma_phases.size(); ++i) {
        eff.sigma_phases[i] = quantize_phase(program.phi_sigma[i], cfg.bitwidth_sigma);
    }
    return eff;
}

}  // namespace ptcflow
