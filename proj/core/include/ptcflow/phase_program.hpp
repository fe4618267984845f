#pragma once

#include <cstddef>

#include <nlohmann/json.hpp>

#include "ptcflow/linalg.hpp"
#include "ptcflow/mesh.hpp"

namespace ptcflow {

/// Everything a controller may write into one k x k photonic tensor core. The realized singular
/// values are sigma_scale * cos(phi_sigma[i]), so |sigma_i| <= sigma_scale always holds.
struct PhaseProgram {
    UnitaryPhases phi_u;
    UnitaryPhases phi_v;
    Vector phi_sigma;
    double sigma_scale = 1.0;

    PhaseProgram() = default;
    /// U = V* = I, Sigma = I.
    explicit PhaseProgram(std::size_t k) : phi_u(k), phi_v(k), phi_sigma(k, 0.0) {}

    std::size_t size() const noexcept { return phi_u.k; }
    void validate() const;

    /// Exact (noise-free) program for a target block: SVD, Reck decomposition of both factors,
    /// and the arccos re-parametrization of the singular values.
    static PhaseProgram from_matrix(const Matrix &w);

    bool operator==(const PhaseProgram &) const = default;
};

/// Singular values -> (phi_sigma, sigma_scale). scale = max |sigma|; an all-zero vector maps to
/// scale 1 and phases pi/2.
void encode_sigma(std::span<const double> sigma, Vector &phi_sigma, double &sigma_scale);

/// Checkpoint form: {"k","phi_u","d_u","phi_v","d_v","phi_sigma","sigma_scale"}.
nlohmann::json to_json(const PhaseProgram &p);
PhaseProgram phase_program_from_json(const nlohmann::json &j);

}  // namespace ptcflow
