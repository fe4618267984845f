#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ptcflow/linalg.hpp"

namespace ptcflow {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Wraps an angle into [0, 2pi).
double wrap_phase(double phi);

/// 2x2 planar rotator [[cos, -sin], [sin, cos]].
Matrix rotator(double phi);

/// Physical phase-shifter settings of one MZI: top/left input shifters and the two arm shifters.
struct MziPhaseSettings {
    double theta_t;
    double theta_l;
    double omega_p;
    double omega_w;
};

/// Shifter settings that make an MZI act as rotator(phi): theta_T = pi/2, theta_L = 3pi/2,
/// arm phases centred on pi with difference pi - 2 phi.
MziPhaseSettings mzi_phase_settings(double phi);

using Complex2x2 = std::array<std::array<std::complex<double>, 2>, 2>;

/// Full four-shifter transfer matrix: coupler * diag(e^{j w_P}, e^{j w_W}) * coupler * diag(e^{j t_T}, e^{j t_L}).
Complex2x2 mzi_transfer_matrix(const MziPhaseSettings &s);

/// (i, j) pairs of a k x k triangular mesh in product order: i = k-1 .. 1, then j = 0 .. i-1 (0-based).
std::vector<std::pair<std::size_t, std::size_t>> mesh_pairs(std::size_t k);

inline constexpr std::size_t mesh_size(std::size_t k) noexcept { return k * (k - 1) / 2; }

/// Phases of a Reck-style triangular mesh plus the output sign diagonal:
/// U = D * prod_{i=k-1..1} prod_{j=0..i-1} R_ij(phi_ij), where R_ij (j < i) embeds rotator(phi) on
/// rows/columns (j, i): cos at (j,j) and (i,i), -sin at (j,i), sin at (i,j).
struct UnitaryPhases {
    std::size_t k = 0;
    Vector phis;         // mesh_size(k) entries in mesh_pairs order
    std::vector<int> d;  // +1 / -1, length k

    UnitaryPhases() = default;
    explicit UnitaryPhases(std::size_t k_) : k(k_), phis(mesh_size(k_), 0.0), d(k_, 1) {}

    /// Throws InvalidInput on inconsistent lengths or non +-1 signs.
    void validate() const;

    bool operator==(const UnitaryPhases &) const = default;
};

Matrix reconstruct_unitary(const UnitaryPhases &p);

/// Givens elimination: column k-1 is cleared first using rotations in planes (k-1, j), j ascending,
/// then the leading (k-1)x(k-1) block recursively. Rotation angles are taken in (-pi/2, pi/2] so the
/// remaining diagonal is +-1; those signs are moved in front of the product into d, and every phase is
/// wrapped into [0, 2pi). Throws DecompositionFailure when ||U U^T - I||_F > 1e-6.
UnitaryPhases decompose_unitary(const Matrix &u);

/// Precomputed cos/sin of a mesh for repeated vector passes.
class MeshOperator {
  public:
    MeshOperator() = default;
    explicit MeshOperator(const UnitaryPhases &p);

    std::size_t size() const noexcept { return k_; }

    /// x <- U x
    void apply(std::span<double> x) const;
    /// x <- U^T x
    void apply_transpose(std::span<double> x) const;
    /// Dense U.
    Matrix matrix() const;

  private:
    std::size_t k_ = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs_;
    Vector cos_;
    Vector sin_;
    std::vector<int> d_;
};

struct SvdTriple {
    Matrix u;
    Vector sigma;  // non-increasing, non-negative
    Matrix v_t;
};

/// One-sided Jacobi SVD, sweeping until every column pair is orthogonal to 1e-12 (relative) or
/// 60 sweeps have run. Null-space columns of U are completed to an orthonormal basis.
SvdTriple svd(const Matrix &w);

}  // namespace ptcflow
