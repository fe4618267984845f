#include "ptcflow/phase_program.hpp"

#include <algorithm>
#include <cmath>

#include "ptcflow/errors.hpp"

namespace ptcflow {

void PhaseProgram::validate() const {
    phi_u.validate();
    phi_v.validate();
    if (phi_v.k != phi_u.k || phi_sigma.size() != phi_u.k) {
        throw InvalidInput("PhaseProgram: U, V and Sigma sizes differ");
    }
    if (!(sigma_scale > 0.0) || !std::isfinite(sigma_scale)) {
        throw InvalidInput("PhaseProgram: sigma_scale must be positive and finite");
    }
}

void encode_sigma(std::span<const double> sigma, Vector &phi_sigma, double &sigma_scale) {
    double scale = 0.0;
    for (double s : sigma) {
        if (!std::isfinite(s)) {
            throw NumericalAbort("encode_sigma: non-finite singular value");
        }
        scale = std::max(scale, std::abs(s));
    }
    phi_sigma.resize(sigma.size());
    if (scale == 0.0) {
        sigma_scale = 1.0;
        std::fill(phi_sigma.begin(), phi_sigma.end(), kPi / 2.0);
        return;
    }
    sigma_scale = scale;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        phi_sigma[i] = std::acos(std::clamp(sigma[i] / scale, -1.0, 1.0));
    }
}

PhaseProgram PhaseProgram::from_matrix(const Matrix &w) {
    const SvdTriple t = svd(w);
    PhaseProgram p;
    p.phi_u = decompose_unitary(t.u);
    p.phi_v = decompose_unitary(t.v_t);
    encode_sigma(t.sigma, p.phi_sigma, p.sigma_scale);
    return p;
}

nlohmann::json to_json(const PhaseProgram &p) {
    return nlohmann::json{{"k", p.size()},
                          {"phi_u", p.phi_u.phis},
                          {"d_u", p.phi_u.d},
                          {"phi_v", p.phi_v.phis},
                          {"d_v", p.phi_v.d},
                          {"phi_sigma", p.phi_sigma},
                          {"sigma_scale", p.sigma_scale}};
}

PhaseProgram phase_program_from_json(const nlohmann::json &j) {
    try {
        const auto k = j.at("k").get<std::size_t>();
        PhaseProgram p(k);
        p.phi_u.phis = j.at("phi_u").get<Vector>();
        p.phi_u.d = j.at("d_u").get<std::vector<int>>();
        p.phi_v.phis = j.at("phi_v").get<Vector>();
        p.phi_v.d = j.at("d_v").get<std::vector<int>>();
        p.phi_sigma = j.at("phi_sigma").get<Vector>();
        p.sigma_scale = j.at("sigma_scale").get<double>();
        p.validate();
        return p;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("phase program checkpoint: ") + e.what());
    }
}

}  // namespace ptcflow
