#include "ptcflow/optim.hpp"

#include <algorithm>
#include <cmath>

#include "ptcflow/errors.hpp"
#include "ptcflow/mesh.hpp"

namespace ptcflow {

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0) ||
        !(cfg.weight_decay >= 0.0)) {
        throw ConfigError("adamw: betas must lie in [0, 1), eps > 0 and weight decay >= 0");
    }
}

void AdamW::step(const std::vector<Param> &params, double lr) {
    if (m_.empty()) {
        for (const Param &p : params) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }
    if (params.size() != m_.size()) {
        throw ShapeError("adamw: parameter list changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Param &p = params[i];
        Vector &m = m_[i];
        Vector &v = v_[i];
        if (m.size() != p.value.size()) {
            throw ShapeError("adamw: parameter size changed between steps");
        }
        const double shrink = p.decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double g = p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            p.value[j] = p.value[j] * shrink - lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

double cosine_lr(double t, double total, double lr0, double lr_min) {
    if (!(total > 0.0)) {
        return lr0;
    }
    const double x = std::clamp(t, 0.0, total) / total;
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(kPi * x));
}

}  // namespace ptcflow
