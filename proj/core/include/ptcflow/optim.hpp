#pragma once

#include <cstdint>
#include <vector>

#include "ptcflow/linalg.hpp"
#include "ptcflow/nn.hpp"

namespace ptcflow {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adaptive-moment update with decoupled weight decay. Moment buffers are bound to the order of the
/// parameter list passed on the first step.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg = {});

    /// theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
    void step(const std::vector<Param> &params, double lr);
    std::uint64_t steps() const noexcept { return t_; }

  private:
    AdamWConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Vector> m_, v_;
};

/// eta_min + (eta_0 - eta_min) (1 + cos(pi t / T)) / 2, with t clamped to [0, T].
double cosine_lr(double t, double total, double lr0, double lr_min = 0.0);

}  // namespace ptcflow
