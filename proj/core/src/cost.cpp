#include "ptcflow/cost.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ptcflow/errors.hpp"

namespace ptcflow {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

double pos(double x) { return x > 0.0 ? x : 0.0; }

bool overlapping(const LayerDims &d) { return d.kernel > 1 && d.stride < d.kernel; }

}  // namespace

CostMeter &CostMeter::operator+=(const CostMeter &o) noexcept {
    energy_forward += o.energy_forward;
    energy_weight_grad += o.energy_weight_grad;
    energy_feedback += o.energy_feedback;
    return *this;
}

PhaseTotals &PhaseTotals::operator+=(const PhaseTotals &o) noexcept {
    forward += o.forward;
    weight_grad += o.weight_grad;
    feedback += o.feedback;
    return *this;
}

LayerDims LayerDims::linear(std::size_t out, std::size_t in, std::size_t k) {
    LayerDims d;
    d.c_out = out;
    d.c_in = in;
    d.k = k;
    d.validate();
    return d;
}

LayerDims LayerDims::conv(std::size_t c_out, std::size_t c_in, std::size_t kernel, std::size_t stride,
                          std::size_t padding, std::size_t h, std::size_t w, std::size_t k) {
    if (kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel) {
        throw ShapeError("LayerDims::conv: kernel does not fit the padded input");
    }
    LayerDims d;
    d.c_out = c_out;
    d.c_in = c_in;
    d.kernel = kernel;
    d.stride = stride;
    d.h = h;
    d.w = w;
    d.h_out = (h + 2 * padding - kernel) / stride + 1;
    d.w_out = (w + 2 * padding - kernel) / stride + 1;
    d.k = k;
    d.validate();
    return d;
}

void LayerDims::validate() const {
    if (c_out == 0 || c_in == 0 || kernel == 0 || stride == 0 || h == 0 || w == 0 || h_out == 0 || w_out == 0 ||
        k < 2) {
        throw ShapeError("LayerDims: all dimensions must be positive and k >= 2");
    }
}

PhaseTotals energy(const LayerDims &d, std::size_t kept_columns, std::size_t kept_blocks, std::size_t batch) {
    d.validate();
    const double b = static_cast<double>(batch);
    PhaseTotals e;
    e.forward = static_cast<double>(d.c_out * d.c_in * d.kernel * d.kernel) * b * static_cast<double>(d.columns());
    e.weight_grad = 2.0 * static_cast<double>(kept_columns) * b * static_cast<double>(d.p() * d.q());
    e.feedback = static_cast<double>(kept_blocks) * b * static_cast<double>(d.h * d.w);
    return e;
}

double feedback_steps(const LayerDims &d, std::size_t max_row_sum, std::size_t batch) {
    d.validate();
    const double b = static_cast<double>(batch);
    const double depth = pos(static_cast<double>(max_row_sum) - 1.0);
    if (overlapping(d)) {
        const double fan = static_cast<double>(ceil_div(d.c_in, d.p()));
        const double tree = std::ceil(std::log2(2.0 * static_cast<double>(d.k)));
        return fan * tree * std::ceil(0.5 * depth) * b * static_cast<double>(d.h * d.w);
    }
    return depth * b * static_cast<double>(d.columns());
}

PhaseTotals timesteps(const LayerDims &d, std::size_t kept_columns, const FeedbackMask &mask, std::size_t batch) {
    d.validate();
    const std::size_t bhw = batch * d.columns();
    PhaseTotals t;
    t.forward = pos(static_cast<double>(d.q()) - 1.0) * static_cast<double>(bhw) +
                static_cast<double>(ceil_div(bhw, d.k));
    t.weight_grad = 4.0 * static_cast<double>(kept_columns) * static_cast<double>(batch);
    t.feedback = feedback_steps(d, mask.max_row_sum(), batch);
    return t;
}

double feedback_max_term(const FeedbackMask &mask) { return pos(static_cast<double>(mask.max_row_sum()) - 1.0); }

double feedback_mean_term(const FeedbackMask &mask) { return pos(mask.mean_row_sum() - 1.0); }

std::size_t planned_kept_blocks(const LayerDims &d, const SamplingPlan &plan) {
    if (plan.feedback_mode == FeedbackMode::none) {
        return d.p() * d.q();
    }
    if (plan.feedback_mode == FeedbackMode::topk) {
        return keep_count(plan.alpha_w, d.p() * d.q());
    }
    return d.q() * keep_count(plan.alpha_w, d.p());
}

std::size_t planned_max_row_sum(const LayerDims &d, const SamplingPlan &plan) {
    if (plan.feedback_mode == FeedbackMode::none) {
        return d.p();
    }
    if (plan.feedback_mode == FeedbackMode::topk) {
        // Worst case: the selected blocks pile into as few rows as possible.
        return std::min(d.p(), keep_count(plan.alpha_w, d.p() * d.q()));
    }
    return keep_count(plan.alpha_w, d.p());
}

std::size_t planned_kept_columns(const LayerDims &d, const SamplingPlan &plan) {
    return keep_count(plan.alpha_c, d.columns());
}

StageCost stage_cost(Stage s, const StageCostInput &in) {
    if (in.k < 2 || in.width == 0 || in.layers == 0) {
        throw ConfigError("stage_cost: k >= 2 and positive sizes required");
    }
    const double k = static_cast<double>(in.k);
    const double l = static_cast<double>(in.layers);
    const double n = static_cast<double>(in.width);
    const double t = static_cast<double>(in.iterations);
    const double bhw = static_cast<double>(in.batch * in.h * in.w);
    StageCost c;
    switch (s) {
    case Stage::ic:
        c.steps = 2.0 * k * (k - 1.0) * t;
        c.ptc_calls = 2.0 * l * n * n * t;
        break;
    case Stage::pm:
        c.steps = 2.0 * l * n * n * (k - 1.0) * t / k + 3.0;
        c.ptc_calls = 2.0 * l * n * n * t;
        break;
    case Stage::sl:
        c.steps = t * l * n * bhw / k;
        c.ptc_calls = 4.0 * t * l * (n / k) * (n / k) * bhw;
        break;
    }
    return c;
}

void CostReport::set_baseline(const CostReport &b) {
    baseline_name = b.name;
    baseline_energy = b.energy.total();
    baseline_steps = b.steps.total();
}

nlohmann::json CostReport::to_json() const {
    auto phases = [](const PhaseTotals &p) {
        return nlohmann::json{
            {"forward", p.forward}, {"weight_grad", p.weight_grad}, {"feedback", p.feedback}, {"total", p.total()}};
    };
    nlohmann::json j{{"name", name}, {"energy", phases(energy)}, {"steps", phases(steps)}};
    if (!baseline_name.empty()) {
        j["baseline"] = baseline_name;
        j["energy_ratio"] = energy_ratio();
        j["steps_ratio"] = steps_ratio();
    }
    return j;
}

void CostReport::write_csv(std::ostream &os) const {
    os << "phase,energy,steps,energy_ratio,steps_ratio\n";
    os.precision(17);
    os << "forward," << energy.forward << ',' << steps.forward << ",,\n";
    os << "weight_grad," << energy.weight_grad << ',' << steps.weight_grad << ",,\n";
    os << "feedback," << energy.feedback << ',' << steps.feedback << ",,\n";
    os << "total," << energy.total() << ',' << steps.total() << ',';
    if (!baseline_name.empty()) {
        os << energy_ratio() << ',' << steps_ratio();
    } else {
        os << ',';
    }
    os << '\n';
}

CostReport profile_iteration(const std::vector<LayerDims> &layers, const SamplingPlan &plan, std::size_t batch,
                             const std::string &name) {
    plan.validate();
    CostReport r;
    r.name = name;
    for (const LayerDims &d : layers) {
        const std::size_t cols = planned_kept_columns(d, plan);
        r.energy += energy(d, cols, planned_kept_blocks(d, plan), batch);
        PhaseTotals t;
        const std::size_t bhw = batch * d.columns();
        t.forward = pos(static_cast<double>(d.q()) - 1.0) * static_cast<double>(bhw) +
                    static_cast<double>(ceil_div(bhw, d.k));
        t.weight_grad = 4.0 * static_cast<double>(cols) * static_cast<double>(batch);
        t.feedback = feedback_steps(d, planned_max_row_sum(d, plan), batch);
        r.steps += t;
    }
    for (PhaseTotals *p : {&r.energy, &r.steps}) {
        p->forward *= plan.alpha_d;
        p->weight_grad *= plan.alpha_d;
        p->feedback *= plan.alpha_d;
    }
    return r;
}

}  // namespace ptcflow
