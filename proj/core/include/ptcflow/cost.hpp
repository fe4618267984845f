#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/sampling.hpp"

namespace ptcflow {

/// Measured counters filled in by the photonic layer routines.
///
/// Forward energy counts one unit per weight entry touched by a block pass (valid rows x valid
/// columns), which sums to C_out * C_in * K^2 per input column. Weight-gradient and feedback energy
/// count block passes.
struct CostMeter {
    std::uint64_t energy_forward = 0;
    std::uint64_t energy_weight_grad = 0;
    std::uint64_t energy_feedback = 0;

    std::uint64_t total() const noexcept { return energy_forward + energy_weight_grad + energy_feedback; }
    CostMeter &operator+=(const CostMeter &o) noexcept;
    bool operator==(const CostMeter &) const = default;
};

/// Geometry of one photonic layer. A linear layer is a 1 x 1 convolution on a 1 x 1 map.
struct LayerDims {
    std::size_t c_out = 1;
    std::size_t c_in = 1;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t h = 1, w = 1;          // input map
    std::size_t h_out = 1, w_out = 1;  // output map
    std::size_t k = 9;

    static LayerDims linear(std::size_t out, std::size_t in, std::size_t k);
    static LayerDims conv(std::size_t c_out, std::size_t c_in, std::size_t kernel, std::size_t stride,
                          std::size_t padding, std::size_t h, std::size_t w, std::size_t k);

    std::size_t p() const noexcept { return (c_out + k - 1) / k; }
    std::size_t q() const noexcept { return (c_in * kernel * kernel + k - 1) / k; }
    std::size_t columns() const noexcept { return h_out * w_out; }
    void validate() const;
};

/// Per-phase totals (energy in PTC calls, time in accumulation steps).
struct PhaseTotals {
    double forward = 0.0;
    double weight_grad = 0.0;
    double feedback = 0.0;
    double total() const noexcept { return forward + weight_grad + feedback; }
    PhaseTotals &operator+=(const PhaseTotals &o) noexcept;
};

/// forward = C_out C_in K^2 B H'W'; weight-grad = 2 Tr(S_C^T S_C) B P Q; feedback = Tr(S_W^T S_W) B H W.
/// `kept_columns` is Tr(S_C^T S_C) and `kept_blocks` is Tr(S_W^T S_W).
PhaseTotals energy(const LayerDims &d, std::size_t kept_columns, std::size_t kept_blocks, std::size_t batch);

/// forward = (Q-1)+ B H'W' + ceil(B H'W' / k); weight-grad = 4 Tr(S_C^T S_C) B; feedback from the
/// K > 1 (stride < K) or K = 1 branch using the mask's largest row sum.
PhaseTotals timesteps(const LayerDims &d, std::size_t kept_columns, const FeedbackMask &mask, std::size_t batch);

/// ceil(C_in / P) ceil(log2 2k) ceil(max_q((sum S_W(q,:) - 1)+) / 2) B H W for K > 1, stride < K;
/// max_q((sum S_W(q,:) - 1)+) B H'W' otherwise.
double feedback_steps(const LayerDims &d, std::size_t max_row_sum, std::size_t batch);

/// The accumulation term of the feedback step formula evaluated on the largest and on the mean row
/// sum of a mask.
double feedback_max_term(const FeedbackMask &mask);
double feedback_mean_term(const FeedbackMask &mask);

/// Expected per-iteration mask statistics for a sampling plan on one layer (balanced modes).
std::size_t planned_kept_blocks(const LayerDims &d, const SamplingPlan &plan);
std::size_t planned_max_row_sum(const LayerDims &d, const SamplingPlan &plan);
std::size_t planned_kept_columns(const LayerDims &d, const SamplingPlan &plan);

enum class Stage { ic, pm, sl };

struct StageCostInput {
    std::size_t k = 9;
    std::size_t layers = 1;   // L
    std::size_t width = 9;    // N, for an N x N weight per layer
    std::size_t iterations = 1;  // T
    std::size_t batch = 1;
    std::size_t h = 1, w = 1;
};

struct StageCost {
    double steps = 0.0;
    double ptc_calls = 0.0;
};

/// IC: 2k(k-1)T steps, 2LN^2 T calls. PM: 2LN^2(k-1)T/k + 3 steps, 2LN^2 T calls.
/// SL: T L N B H W / k steps and 4 T L (N/k)^2 B H W calls (one forward, two weight-gradient and
/// one feedback pass per block and pixel).
StageCost stage_cost(Stage s, const StageCostInput &in);

/// Table-shaped report with an optional baseline for ratio columns.
struct CostReport {
    std::string name;
    PhaseTotals energy;
    PhaseTotals steps;
    std::string baseline_name;
    double baseline_energy = 0.0;
    double baseline_steps = 0.0;

    double energy_ratio() const { return energy.total() > 0.0 ? baseline_energy / energy.total() : 0.0; }
    double steps_ratio() const { return steps.total() > 0.0 ? baseline_steps / steps.total() : 0.0; }
    void set_baseline(const CostReport &b);

    nlohmann::json to_json() const;
    /// phase,energy,steps rows followed by a total row with ratio columns.
    void write_csv(std::ostream &os) const;
};

/// Profiles one training iteration of a network given per-layer geometry and a sampling plan.
/// Data sampling scales every phase by alpha_d.
CostReport profile_iteration(const std::vector<LayerDims> &layers, const SamplingPlan &plan, std::size_t batch,
                             const std::string &name = "");

}  // namespace ptcflow
