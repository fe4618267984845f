#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/linalg.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

enum class FeedbackMode { uniform, topk, btopk, none };
enum class SampleNorm { none, exp, var };

FeedbackMode parse_feedback_mode(const std::string &s);
SampleNorm parse_sample_norm(const std::string &s);
std::string to_string(FeedbackMode m);
std::string to_string(SampleNorm n);

/// Multi-level sparsity settings. Every alpha is a keep-density in (0, 1].
struct SamplingPlan {
    FeedbackMode feedback_mode = FeedbackMode::btopk;
    double alpha_w = 1.0;
    SampleNorm feedback_norm = SampleNorm::exp;
    double alpha_c = 1.0;
    SampleNorm column_norm = SampleNorm::none;
    double alpha_d = 1.0;
    /// btopk draws each row's blocks without replacement with probability proportional to the block
    /// norm instead of taking the deterministic top-K.
    bool stochastic_btopk = false;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SamplingPlan &) const = default;
};

nlohmann::json to_json(const SamplingPlan &p);
SamplingPlan sampling_plan_from_json(const nlohmann::json &j);

/// Boolean Q x P mask over the blocks of a feedback matrix W^T plus its scale c_W.
struct FeedbackMask {
    std::size_t q = 0;
    std::size_t p = 0;
    std::vector<std::uint8_t> keep;  // row-major, q rows of p entries
    double scale = 1.0;

    static FeedbackMask dense(std::size_t q, std::size_t p);

    bool kept(std::size_t row, std::size_t col) const { return keep[row * p + col] != 0; }
    std::size_t row_sum(std::size_t row) const;
    /// Tr(S_W^T S_W): number of kept blocks.
    std::size_t total() const;
    std::size_t max_row_sum() const;
    double mean_row_sum() const;
};

/// Per-row keep count ceil(alpha * n), at least 1.
std::size_t keep_count(double alpha, std::size_t n);

/// Scale for `kept` of `total` entries: none 1, exp total/kept, var sqrt(total/kept).
double sample_scale(SampleNorm norm, std::size_t kept, std::size_t total);

/// S_W for a Q x P grid of squared block norms ||W_pq||_F^2 (row q, column p).
/// uniform: ceil(alpha P) blocks per row at random; topk: the ceil(alpha PQ) largest blocks overall;
/// btopk: the ceil(alpha P) largest blocks of each row, ties to the lower index; none: dense.
FeedbackMask build_feedback_mask(const Matrix &norms, const SamplingPlan &plan, Rng &rng);

/// Exactly ceil(alpha * count) of `count` im2col columns kept, uniformly at random.
std::vector<std::uint8_t> build_column_mask(std::size_t count, double alpha, Rng &rng);

struct GradFidelity {
    double angular_similarity = 1.0;
    double normalized_distance = 0.0;
};

/// 1 - arccos(cos(g, g_hat)) / pi and ||g - g_hat||^2 / ||g||^2.
GradFidelity grad_fidelity(std::span<const double> g, std::span<const double> g_hat);

}  // namespace ptcflow
