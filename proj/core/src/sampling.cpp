#include "ptcflow/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptcflow/errors.hpp"
#include "ptcflow/mesh.hpp"

namespace ptcflow {

namespace {

void check_alpha(double a, const char *name) {
    if (!(a > 0.0 && a <= 1.0)) {
        throw ConfigError(std::string("sampling: ") + name + " must lie in (0, 1]");
    }
}

// Indices of the `n` largest values, ties to the lower index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t n) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(n);
    return idx;
}

// n of the first `total` indices without replacement, uniformly.
std::vector<std::size_t> random_subset(std::size_t total, std::size_t n, Rng &rng) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
}

// Successive draws without replacement, each proportional to the remaining weights.
std::vector<std::size_t> weighted_subset(std::span<const double> w, std::size_t n, Rng &rng) {
    std::vector<double> remaining(w.begin(), w.end());
    std::vector<std::size_t> out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
        double total = 0.0;
        std::size_t alive = 0;
        for (std::size_t i = 0; i < remaining.size(); ++i) {
            if (remaining[i] >= 0.0) {
                total += remaining[i];
                ++alive;
            }
        }
        std::size_t chosen = remaining.size();
        if (total > 0.0) {
            double r = u(rng) * total;
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                if (remaining[i] < 0.0) {
                    continue;
                }
                chosen = i;
                r -= remaining[i];
                if (r < 0.0) {
                    break;
                }
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, alive - 1);
            std::size_t target = pick(rng);
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                if (remaining[i] >= 0.0 && target-- == 0) {
                    chosen = i;
                    break;
                }
            }
        }
        out.push_back(chosen);
        remaining[chosen] = -1.0;
    }
    return out;
}

}  // namespace

FeedbackMode parse_feedback_mode(const std::string &s) {
    if (s == "uniform") {
        return FeedbackMode::uniform;
    }
    if (s == "topk") {
        return FeedbackMode::topk;
    }
    if (s == "btopk") {
        return FeedbackMode::btopk;
    }
    if (s == "none") {
        return FeedbackMode::none;
    }
    throw ConfigError("unknown feedback mode '" + s + "'");
}

SampleNorm parse_sample_norm(const std::string &s) {
    if (s == "none") {
        return SampleNorm::none;
    }
    if (s == "exp") {
        return SampleNorm::exp;
    }
    if (s == "var") {
        return SampleNorm::var;
    }
    throw ConfigError("unknown normalization '" + s + "'");
}

std::string to_string(FeedbackMode m) {
    switch (m) {
    case FeedbackMode::uniform:
        return "uniform";
    case FeedbackMode::topk:
        return "topk";
    case FeedbackMode::btopk:
        return "btopk";
    case FeedbackMode::none:
        return "none";
    }
    return "none";
}

std::string to_string(SampleNorm n) {
    switch (n) {
    case SampleNorm::none:
        return "none";
    case SampleNorm::exp:
        return "exp";
    case SampleNorm::var:
        return "var";
    }
    return "none";
}

void SamplingPlan::validate() const {
    check_alpha(alpha_w, "alpha_w");
    check_alpha(alpha_c, "alpha_c");
    check_alpha(alpha_d, "alpha_d");
}

nlohmann::json to_json(const SamplingPlan &p) {
    return {{"feedback_mode", to_string(p.feedback_mode)},
            {"alpha_w", p.alpha_w},
            {"feedback_norm", to_string(p.feedback_norm)},
            {"alpha_c", p.alpha_c},
            {"column_norm", to_string(p.column_norm)},
            {"alpha_d", p.alpha_d},
            {"stochastic_btopk", p.stochastic_btopk},
            {"seed", p.seed}};
}

SamplingPlan sampling_plan_from_json(const nlohmann::json &j) {
    SamplingPlan p;
    try {
        p.feedback_mode = parse_feedback_mode(j.value("feedback_mode", to_string(p.feedback_mode)));
        p.alpha_w = j.value("alpha_w", p.alpha_w);
        p.feedback_norm = parse_sample_norm(j.value("feedback_norm", to_string(p.feedback_norm)));
        p.alpha_c = j.value("alpha_c", p.alpha_c);
        p.column_norm = parse_sample_norm(j.value("column_norm", to_string(p.column_norm)));
        p.alpha_d = j.value("alpha_d", p.alpha_d);
        p.stochastic_btopk = j.value("stochastic_btopk", p.stochastic_btopk);
        p.seed = j.value("seed", p.seed);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("sampling plan: ") + e.what());
    }
    p.validate();
    return p;
}

FeedbackMask FeedbackMask::dense(std::size_t q, std::size_t p) {
    FeedbackMask m;
    m.q = q;
    m.p = p;
    m.keep.assign(q * p, 1);
    return m;
}

std::size_t FeedbackMask::row_sum(std::size_t row) const {
    return static_cast<std::size_t>(std::count(keep.begin() + row * p, keep.begin() + (row + 1) * p, 1));
}

std::size_t FeedbackMask::total() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1)); }

std::size_t FeedbackMask::max_row_sum() const {
    std::size_t m = 0;
    for (std::size_t r = 0; r < q; ++r) {
        m = std::max(m, row_sum(r));
    }
    return m;
}

double FeedbackMask::mean_row_sum() const {
    return q == 0 ? 0.0 : static_cast<double>(total()) / static_cast<double>(q);
}

std::size_t keep_count(double alpha, std::size_t n) {
    check_alpha(alpha, "alpha");
    const auto c = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-12));
    return std::clamp<std::size_t>(c, n == 0 ? 0 : 1, n);
}

double sample_scale(SampleNorm norm, std::size_t kept, std::size_t total) {
    if (kept == 0 || norm == SampleNorm::none) {
        return 1.0;
    }
    const double r = static_cast<double>(total) / static_cast<double>(kept);
    return norm == SampleNorm::exp ? r : std::sqrt(r);
}

FeedbackMask build_feedback_mask(const Matrix &norms, const SamplingPlan &plan, Rng &rng) {
    plan.validate();
    const std::size_t q = norms.rows();
    const std::size_t p = norms.cols();
    for (double v : norms.data()) {
        if (!(v >= 0.0)) {
            throw InvalidInput("build_feedback_mask: block norms must be non-negative");
        }
    }
    if (plan.feedback_mode == FeedbackMode::none || plan.alpha_w == 1.0 || q == 0 || p == 0) {
        return FeedbackMask::dense(q, p);
    }
    FeedbackMask m;
    m.q = q;
    m.p = p;
    m.keep.assign(q * p, 0);
    switch (plan.feedback_mode) {
    case FeedbackMode::uniform: {
        const std::size_t n = keep_count(plan.alpha_w, p);
        for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t c : random_subset(p, n, rng)) {
                m.keep[r * p + c] = 1;
            }
        }
        break;
    }
    case FeedbackMode::topk:
        for (std::size_t i : top_indices(norms.data(), keep_count(plan.alpha_w, q * p))) {
            m.keep[i] = 1;
        }
        break;
    case FeedbackMode::btopk: {
        const std::size_t n = keep_count(plan.alpha_w, p);
        for (std::size_t r = 0; r < q; ++r) {
            const auto row = norms.row(r);
            const auto chosen = plan.stochastic_btopk ? weighted_subset(row, n, rng) : top_indices(row, n);
            for (std::size_t c : chosen) {
                m.keep[r * p + c] = 1;
            }
        }
        break;
    }
    case FeedbackMode::none:
        break;
    }
    m.scale = sample_scale(plan.feedback_norm, m.total(), q * p);
    return m;
}

std::vector<std::uint8_t> build_column_mask(std::size_t count, double alpha, Rng &rng) {
    check_alpha(alpha, "alpha_c");
    std::vector<std::uint8_t> mask(count, 0);
    if (alpha == 1.0) {
        std::fill(mask.begin(), mask.end(), 1);
        return mask;
    }
    for (std::size_t i : random_subset(count, keep_count(alpha, count), rng)) {
        mask[i] = 1;
    }
    return mask;
}

GradFidelity grad_fidelity(std::span<const double> g, std::span<const double> g_hat) {
    if (g.size() != g_hat.size()) {
        throw ShapeError("grad_fidelity: length mismatch");
    }
    double gg = 0.0, hh = 0.0, gh = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        gg += g[i] * g[i];
        hh += g_hat[i] * g_hat[i];
        gh += g[i] * g_hat[i];
        dd += (g[i] - g_hat[i]) * (g[i] - g_hat[i]);
    }
    GradFidelity f;
    if (gg > 0.0 && hh > 0.0) {
        const double c = std::clamp(gh / std::sqrt(gg * hh), -1.0, 1.0);
        f.angular_similarity = 1.0 - std::acos(c) / kPi;
    } else {
        f.angular_similarity = (gg == 0.0 && hh == 0.0) ? 1.0 : 0.0;
    }
    f.normalized_distance = gg > 0.0 ? dd / gg : dd;
    return f;
}

}  // namespace ptcflow
