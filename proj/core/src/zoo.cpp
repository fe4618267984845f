#include "ptcflow/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ptcflow/errors.hpp"
#include "ptcflow/mesh.hpp"

namespace ptcflow {

ZooSchedule ZooSchedule::for_bitwidth(int bits, double init_step, double decay, int coarse_bits) {
    if (bits < 1 || bits > 32 || coarse_bits < 1) {
        throw ConfigError("ZooSchedule: bitwidths must be positive and at most 32");
    }
    const double upper = kTwoPi / (std::ldexp(1.0, std::min(coarse_bits, bits)) - 1.0);
    const double lower = kTwoPi / (std::ldexp(1.0, bits) - 1.0);
    return bounded(init_step, decay, lower, upper);
}

ZooSchedule ZooSchedule::bounded(double init_step, double decay, double lower, double upper) {
    ZooSchedule s;
    s.init_step = init_step;
    s.decay = decay;
    s.step_lower = lower;
    s.step_upper = upper;
    s.validate();
    s.current = std::clamp(init_step, lower, upper);
    return s;
}

void ZooSchedule::validate() const {
    if (!(init_step > 0.0) || !(decay > 0.0 && decay <= 1.0)) {
        throw ConfigError("ZooSchedule: init_step must be > 0 and decay in (0, 1]");
    }
    if (!(step_lower > 0.0) || !(step_lower <= step_upper)) {
        throw ConfigError("ZooSchedule: require 0 < step_lower <= step_upper");
    }
}

void ZooSchedule::advance() noexcept { current = std::clamp(current * decay, step_lower, step_upper); }

bool BestRecord::offer(double loss, std::span<const double> params) {
    if (loss < best_loss) {
        best_loss = loss;
        best_params.assign(params.begin(), params.end());
        return true;
    }
    return false;
}

ZooKind parse_zoo_kind(const std::string &name) {
    if (name == "zcd") {
        return ZooKind::zcd;
    }
    if (name == "ztp") {
        return ZooKind::ztp;
    }
    if (name == "zgd") {
        return ZooKind::zgd;
    }
    throw ConfigError("unknown optimizer '" + name + "' (expected zcd, ztp or zgd)");
}

std::string to_string(ZooKind k) {
    switch (k) {
    case ZooKind::zcd:
        return "zcd";
    case ZooKind::ztp:
        return "ztp";
    case ZooKind::zgd:
        return "zgd";
    }
    return "zcd";
}

ZooOptimizer::ZooOptimizer(const ZooSchedule &schedule, std::uint64_t seed) : schedule_(schedule), rng_(seed) {
    schedule_.validate();
}

double ZooOptimizer::evaluate(const Objective &f, std::span<const double> phis) {
    const double loss = f(phis);
    ++evaluations_;
    if (!std::isfinite(loss)) {
        throw NumericalAbort("zeroth-order objective returned a non-finite value after " +
                             std::to_string(evaluations_) + " evaluations");
    }
    best_.offer(loss, phis);
    return loss;
}

std::size_t ZooOptimizer::sample_coordinate(std::size_t begin, std::size_t end) {
    if (begin >= end) {
        throw InvalidInput("zeroth-order step: empty coordinate range");
    }
    std::uniform_int_distribution<std::size_t> pick(begin, end - 1);
    return pick(rng_);
}

ZooStepResult ZcdOptimizer::step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) {
    ZooStepResult r;
    r.coordinate = sample_coordinate(begin, end);
    const std::uint64_t before = evaluations_;
    if (!cached_) {
        cached_loss_ = evaluate(f, phis);
    }
    const double delta = schedule_.current;
    phis[r.coordinate] += delta;
    const double plus = evaluate(f, phis);
    if (plus < cached_loss_) {
        cached_loss_ = plus;
        cached_ = true;
    } else {
        phis[r.coordinate] -= 2.0 * delta;
        cached_ = false;
    }
    schedule_.advance();
    r.evaluations = evaluations_ - before;
    return r;
}

ZooStepResult ZtpOptimizer::step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) {
    ZooStepResult r;
    r.coordinate = sample_coordinate(begin, end);
    const double delta = schedule_.current;
    const double origin = phis[r.coordinate];
    const double l0 = evaluate(f, phis);
    phis[r.coordinate] = origin + delta;
    const double lp = evaluate(f, phis);
    phis[r.coordinate] = origin - delta;
    const double lm = evaluate(f, phis);
    if (lp < l0 && lp <= lm) {
        phis[r.coordinate] = origin + delta;
    } else if (lm < l0) {
        phis[r.coordinate] = origin - delta;
    } else {
        phis[r.coordinate] = origin;
    }
    schedule_.advance();
    r.evaluations = 3;
    return r;
}

ZgdOptimizer::ZgdOptimizer(const ZooSchedule &schedule, std::uint64_t seed, const ZgdOptions &opts)
    : ZooOptimizer(schedule, seed), opts_(opts) {
    if (opts_.samples < 1) {
        throw ConfigError("ZGD: samples must be >= 1");
    }
    if (!(opts_.momentum >= 0.0 && opts_.momentum < 1.0) || !(opts_.learning_rate > 0.0)) {
        throw ConfigError("ZGD: momentum must lie in [0, 1) and learning_rate be positive");
    }
}

Vector ZgdOptimizer::estimate_gradient(const Objective &f, std::span<const double> phis, std::size_t begin,
                                       std::size_t end) {
    if (begin >= end || end > phis.size()) {
        throw InvalidInput("ZGD: bad coordinate range");
    }
    const std::size_t d = end - begin;
    const double delta = schedule_.current;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector g(d, 0.0);
    Vector u(d);
    Vector probe(phis.begin(), phis.end());
    for (std::size_t s = 0; s < opts_.samples; ++s) {
        double len = 0.0;
        while (len == 0.0) {
            for (double &x : u) {
                x = gauss(rng_);
            }
            len = norm(u);
        }
        for (double &x : u) {
            x /= len;
        }
        for (std::size_t i = 0; i < d; ++i) {
            probe[begin + i] = phis[begin + i] + delta * u[i];
        }
        const double lp = evaluate(f, probe);
        for (std::size_t i = 0; i < d; ++i) {
            probe[begin + i] = phis[begin + i] - delta * u[i];
        }
        const double lm = evaluate(f, probe);
        for (std::size_t i = 0; i < d; ++i) {
            probe[begin + i] = phis[begin + i];
        }
        const double coef = static_cast<double>(d) * (lp - lm) / (2.0 * delta);
        for (std::size_t i = 0; i < d; ++i) {
            g[i] += coef * u[i];
        }
    }
    for (double &x : g) {
        x /= static_cast<double>(opts_.samples);
    }
    return g;
}

ZooStepResult ZgdOptimizer::step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) {
    ZooStepResult r;
    const std::uint64_t before = evaluations_;
    const Vector g = estimate_gradient(f, phis, begin, end);
    if (velocity_.size() != phis.size()) {
        velocity_.assign(phis.size(), 0.0);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        double &v = velocity_[begin + i];
        v = opts_.momentum * v + g[i];
        phis[begin + i] -= opts_.learning_rate * v;
    }
    schedule_.advance();
    r.evaluations = evaluations_ - before;
    r.coordinate = begin;
    return r;
}

std::unique_ptr<ZooOptimizer> make_zoo_optimizer(ZooKind kind, const ZooSchedule &schedule, std::uint64_t seed,
                                                 const ZgdOptions &zgd) {
    switch (kind) {
    case ZooKind::zcd:
        return std::make_unique<ZcdOptimizer>(schedule, seed);
    case ZooKind::ztp:
        return std::make_unique<ZtpOptimizer>(schedule, seed);
    case ZooKind::zgd:
        return std::make_unique<ZgdOptimizer>(schedule, seed, zgd);
    }
    throw ConfigError("unknown optimizer kind");
}

}  // namespace ptcflow
