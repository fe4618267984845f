#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>

#include "ptcflow/linalg.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

/// Loss of a full phase vector.
using Objective = std::function<double(std::span<const double>)>;

/// Step-size schedule for zeroth-order phase search. The current step decays geometrically once per
/// update and is kept inside [step_lower, step_upper].
struct ZooSchedule {
    double init_step = 0.1;
    double decay = 0.99;
    double step_upper = 0.0;
    double step_lower = 0.0;
    double current = 0.0;

    /// step_upper = 2pi / (2^min(coarse_bits, bits) - 1), step_lower = 2pi / (2^bits - 1).
    static ZooSchedule for_bitwidth(int bits, double init_step = 0.1, double decay = 0.99, int coarse_bits = 4);
    /// Explicit bounds; current starts at init_step clamped into them.
    static ZooSchedule bounded(double init_step, double decay, double lower, double upper);

    void validate() const;
    void advance() noexcept;
};

struct BestRecord {
    double best_loss = std::numeric_limits<double>::infinity();
    Vector best_params;

    /// Returns true when `loss` improves on the record.
    bool offer(double loss, std::span<const double> params);
};

struct ZooStepResult {
    std::size_t evaluations = 0;
    std::size_t coordinate = 0;
};

enum class ZooKind { zcd, ztp, zgd };

ZooKind parse_zoo_kind(const std::string &name);
std::string to_string(ZooKind k);

struct ZgdOptions {
    double momentum = 0.9;
    std::size_t samples = 1;
    double learning_rate = 3e-4;
    bool operator==(const ZgdOptions &) const = default;
};

/// Common driver state: schedule, seeded coordinate sampler, best record, call counter.
class ZooOptimizer {
  public:
    ZooOptimizer(const ZooSchedule &schedule, std::uint64_t seed);
    virtual ~ZooOptimizer() = default;

    /// One update restricted to coordinates [begin, end) of `phis`.
    virtual ZooStepResult step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) = 0;
    ZooStepResult step(const Objective &f, Vector &phis) { return step(f, phis, 0, phis.size()); }

    /// Drops any cached loss (call after the objective itself changes).
    virtual void invalidate_cache() {}

    const ZooSchedule &schedule() const noexcept { return schedule_; }
    const BestRecord &best() const noexcept { return best_; }
    std::uint64_t evaluations() const noexcept { return evaluations_; }

  protected:
    double evaluate(const Objective &f, std::span<const double> phis);
    std::size_t sample_coordinate(std::size_t begin, std::size_t end);

    ZooSchedule schedule_;
    BestRecord best_;
    Rng rng_;
    std::uint64_t evaluations_ = 0;
};

/// Coordinate descent exactly as the mapping algorithm states it: try +delta on one random
/// coordinate, keep it if the loss drops, otherwise move by -delta without checking. L at the
/// current point is cached when it is known.
class ZcdOptimizer final : public ZooOptimizer {
  public:
    using ZooOptimizer::ZooOptimizer;
    using ZooOptimizer::step;
    ZooStepResult step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) override;
    void invalidate_cache() override { cached_ = false; }

  private:
    bool cached_ = false;
    double cached_loss_ = 0.0;
};

/// Three-point rule: evaluate phi, phi + delta, phi - delta on one coordinate and keep the argmin.
class ZtpOptimizer final : public ZooOptimizer {
  public:
    using ZooOptimizer::ZooOptimizer;
    using ZooOptimizer::step;
    ZooStepResult step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) override;
};

/// Zeroth-order gradient descent with momentum. Directions are uniform on the unit sphere of the
/// active coordinates; the symmetric difference estimate is scaled by the dimension so that its
/// expectation is the gradient.
class ZgdOptimizer final : public ZooOptimizer {
  public:
    ZgdOptimizer(const ZooSchedule &schedule, std::uint64_t seed, const ZgdOptions &opts = {});
    using ZooOptimizer::step;
    ZooStepResult step(const Objective &f, Vector &phis, std::size_t begin, std::size_t end) override;

    /// Gradient estimate over [begin, end) without updating anything but the call counter.
    Vector estimate_gradient(const Objective &f, std::span<const double> phis, std::size_t begin, std::size_t end);

  private:
    ZgdOptions opts_;
    Vector velocity_;
};

std::unique_ptr<ZooOptimizer> make_zoo_optimizer(ZooKind kind, const ZooSchedule &schedule, std::uint64_t seed,
                                                 const ZgdOptions &zgd = {});

}  // namespace ptcflow
