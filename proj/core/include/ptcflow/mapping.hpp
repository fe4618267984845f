#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/blocked_linear.hpp"
#include "ptcflow/ptc_block.hpp"
#include "ptcflow/zoo.hpp"

namespace ptcflow {

/// Zeroth-order stage settings shared by calibration and mapping. One epoch is one full pass of
/// k(k-1)/2 coordinate steps over the U mesh followed by the same over the V* mesh.
struct ZooStageOptions {
    ZooKind optimizer = ZooKind::zcd;
    std::size_t epochs = 300;
    double init_step = 0.1;
    double decay = 0.99;
    int coarse_bits = 4;
    bool use_best = true;
    ZgdOptions zgd;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    ZooSchedule schedule(int bitwidth) const { return ZooSchedule::for_bitwidth(bitwidth, init_step, decay, coarse_bits); }
    bool operator==(const ZooStageOptions &) const = default;
};

struct MappingOptions : ZooStageOptions {
    bool osp = true;
    bool noisy_osp_passes = true;
    /// Re-measure after OSP and restore the previous Sigma when the projection increased the loss.
    bool osp_guard = true;
    bool operator==(const MappingOptions &) const = default;
};

/// Sigma held during calibration: (k - i) / k for i = 0 .. k-1, distinct and non-zero.
Vector calibration_sigma(std::size_t k);

/// Full k x k transfer matrix of a block read with k basis-vector probes.
Matrix probe_transfer(const PTCBlock &block);

struct CalibrationResult {
    double loss_initial = 0.0;
    double loss_final = 0.0;
    std::uint64_t evaluations = 0;
    std::uint64_t calls = 0;
};

/// Tunes Phi^U and Phi^V so that U~ Sigma V*~ Sigma^-1 approaches the identity, measured only via
/// forward probes. Sigma is programmed to calibration_sigma(k). The tuned phases are stored as the
/// block's calibration state.
CalibrationResult identity_calibrate(PTCBlock &block, const ZooStageOptions &opts, std::uint64_t block_seed);
/// As above with an explicit Sigma; throws PreconditionError on repeated or zero entries.
CalibrationResult identity_calibrate(PTCBlock &block, const Vector &sigma, const ZooStageOptions &opts,
                                     std::uint64_t block_seed);

/// ||U~ Sigma V*~ Sigma^-1 - I||_F^2 for the block's current program, from k probes.
double identity_calibration_loss(const PTCBlock &block, const Vector &sigma);

struct BlockMappingRecord {
    std::size_t row = 0;
    std::size_t col = 0;
    double dist_init = 0.0;    // right after SVD initialization
    double dist_before = 0.0;  // after zeroth-order tuning, before OSP
    double dist_osp = 0.0;     // right after OSP, before the guard
    double dist_after = 0.0;   // final
    bool osp_kept = false;
    std::uint64_t evaluations = 0;
    std::uint64_t calls = 0;
    bool converged = false;
};

struct MappingReport {
    std::vector<BlockMappingRecord> blocks;

    double mean_dist_before() const;
    double mean_dist_after() const;
    std::uint64_t total_calls() const;

    nlohmann::json to_json() const;
    /// Columns: row,col,dist_before,dist_after,calls
    void write_csv(std::ostream &os) const;
};

/// ||W~ - W||^2 / ||W||^2 over the leading rows x cols corner (||W~||^2 when W is zero there).
double normalized_distance(const Matrix &realized, const Matrix &target, std::size_t rows, std::size_t cols);

/// SVD initialization on top of the calibration phases, alternating zeroth-order tuning of U and
/// V*, then OSP. `rows` x `cols` is the unpadded extent used for the reported distances.
BlockMappingRecord map_block(PTCBlock &block, const Matrix &target, const MappingOptions &opts, std::uint64_t block_seed,
                             std::size_t rows, std::size_t cols);

/// Maps every block of `layer` to its slice of `target` independently (and concurrently with
/// opts.workers > 1). Results do not depend on the worker count.
MappingReport parallel_map(BlockedLinear &layer, const Matrix &target, const MappingOptions &opts);

/// Identity calibration of every block; results in block order.
std::vector<CalibrationResult> calibrate_layer(BlockedLinear &layer, const ZooStageOptions &opts);

}  // namespace ptcflow
