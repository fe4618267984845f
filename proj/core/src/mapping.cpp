#include "ptcflow/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ptcflow/errors.hpp"
#include "ptcflow/parallel.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

namespace {

// Writes a concatenated [Phi^U, Phi^V] vector into the block, touching only meshes that changed.
void load_phases(PTCBlock &block, std::span<const double> phis) {
    const std::size_t n = mesh_size(block.size());
    const auto u = phis.subspan(0, n);
    const auto v = phis.subspan(n, n);
    const PhaseProgram &p = block.program();
    if (!std::equal(u.begin(), u.end(), p.phi_u.phis.begin())) {
        UnitaryPhases next = p.phi_u;
        next.phis.assign(u.begin(), u.end());
        block.set_phi_u(next);
    }
    if (!std::equal(v.begin(), v.end(), p.phi_v.phis.begin())) {
        UnitaryPhases next = p.phi_v;
        next.phis.assign(v.begin(), v.end());
        block.set_phi_v(next);
    }
}

Vector gather_phases(const PTCBlock &block) {
    Vector phis = block.program().phi_u.phis;
    const Vector &v = block.program().phi_v.phis;
    phis.insert(phis.end(), v.begin(), v.end());
    return phis;
}

// Runs `epochs` alternating U / V* epochs and leaves the block programmed with the result.
std::uint64_t run_alternating(PTCBlock &block, const Objective &f, const ZooStageOptions &opts,
                              std::uint64_t block_seed, SeedStage stage) {
    const std::size_t n = mesh_size(block.size());
    Vector phis = gather_phases(block);
    if (opts.epochs == 0 || n == 0) {
        return 0;
    }
    auto opt = make_zoo_optimizer(opts.optimizer, opts.schedule(block.noise_config().bitwidth_unitary),
                                  derive_seed(opts.seed, {tag(stage), block_seed}), opts.zgd);
    for (std::size_t e = 0; e < opts.epochs; ++e) {
        for (std::size_t s = 0; s < n; ++s) {
            opt->step(f, phis, 0, n);
        }
        for (std::size_t s = 0; s < n; ++s) {
            opt->step(f, phis, n, 2 * n);
        }
    }
    if (opts.use_best && !opt->best().best_params.empty()) {
        phis = opt->best().best_params;
    }
    for (double &x : phis) {
        x = wrap_phase(x);
    }
    load_phases(block, phis);
    return opt->evaluations();
}

}  // namespace

Vector calibration_sigma(std::size_t k) {
    Vector s(k);
    for (std::size_t i = 0; i < k; ++i) {
        s[i] = static_cast<double>(k - i) / static_cast<double>(k);
    }
    return s;
}

Matrix probe_transfer(const PTCBlock &block) {
    const std::size_t k = block.size();
    Matrix w(k, k);
    Vector e(k, 0.0), out(k);
    for (std::size_t j = 0; j < k; ++j) {
        e[j] = 1.0;
        block.forward(e, out);
        e[j] = 0.0;
        w.set_column(j, out);
    }
    return w;
}

double identity_calibration_loss(const PTCBlock &block, const Vector &sigma) {
    const Matrix w = probe_transfer(block);
    const std::size_t k = block.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = w(i, j) / sigma[j] - (i == j ? 1.0 : 0.0);
            loss += d * d;
        }
    }
    return loss;
}

CalibrationResult identity_calibrate(PTCBlock &block, const ZooStageOptions &opts, std::uint64_t block_seed) {
    return identity_calibrate(block, calibration_sigma(block.size()), opts, block_seed);
}

CalibrationResult identity_calibrate(PTCBlock &block, const Vector &sigma, const ZooStageOptions &opts,
                                     std::uint64_t block_seed) {
    const std::size_t k = block.size();
    if (sigma.size() != k) {
        throw ShapeError("identity_calibrate: sigma length differs from block size");
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (!(std::abs(sigma[i]) > 0.0)) {
            throw PreconditionError("identity_calibrate: Sigma entry " + std::to_string(i) + " is zero");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (sigma[i] == sigma[j]) {
                throw PreconditionError("identity_calibrate: Sigma entries must be distinct");
            }
        }
    }
    const std::uint64_t calls0 = block.calls();
    block.set_sigma_values(sigma);
    // The controller divides by what the attenuators actually realize.
    const Vector realized = block.read_sigma();
    CalibrationResult r;
    r.loss_initial = identity_calibration_loss(block, realized);
    const Objective f = [&](std::span<const double> phis) {
        load_phases(block, phis);
        return identity_calibration_loss(block, realized);
    };
    r.evaluations = run_alternating(block, f, opts, block_seed, SeedStage::calibrate);
    r.loss_final = identity_calibration_loss(block, realized);
    block.set_calibration(block.program().phi_u, block.program().phi_v);
    r.calls = block.calls() - calls0;
    return r;
}

double normalized_distance(const Matrix &realized, const Matrix &target, std::size_t rows, std::size_t cols) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = realized(i, j) - target(i, j);
            num += d * d;
            den += target(i, j) * target(i, j);
        }
    }
    return den > 0.0 ? num / den : num;
}

BlockMappingRecord map_block(PTCBlock &block, const Matrix &target, const MappingOptions &opts,
                             std::uint64_t block_seed, std::size_t rows, std::size_t cols) {
    const std::size_t k = block.size();
    if (target.rows() != k || target.cols() != k) {
        throw ShapeError("map_block: target must be k x k");
    }
    for (double v : target.data()) {
        if (!std::isfinite(v)) {
            throw InvalidInput("map_block: target entries must be finite");
        }
    }
    const std::uint64_t calls0 = block.calls();
    BlockMappingRecord rec;
    auto distance = [&] { return normalized_distance(probe_transfer(block), target, rows, cols); };

    if (target.squared_norm() == 0.0) {
        block.osp_project(target, opts.noisy_osp_passes);
        rec.dist_init = rec.dist_before = rec.dist_osp = rec.dist_after = distance();
        rec.osp_kept = true;
        rec.converged = true;
        rec.calls = block.calls() - calls0;
        return rec;
    }

    const SvdTriple t = svd(target);
    PhaseProgram p(k);
    p.phi_u = decompose_unitary(t.u);
    p.phi_v = decompose_unitary(t.v_t);
    for (std::size_t i = 0; i < p.phi_u.phis.size(); ++i) {
        p.phi_u.phis[i] = wrap_phase(p.phi_u.phis[i] + block.calibration_u().phis[i]);
        p.phi_v.phis[i] = wrap_phase(p.phi_v.phis[i] + block.calibration_v().phis[i]);
    }
    encode_sigma(t.sigma, p.phi_sigma, p.sigma_scale);
    block.set_program(p);
    rec.dist_init = distance();

    const Objective f = [&](std::span<const double> phis) {
        load_phases(block, phis);
        return (probe_transfer(block) - target).squared_norm();
    };
    rec.evaluations = run_alternating(block, f, opts, block_seed, SeedStage::map);
    rec.dist_before = distance();
    rec.dist_osp = rec.dist_before;
    if (opts.osp) {
        const PhaseProgram tuned = block.program();
        const double loss_before = (probe_transfer(block) - target).squared_norm();
        block.osp_project(target, opts.noisy_osp_passes);
        rec.dist_osp = distance();
        rec.osp_kept = true;
        if (opts.osp_guard && (probe_transfer(block) - target).squared_norm() > loss_before) {
            block.set_program(tuned);
            rec.osp_kept = false;
        }
    }
    rec.dist_after = distance();
    rec.converged = rec.dist_after <= rec.dist_init;
    rec.calls = block.calls() - calls0;
    return rec;
}

MappingReport parallel_map(BlockedLinear &layer, const Matrix &target, const MappingOptions &opts) {
    if (target.rows() != layer.rows() || target.cols() != layer.cols()) {
        throw ShapeError("parallel_map: target shape differs from layer shape");
    }
    MappingReport report;
    report.blocks.resize(layer.block_count());
    parallel_for(layer.block_count(), opts.workers, [&](std::size_t idx) {
        const std::size_t bp = idx / layer.q();
        const std::size_t bq = idx % layer.q();
        BlockMappingRecord rec = map_block(layer.block(bp, bq), layer.target_block(target, bp, bq), opts, idx,
                                           layer.valid_rows(bp), layer.valid_cols(bq));
        rec.row = bp;
        rec.col = bq;
        report.blocks[idx] = rec;
    });
    return report;
}

std::vector<CalibrationResult> calibrate_layer(BlockedLinear &layer, const ZooStageOptions &opts) {
    std::vector<CalibrationResult> out(layer.block_count());
    parallel_for(layer.block_count(), opts.workers,
                 [&](std::size_t idx) { out[idx] = identity_calibrate(layer.blocks()[idx], opts, idx); });
    return out;
}

double MappingReport::mean_dist_before() const {
    double s = 0.0;
    for (const auto &b : blocks) {
        s += b.dist_before;
    }
    return blocks.empty() ? 0.0 : s / static_cast<double>(blocks.size());
}

double MappingReport::mean_dist_after() const {
    double s = 0.0;
    for (const auto &b : blocks) {
        s += b.dist_after;
    }
    return blocks.empty() ? 0.0 : s / static_cast<double>(blocks.size());
}

std::uint64_t MappingReport::total_calls() const {
    std::uint64_t s = 0;
    for (const auto &b : blocks) {
        s += b.calls;
    }
    return s;
}

nlohmann::json MappingReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &b : blocks) {
        arr.push_back({{"row", b.row},
                       {"col", b.col},
                       {"dist_init", b.dist_init},
                       {"dist_before", b.dist_before},
                       {"dist_osp", b.dist_osp},
                       {"osp_kept", b.osp_kept},
                       {"dist_after", b.dist_after},
                       {"evaluations", b.evaluations},
                       {"calls", b.calls},
                       {"converged", b.converged}});
    }
    return {{"blocks", arr},
            {"mean_dist_before", mean_dist_before()},
            {"mean_dist_after", mean_dist_after()},
            {"total_calls", total_calls()}};
}

void MappingReport::write_csv(std::ostream &os) const {
    os << "row,col,dist_before,dist_after,calls\n";
    os.precision(17);
    for (const auto &b : blocks) {
        os << b.row << ',' << b.col << ',' << b.dist_before << ',' << b.dist_after << ',' << b.calls << '\n';
    }
}

}  // namespace ptcflow
