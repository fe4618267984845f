// ptcflow command-line runner.
//
//   ptcflow pipeline  --config exp.json            pretrain -> IC -> PM -> SL
//   ptcflow calibrate --config exp.json            IC only
//   ptcflow map       --config exp.json            pretrain (if enabled) -> PM
//   ptcflow train     --config exp.json [--init c] SL only
//   ptcflow eval      --config exp.json --checkpoint c
//   ptcflow profile   [--config exp.json | --model vgg8] --batch 32
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ptcflow/cost.hpp"
#include "ptcflow/errors.hpp"
#include "ptcflow/experiment.hpp"

namespace {

using namespace ptcflow;

struct Overrides {
    std::string config;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<double> alpha_w, alpha_c, alpha_d;
    std::optional<int> bitwidth;
    std::optional<double> gamma_std, crosstalk;
    std::optional<std::size_t> epochs;

    void attach(CLI::App &app) {
        app.add_option("-c,--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
        app.add_option("-o,--output", output, "Output directory");
        app.add_option("--seed", seed, "Master seed");
        app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        app.add_option("--alpha-w", alpha_w, "Feedback block keep density");
        app.add_option("--alpha-c", alpha_c, "Column keep density");
        app.add_option("--alpha-d", alpha_d, "Batch keep probability");
        app.add_option("--bitwidth", bitwidth, "Unitary phase bit width");
        app.add_option("--gamma-std", gamma_std, "Phase-gamma standard deviation");
        app.add_option("--crosstalk", crosstalk, "Thermal crosstalk factor");
        app.add_option("--epochs", epochs, "Epochs of the subcommand's main stage");
    }

    ExperimentConfig load() const {
        nlohmann::json j = config.empty() ? nlohmann::json::object() : read_json_file(config);
        auto &noise = j["noise"];
        auto &sampling = j["sampling"];
        if (noise.is_null()) noise = nlohmann::json::object();
        if (sampling.is_null()) sampling = nlohmann::json::object();
        if (bitwidth) noise["bitwidth_unitary"] = *bitwidth;
        if (gamma_std) noise["gamma_std"] = *gamma_std;
        if (crosstalk) noise["crosstalk_factor"] = *crosstalk;
        if (alpha_w) sampling["alpha_w"] = *alpha_w;
        if (alpha_c) sampling["alpha_c"] = *alpha_c;
        if (alpha_d) sampling["alpha_d"] = *alpha_d;
        if (seed) j["seed"] = *seed;
        if (workers) j["workers"] = *workers;
        if (!output.empty()) j["output_dir"] = output;
        return experiment_config_from_json(j);
    }
};

std::filesystem::path base_of(const std::string &config) {
    return config.empty() ? std::filesystem::path{} : std::filesystem::path(config).parent_path();
}

void report(const PipelineResult &r, const ExperimentConfig &c) {
    std::printf("output: %s\n", c.output_dir.c_str());
    if (!r.ic.empty()) {
        for (const auto &l : r.ic) {
            std::printf("IC  layer %llu: %zu blocks, loss %.4g -> %.4g\n", static_cast<unsigned long long>(l.layer_id),
                        l.blocks, l.before, l.after);
        }
    }
    for (const auto &l : r.pm) {
        std::printf("PM  layer %llu: %zu blocks, distance %.4g before OSP, %.4g final\n",
                    static_cast<unsigned long long>(l.layer_id), l.blocks, l.before, l.after);
    }
    if (!r.sl_metrics.empty()) {
        const auto &m = r.sl_metrics.back();
        std::printf("SL  %zu epochs, loss %.4f, train acc %.4f, %llu PTC calls\n", r.sl_metrics.size(), m.loss,
                    m.train_acc, static_cast<unsigned long long>(m.ptc_energy));
    }
    if (r.twin_test_acc) std::printf("test accuracy (electronic reference): %.4f\n", *r.twin_test_acc);
    if (r.mapped_test_acc) std::printf("test accuracy (after mapping):        %.4f\n", *r.mapped_test_acc);
    if (r.final_test_acc) std::printf("test accuracy (final):                %.4f\n", *r.final_test_acc);
}

int run_stages(const Overrides &ov, StageToggles stages, const std::string &init, bool pretrain_from_config) {
    ExperimentConfig c = ov.load();
    const bool keep_pretrain = c.stages.pretrain;
    c.stages = stages;
    if (pretrain_from_config) {
        c.stages.pretrain = keep_pretrain;
    }
    if (!init.empty()) {
        c.init_checkpoint = init;
    }
    if (ov.epochs) {
        if (stages.sl) c.sl.epochs = *ov.epochs;
        else if (stages.pm) c.pm.epochs = *ov.epochs;
        else if (stages.ic) c.ic.epochs = *ov.epochs;
    }
    c.validate();
    report(run_pipeline(c, base_of(ov.config)), c);
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Photonic tensor core on-chip learning simulator"};
    app.require_subcommand(1);

    Overrides ov;
    std::string init, checkpoint, model = "cnn_s", csv_path;
    std::size_t batch = 32;

    auto *pipeline = app.add_subcommand("pipeline", "Run all enabled stages of a config");
    auto *calibrate = app.add_subcommand("calibrate", "Identity calibration of every block");
    auto *map = app.add_subcommand("map", "Map the reference weights onto the chip");
    auto *train = app.add_subcommand("train", "Subspace learning on the chip");
    auto *eval = app.add_subcommand("eval", "Test accuracy of a checkpoint");
    auto *profile = app.add_subcommand("profile", "Per-iteration energy and step counts");
    for (auto *sub : {pipeline, calibrate, map, train, eval, profile}) {
        ov.attach(*sub);
    }
    train->add_option("--init", init, "Checkpoint to start from (omit for training from scratch)")
        ->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    profile->add_option("--model", model, "Preset when no config is given: mlp, cnn_s or vgg8")
        ->check(CLI::IsMember({"mlp", "cnn_s", "vgg8"}));
    profile->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);
    profile->add_option("--csv", csv_path, "Also write the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pipeline) {
            ExperimentConfig c = ov.load();
            if (ov.epochs) {
                c.sl.epochs = *ov.epochs;
            }
            report(run_pipeline(c, base_of(ov.config)), c);
        } else if (*calibrate) {
            return run_stages(ov, {false, true, false, false}, "", false);
        } else if (*map) {
            return run_stages(ov, {true, false, true, false}, "", true);
        } else if (*train) {
            return run_stages(ov, {false, false, false, true}, init, false);
        } else if (*eval) {
            const ExperimentConfig c = ov.load();
            Model m = build_photonic(c, checkpoint);
            const DatasetSplit d = load_data(c.data, base_of(ov.config));
            std::printf("test accuracy: %.4f (%zu samples)\n", evaluate(m, d.test, c.workers), d.test.size());
        } else if (*profile) {
            ExperimentConfig c = ov.load();
            if (ov.config.empty()) {
                c.model = model == "vgg8" ? ModelSpec::vgg8() : model == "mlp" ? ModelSpec::mlp(8, {16, 16}, 4, 8)
                                                                                 : ModelSpec::cnn_s();
            }
            const auto dims = c.model.cost_dims();
            CostReport dense = profile_iteration(dims, SamplingPlan{}, batch, "dense");
            CostReport sparse = profile_iteration(dims, c.sampling, batch, "sampled");
            sparse.set_baseline(dense);
            std::cout << nlohmann::json{{"dense", dense.to_json()}, {"sampled", sparse.to_json()}}.dump(2) << "\n";
            if (!csv_path.empty()) {
                std::ofstream os(csv_path);
                sparse.write_csv(os);
            }
        }
    } catch (const ptcflow::ConfigError &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ptcflow::ShapeError &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ptcflow::NumericalAbort &e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
