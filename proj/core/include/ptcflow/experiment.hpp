#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/cost.hpp"
#include "ptcflow/data.hpp"
#include "ptcflow/mapping.hpp"
#include "ptcflow/nn.hpp"
#include "ptcflow/noise.hpp"
#include "ptcflow/sampling.hpp"
#include "ptcflow/train.hpp"

namespace ptcflow {

nlohmann::json to_json(const NoiseConfig &c);
NoiseConfig noise_config_from_json(const nlohmann::json &j, const NoiseConfig &defaults = {});

nlohmann::json to_json(const ZooStageOptions &o);
ZooStageOptions zoo_options_from_json(const nlohmann::json &j, const ZooStageOptions &defaults);
nlohmann::json to_json(const MappingOptions &o);
MappingOptions mapping_options_from_json(const nlohmann::json &j, const MappingOptions &defaults);

/// Where samples come from. `blobs` is the synthetic 4-class stand-in for the small vowel task;
/// `idx` reads train-*/t10k-* IDX files from `path`.
struct DataSpec {
    std::string source = "blobs";
    std::string path;
    double mean = 0.1307;
    double std = 0.3081;
    std::size_t train_limit = 0;  // 0 keeps everything
    std::size_t test_limit = 0;
    /// Inclusive class range; -1 keeps all classes. Kept labels are shifted to start at 0.
    int class_lo = -1;
    int class_hi = -1;
    BlobsConfig blobs;

    bool operator==(const DataSpec &) const = default;
};

nlohmann::json to_json(const DataSpec &d);
DataSpec data_spec_from_json(const nlohmann::json &j);
/// Relative paths are resolved against `base`.
DatasetSplit load_data(const DataSpec &d, const std::filesystem::path &base = {});

struct StageToggles {
    bool pretrain = true;
    bool ic = true;
    bool pm = true;
    bool sl = true;
    bool operator==(const StageToggles &) const = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    ModelSpec model = ModelSpec::mlp(8, {16, 16}, 4, 8);
    DataSpec data;
    NoiseConfig noise;
    SamplingPlan sampling;
    ZooStageOptions ic;
    MappingOptions pm;
    /// Electronic twin training that produces the mapping target.
    TrainConfig pretrain;
    TrainConfig sl;
    StageToggles stages;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string output_dir = "out";
    /// Model checkpoint loaded before the first enabled stage; empty for none.
    std::string init_checkpoint;
    /// Zero the Sigma and bias of the last photonic layer after loading, keeping every unitary.
    bool reset_head = false;

    ExperimentConfig();
    void validate() const;
    bool operator==(const ExperimentConfig &) const = default;
};

/// Subspace-learning defaults: 100 epochs at 2e-3 from scratch, 20 epochs at 2e-4 after mapping.
TrainConfig default_sl_config(bool after_mapping);

nlohmann::json to_json(const ExperimentConfig &c);
/// Missing keys take defaults; the SL default depends on whether mapping is enabled.
ExperimentConfig experiment_config_from_json(const nlohmann::json &j);
ExperimentConfig load_experiment_config(const std::filesystem::path &file);

struct LayerStageSummary {
    std::uint64_t layer_id = 0;
    std::size_t blocks = 0;
    double before = 0.0;
    double after = 0.0;
    std::uint64_t calls = 0;
};

struct PipelineResult {
    std::optional<double> twin_test_acc;
    std::optional<double> mapped_test_acc;
    std::optional<double> final_test_acc;
    std::vector<LayerStageSummary> ic;
    std::vector<LayerStageSummary> pm;
    std::vector<EpochMetrics> pretrain_metrics;
    std::vector<EpochMetrics> sl_metrics;
    std::uint64_t ic_calls = 0;
    std::uint64_t pm_calls = 0;
    std::uint64_t sl_calls = 0;
    std::vector<std::filesystem::path> checkpoints;
};

/// Runs the enabled stages in order pretrain -> IC -> PM -> SL and writes, under output_dir:
/// config.json, checkpoint_<stage>.json, pretrain_metrics.csv, metrics.csv, ic.csv, pm.csv and
/// cost.json. Stage failures are rethrown with the stage and layer named.
PipelineResult run_pipeline(const ExperimentConfig &cfg, const std::filesystem::path &base = {});

/// Builds the photonic model of `cfg` and, when given, loads a checkpoint into it.
Model build_photonic(const ExperimentConfig &cfg, const std::filesystem::path &checkpoint = {});

/// Zeroes Sigma and bias of the last photonic layer; unitaries stay as programmed.
void reset_head(Model &m);

nlohmann::json read_json_file(const std::filesystem::path &p);
void write_json_file(const std::filesystem::path &p, const nlohmann::json &j);

}  // namespace ptcflow
