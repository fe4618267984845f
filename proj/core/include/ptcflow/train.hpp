#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptcflow/cost.hpp"
#include "ptcflow/data.hpp"
#include "ptcflow/nn.hpp"
#include "ptcflow/optim.hpp"
#include "ptcflow/sampling.hpp"

namespace ptcflow {

struct TrainConfig {
    std::size_t epochs = 100;
    double lr = 0.002;
    double lr_min = 0.0;
    double weight_decay = 0.01;
    /// "cosine" or "constant".
    std::string scheduler = "cosine";
    std::size_t batch_size = 32;

    void validate() const;
    bool operator==(const TrainConfig &) const = default;
};

nlohmann::json to_json(const TrainConfig &c);
TrainConfig train_config_from_json(const nlohmann::json &j, const TrainConfig &defaults = {});

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;       // mean over processed batches
    double train_acc = 0.0;  // over processed samples
    double test_acc = 0.0;   // -1 without a test set
    std::uint64_t ptc_energy = 0;  // cumulative measured PTC calls
    std::uint64_t steps = 0;       // cumulative optimizer steps
    std::size_t skipped_batches = 0;
};

/// Header plus one row per epoch: epoch,loss,train_acc,test_acc,ptc_energy,steps,skipped_batches.
void write_metrics_header(std::ostream &os);
void write_metrics_row(std::ostream &os, const EpochMetrics &m);

/// Mini-batch trainer. Photonic layers learn their Sigma (and electronic bias) through the sparse
/// subspace routines of `plan`; phases of U and V* are never written. Each batch is kept with
/// probability plan.alpha_d. All randomness derives from (seed, epoch, batch).
class Trainer {
  public:
    Trainer(Model &model, const TrainConfig &cfg, const SamplingPlan &plan, std::uint64_t seed,
            std::size_t workers = 1);

    EpochMetrics run_epoch(const Dataset &train, const Dataset *test = nullptr);
    /// Runs the remaining epochs; rows are appended to `csv` when given.
    std::vector<EpochMetrics> fit(const Dataset &train, const Dataset *test, std::ostream *csv = nullptr);

    std::size_t epoch() const noexcept { return epoch_; }
    std::uint64_t steps() const noexcept { return steps_; }
    const CostMeter &meter() const noexcept { return meter_; }

  private:
    Model &model_;
    TrainConfig cfg_;
    SamplingPlan plan_;
    std::uint64_t seed_;
    std::size_t workers_;
    AdamW opt_;
    CostMeter meter_;
    std::size_t epoch_ = 0;
    std::uint64_t steps_ = 0;
};

/// Top-1 accuracy in inference mode (no gradients, no energy accounting).
double evaluate(Model &model, const Dataset &data, std::size_t workers = 1, std::size_t batch = 256);

}  // namespace ptcflow
