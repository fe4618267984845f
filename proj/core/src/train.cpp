#include "ptcflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ptcflow/errors.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

namespace {

Matrix gather_rows(const Matrix &x, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = x.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0 || !(lr > 0.0) || !(lr_min >= 0.0) || !(weight_decay >= 0.0)) {
        throw ConfigError("train: epochs, batch size and lr must be positive; lr_min and weight decay >= 0");
    }
    if (scheduler != "cosine" && scheduler != "constant") {
        throw ConfigError("train: unknown scheduler '" + scheduler + "'");
    }
}

nlohmann::json to_json(const TrainConfig &c) {
    return {{"epochs", c.epochs},       {"lr", c.lr},
            {"lr_min", c.lr_min},       {"weight_decay", c.weight_decay},
            {"scheduler", c.scheduler}, {"batch_size", c.batch_size}};
}

TrainConfig train_config_from_json(const nlohmann::json &j, const TrainConfig &defaults) {
    TrainConfig c = defaults;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.lr = j.value("lr", c.lr);
        c.lr_min = j.value("lr_min", c.lr_min);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.scheduler = j.value("scheduler", c.scheduler);
        c.batch_size = j.value("batch_size", c.batch_size);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    c.validate();
    return c;
}

void write_metrics_header(std::ostream &os) {
    os << "epoch,loss,train_acc,test_acc,ptc_energy,steps,skipped_batches\n";
}

void write_metrics_row(std::ostream &os, const EpochMetrics &m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.6f,%.6f,%llu,%llu,%zu\n", m.epoch, m.loss, m.train_acc, m.test_acc,
                  static_cast<unsigned long long>(m.ptc_energy), static_cast<unsigned long long>(m.steps),
                  m.skipped_batches);
    os << buf;
}

Trainer::Trainer(Model &model, const TrainConfig &cfg, const SamplingPlan &plan, std::uint64_t seed,
                 std::size_t workers)
    : model_(model), cfg_(cfg), plan_(plan), seed_(seed), workers_(std::max<std::size_t>(1, workers)),
      opt_(AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay}) {
    cfg_.validate();
    plan_.validate();
}

EpochMetrics Trainer::run_epoch(const Dataset &train, const Dataset *test) {
    if (train.size() == 0) {
        throw InvalidInput("train: empty dataset");
    }
    if (train.x.cols() != model_.input_shape().size()) {
        throw ShapeError("train: dataset features do not match the model input");
    }
    const std::size_t e = epoch_;
    const double lr = cfg_.scheduler == "cosine"
                          ? cosine_lr(static_cast<double>(e), static_cast<double>(cfg_.epochs), cfg_.lr, cfg_.lr_min)
                          : cfg_.lr;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(seed_, {tag(SeedStage::train), e, 0}));
    std::shuffle(order.begin(), order.end(), shuffle);
    Rng drop(derive_seed(seed_, {tag(SeedStage::train), e, 1}));
    std::bernoulli_distribution keep(plan_.alpha_d);

    EpochMetrics m;
    m.epoch = e;
    double loss_sum = 0.0;
    std::size_t batches = 0, seen = 0, correct = 0;
    const SamplingPlan *plan = &plan_;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg_.batch_size, ++b) {
        if (plan_.alpha_d < 1.0 && !keep(drop)) {
            ++m.skipped_batches;
            continue;
        }
        const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        const Matrix x = gather_rows(train.x, idx);
        std::vector<int> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            y[i] = train.y[idx[i]];
        }

        StepContext ctx;
        ctx.plan = plan;
        ctx.seed = derive_seed(seed_, {tag(SeedStage::train), e, 2, b});
        ctx.meter = &meter_;
        ctx.workers = workers_;

        model_.zero_grad();
        const LossResult r = softmax_cross_entropy(model_.forward(x, ctx), y);
        if (!std::isfinite(r.loss)) {
            throw NumericalAbort("train: non-finite loss at epoch " + std::to_string(e) + ", batch " +
                                 std::to_string(b));
        }
        model_.backward(r.grad, ctx);
        opt_.step(model_.params(), lr);
        model_.commit();
        ++steps_;

        loss_sum += r.loss;
        correct += r.correct;
        seen += idx.size();
        ++batches;
    }
    m.loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    m.train_acc = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    m.test_acc = test != nullptr ? evaluate(model_, *test, workers_) : -1.0;
    m.ptc_energy = meter_.total();
    m.steps = steps_;
    ++epoch_;
    return m;
}

std::vector<EpochMetrics> Trainer::fit(const Dataset &train, const Dataset *test, std::ostream *csv) {
    std::vector<EpochMetrics> out;
    while (epoch_ < cfg_.epochs) {
        out.push_back(run_epoch(train, test));
        if (csv != nullptr) {
            write_metrics_row(*csv, out.back());
            csv->flush();
        }
    }
    return out;
}

double evaluate(Model &model, const Dataset &data, std::size_t workers, std::size_t batch) {
    if (data.size() == 0) {
        return 0.0;
    }
    StepContext ctx;
    ctx.workers = workers;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch) {
        const std::size_t end = std::min(data.size(), start + batch);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Matrix logits = model.forward(gather_rows(data.x, idx), ctx);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            correct += argmax(logits.row(i)) == static_cast<std::size_t>(data.y[idx[i]]);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace ptcflow
