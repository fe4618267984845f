#include "ptcflow/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ptcflow/errors.hpp"
#include "ptcflow/rng.hpp"

namespace ptcflow {

namespace fs = std::filesystem;

namespace {

template <class T>
void read_opt(const nlohmann::json &j, const char *key, T &out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

template <class F>
auto guarded(const std::string &what, F &&f) {
    try {
        return f();
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(what + ": " + e.what());
    }
}

/// Walks a photonic chain and its electronic counterpart side by side.
template <class F>
void for_each_photonic_pair(std::vector<std::unique_ptr<Layer>> &ph, std::vector<std::unique_ptr<Layer>> &el, F &&f) {
    if (ph.size() != el.size()) {
        throw ShapeError("model pair: layer counts differ");
    }
    for (std::size_t i = 0; i < ph.size(); ++i) {
        if (auto *p = dynamic_cast<PhotonicLayer *>(ph[i].get())) {
            f(*p, *el[i]);
        } else if (auto *r = dynamic_cast<Residual *>(ph[i].get())) {
            for_each_photonic_pair(r->body(), dynamic_cast<Residual &>(*el[i]).body(), f);
        }
    }
}

std::pair<Matrix, Vector> electronic_weight(Layer &l) {
    if (auto *lin = dynamic_cast<Linear *>(&l)) {
        return {lin->weight, lin->bias};
    }
    if (auto *conv = dynamic_cast<Conv2d *>(&l)) {
        return {conv->weight, conv->bias};
    }
    throw ShapeError("model pair: expected an electronic linear or conv layer, got " + l.kind());
}

void write_text(const fs::path &p, const std::string &s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) {
        throw InvalidInput("cannot write " + p.string());
    }
    os << s;
}

std::string metrics_csv(const std::vector<EpochMetrics> &rows) {
    std::ostringstream os;
    write_metrics_header(os);
    for (const auto &m : rows) {
        write_metrics_row(os, m);
    }
    return os.str();
}

std::string stage_csv(const std::vector<LayerStageSummary> &rows, const char *before, const char *after) {
    std::ostringstream os;
    os << "layer_id,blocks," << before << ',' << after << ",calls\n";
    char buf[160];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%zu,%.10g,%.10g,%llu\n", static_cast<unsigned long long>(r.layer_id),
                      r.blocks, r.before, r.after, static_cast<unsigned long long>(r.calls));
        os << buf;
    }
    return os.str();
}

[[noreturn]] void rethrow_in_stage(const std::string &stage, std::uint64_t layer_id) {
    const std::string where = stage + " (layer " + std::to_string(layer_id) + "): ";
    try {
        throw;
    } catch (const PreconditionError &e) {
        throw PreconditionError(where + e.what());
    } catch (const NumericalAbort &e) {
        throw NumericalAbort(where + e.what());
    } catch (const ShapeError &e) {
        throw ShapeError(where + e.what());
    } catch (const ConfigError &e) {
        throw ConfigError(where + e.what());
    }
}

nlohmann::json stage_projection(Stage s, const std::vector<LayerDims> &dims, std::size_t iterations,
                                std::size_t batch) {
    double steps = 0.0, calls = 0.0;
    for (const LayerDims &d : dims) {
        StageCostInput in;
        in.k = d.k;
        in.layers = 1;
        in.width = std::max(d.p(), d.q()) * d.k;
        in.iterations = iterations;
        in.batch = batch;
        in.h = d.h_out;
        in.w = d.w_out;
        const StageCost c = stage_cost(s, in);
        steps += c.steps;
        calls += c.ptc_calls;
    }
    return {{"steps", steps}, {"ptc_calls", calls}};
}

}  // namespace

nlohmann::json to_json(const NoiseConfig &c) {
    return {{"bitwidth_unitary", c.bitwidth_unitary},
            {"bitwidth_sigma", c.bitwidth_sigma},
            {"gamma_std", c.gamma_std},
            {"crosstalk_factor", c.crosstalk_factor},
            {"phase_bias_enabled", c.phase_bias_enabled},
            {"seed", c.seed}};
}

NoiseConfig noise_config_from_json(const nlohmann::json &j, const NoiseConfig &defaults) {
    NoiseConfig c = defaults;
    guarded("noise", [&] {
        read_opt(j, "bitwidth_unitary", c.bitwidth_unitary);
        read_opt(j, "bitwidth_sigma", c.bitwidth_sigma);
        read_opt(j, "gamma_std", c.gamma_std);
        read_opt(j, "crosstalk_factor", c.crosstalk_factor);
        read_opt(j, "phase_bias_enabled", c.phase_bias_enabled);
        read_opt(j, "seed", c.seed);
        return 0;
    });
    c.validate();
    return c;
}

nlohmann::json to_json(const ZooStageOptions &o) {
    return {{"optimizer", to_string(o.optimizer)},
            {"epochs", o.epochs},
            {"init_step", o.init_step},
            {"decay", o.decay},
            {"coarse_bits", o.coarse_bits},
            {"use_best", o.use_best},
            {"zgd",
             {{"momentum", o.zgd.momentum}, {"samples", o.zgd.samples}, {"learning_rate", o.zgd.learning_rate}}}};
}

ZooStageOptions zoo_options_from_json(const nlohmann::json &j, const ZooStageOptions &defaults) {
    ZooStageOptions o = defaults;
    guarded("zoo", [&] {
        if (j.contains("optimizer")) {
            o.optimizer = parse_zoo_kind(j.at("optimizer").get<std::string>());
        }
        read_opt(j, "epochs", o.epochs);
        read_opt(j, "init_step", o.init_step);
        read_opt(j, "decay", o.decay);
        read_opt(j, "coarse_bits", o.coarse_bits);
        read_opt(j, "use_best", o.use_best);
        if (j.contains("zgd")) {
            const auto &z = j.at("zgd");
            read_opt(z, "momentum", o.zgd.momentum);
            read_opt(z, "samples", o.zgd.samples);
            read_opt(z, "learning_rate", o.zgd.learning_rate);
        }
        return 0;
    });
    if (!(o.init_step > 0.0) || !(o.decay > 0.0 && o.decay <= 1.0) || o.coarse_bits < 1) {
        throw ConfigError("zoo: init_step > 0, decay in (0, 1] and coarse_bits >= 1 required");
    }
    return o;
}

nlohmann::json to_json(const MappingOptions &o) {
    nlohmann::json j = to_json(static_cast<const ZooStageOptions &>(o));
    j["osp"] = o.osp;
    j["noisy_osp_passes"] = o.noisy_osp_passes;
    j["osp_guard"] = o.osp_guard;
    return j;
}

MappingOptions mapping_options_from_json(const nlohmann::json &j, const MappingOptions &defaults) {
    MappingOptions o = defaults;
    static_cast<ZooStageOptions &>(o) = zoo_options_from_json(j, defaults);
    guarded("pm", [&] {
        read_opt(j, "osp", o.osp);
        read_opt(j, "noisy_osp_passes", o.noisy_osp_passes);
        read_opt(j, "osp_guard", o.osp_guard);
        return 0;
    });
    return o;
}

nlohmann::json to_json(const DataSpec &d) {
    return {{"source", d.source},           {"path", d.path},         {"mean", d.mean},
            {"std", d.std},                 {"train_limit", d.train_limit}, {"test_limit", d.test_limit},
            {"class_lo", d.class_lo},       {"class_hi", d.class_hi}, {"blobs", to_json(d.blobs)}};
}

DataSpec data_spec_from_json(const nlohmann::json &j) {
    DataSpec d;
    guarded("data", [&] {
        read_opt(j, "source", d.source);
        read_opt(j, "path", d.path);
        read_opt(j, "mean", d.mean);
        read_opt(j, "std", d.std);
        read_opt(j, "train_limit", d.train_limit);
        read_opt(j, "test_limit", d.test_limit);
        read_opt(j, "class_lo", d.class_lo);
        read_opt(j, "class_hi", d.class_hi);
        return 0;
    });
    if (j.contains("blobs")) {
        d.blobs = blobs_config_from_json(j.at("blobs"));
    }
    if (d.source != "blobs" && d.source != "idx") {
        throw ConfigError("data: unknown source '" + d.source + "' (expected blobs or idx)");
    }
    if (d.source == "idx" && d.path.empty()) {
        throw ConfigError("data: idx source needs a path");
    }
    if ((d.class_lo < 0) != (d.class_hi < 0) || d.class_lo > d.class_hi) {
        throw ConfigError("data: class_lo and class_hi must both be set with class_lo <= class_hi");
    }
    if (!(d.std > 0.0)) {
        throw ConfigError("data: std must be positive");
    }
    return d;
}

DatasetSplit load_data(const DataSpec &d, const fs::path &base) {
    DatasetSplit s;
    if (d.source == "blobs") {
        s = make_blobs(d.blobs);
    } else {
        fs::path dir(d.path);
        if (dir.is_relative() && !base.empty()) {
            dir = base / dir;
        }
        s = load_idx_dir(dir, d.mean, d.std, d.train_limit, d.test_limit);
    }
    if (d.class_lo >= 0) {
        s.train = s.train.filter_classes(d.class_lo, d.class_hi, true);
        s.test = s.test.filter_classes(d.class_lo, d.class_hi, true);
    }
    return s;
}

ExperimentConfig::ExperimentConfig() : sl(default_sl_config(true)) {
    ic.epochs = 400;
    pm.epochs = 300;
    pretrain.epochs = 20;
}

void ExperimentConfig::validate() const {
    model.validate();
    noise.validate();
    sampling.validate();
    pretrain.validate();
    sl.validate();
    if (workers == 0) {
        throw ConfigError("workers must be at least 1");
    }
    if (output_dir.empty()) {
        throw ConfigError("output_dir must not be empty");
    }
}

TrainConfig default_sl_config(bool after_mapping) {
    TrainConfig c;
    c.epochs = after_mapping ? 20 : 100;
    c.lr = after_mapping ? 2e-4 : 2e-3;
    c.weight_decay = 0.01;
    return c;
}

nlohmann::json to_json(const ExperimentConfig &c) {
    return {{"name", c.name},
            {"model", to_json(c.model)},
            {"data", to_json(c.data)},
            {"noise", to_json(c.noise)},
            {"sampling", to_json(c.sampling)},
            {"ic", to_json(c.ic)},
            {"pm", to_json(c.pm)},
            {"pretrain", to_json(c.pretrain)},
            {"sl", to_json(c.sl)},
            {"stages", {{"pretrain", c.stages.pretrain}, {"ic", c.stages.ic}, {"pm", c.stages.pm}, {"sl", c.stages.sl}}},
            {"seed", c.seed},
            {"workers", c.workers},
            {"output_dir", c.output_dir},
            {"init_checkpoint", c.init_checkpoint},
            {"reset_head", c.reset_head}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json &j) {
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    ExperimentConfig c;
    guarded("experiment", [&] {
        read_opt(j, "name", c.name);
        read_opt(j, "seed", c.seed);
        read_opt(j, "workers", c.workers);
        read_opt(j, "output_dir", c.output_dir);
        read_opt(j, "init_checkpoint", c.init_checkpoint);
        read_opt(j, "reset_head", c.reset_head);
        if (j.contains("stages")) {
            const auto &s = j.at("stages");
            read_opt(s, "pretrain", c.stages.pretrain);
            read_opt(s, "ic", c.stages.ic);
            read_opt(s, "pm", c.stages.pm);
            read_opt(s, "sl", c.stages.sl);
        }
        return 0;
    });
    if (j.contains("model")) {
        c.model = model_spec_from_json(j.at("model"));
    }
    if (j.contains("data")) {
        c.data = data_spec_from_json(j.at("data"));
    }
    if (j.contains("noise")) {
        c.noise = noise_config_from_json(j.at("noise"));
    }
    if (j.contains("sampling")) {
        c.sampling = sampling_plan_from_json(j.at("sampling"));
    }
    if (j.contains("ic")) {
        c.ic = zoo_options_from_json(j.at("ic"), c.ic);
    }
    if (j.contains("pm")) {
        c.pm = mapping_options_from_json(j.at("pm"), c.pm);
    }
    if (j.contains("pretrain")) {
        c.pretrain = train_config_from_json(j.at("pretrain"), c.pretrain);
    }
    const bool mapped = c.stages.pm || !c.init_checkpoint.empty();
    c.sl = train_config_from_json(j.value("sl", nlohmann::json::object()), default_sl_config(mapped));
    c.validate();
    return c;
}

nlohmann::json read_json_file(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot open " + p.string());
    }
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error &e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path &p, const nlohmann::json &j) { write_text(p, j.dump(2) + "\n"); }

ExperimentConfig load_experiment_config(const fs::path &file) {
    return experiment_config_from_json(read_json_file(file));
}

void reset_head(Model &m) {
    const auto layers = m.photonic_layers();
    if (layers.empty()) {
        throw ConfigError("reset_head: the model has no photonic layer");
    }
    PhotonicLayer &head = *layers.back();
    std::fill(head.sigma().begin(), head.sigma().end(), 0.0);
    std::fill(head.bias().begin(), head.bias().end(), 0.0);
    head.commit();
}

Model build_photonic(const ExperimentConfig &cfg, const fs::path &checkpoint) {
    Model m = build_model(cfg.model, BuildOptions{cfg.noise, cfg.seed});
    if (!checkpoint.empty()) {
        m.load_state(read_json_file(checkpoint));
    }
    return m;
}

PipelineResult run_pipeline(const ExperimentConfig &cfg, const fs::path &base) {
    cfg.validate();
    const fs::path out = fs::path(cfg.output_dir).is_relative() && !base.empty() ? base / cfg.output_dir
                                                                                  : fs::path(cfg.output_dir);
    fs::create_directories(out);
    write_json_file(out / "config.json", to_json(cfg));

    const DatasetSplit data = load_data(cfg.data, base);
    if (data.train.x.cols() != cfg.model.input.size()) {
        throw ConfigError("data: samples have " + std::to_string(data.train.x.cols()) +
                          " features, the model expects " + std::to_string(cfg.model.input.size()));
    }
    const Dataset *test = data.test.size() > 0 ? &data.test : nullptr;

    PipelineResult res;
    fs::path init;
    if (!cfg.init_checkpoint.empty()) {
        init = cfg.init_checkpoint;
        if (init.is_relative() && !base.empty()) {
            init = base / init;
        }
    }
    Model photonic = build_photonic(cfg, init);
    if (cfg.reset_head) {
        reset_head(photonic);
    }
    const auto checkpoint = [&](const std::string &stage) {
        const fs::path p = out / ("checkpoint_" + stage + ".json");
        write_json_file(p, photonic.state());
        res.checkpoints.push_back(p);
    };

    // Electronic reference: initialized from the same seed, optionally trained; its weights are the PM target.
    const ModelSpec espec = cfg.model.electronic();
    Model electronic = build_model(espec, BuildOptions{NoiseConfig::disabled(), cfg.seed});
    if (cfg.stages.pretrain) {
        Trainer t(electronic, cfg.pretrain, SamplingPlan{}, derive_seed(cfg.seed, {tag(SeedStage::pretrain)}),
                  cfg.workers);
        res.pretrain_metrics = t.fit(data.train, test);
        write_text(out / "pretrain_metrics.csv", metrics_csv(res.pretrain_metrics));
        write_json_file(out / "checkpoint_pretrain.json", electronic.state());
        res.twin_test_acc = test != nullptr ? evaluate(electronic, *test, cfg.workers) : 0.0;
    }

    if (cfg.stages.ic) {
        for (PhotonicLayer *l : photonic.photonic_layers()) {
            ZooStageOptions o = cfg.ic;
            o.seed = derive_seed(cfg.seed, {tag(SeedStage::calibrate), l->layer_id()});
            o.workers = cfg.workers;
            try {
                const auto results = calibrate_layer(l->hardware(), o);
                LayerStageSummary s{l->layer_id(), results.size(), 0.0, 0.0, 0};
                for (const auto &r : results) {
                    s.before += r.loss_initial / static_cast<double>(results.size());
                    s.after += r.loss_final / static_cast<double>(results.size());
                    s.calls += r.calls;
                }
                res.ic_calls += s.calls;
                res.ic.push_back(s);
            } catch (const Error &) {
                rethrow_in_stage("IC", l->layer_id());
            }
            l->sync_sigma();
        }
        write_text(out / "ic.csv", stage_csv(res.ic, "loss_initial", "loss_final"));
        checkpoint("ic");
    }

    if (cfg.stages.pm) {
        for_each_photonic_pair(photonic.layers(), electronic.layers(), [&](PhotonicLayer &l, Layer &e) {
            auto [w, b] = electronic_weight(e);
            MappingOptions o = cfg.pm;
            o.seed = derive_seed(cfg.seed, {tag(SeedStage::map), l.layer_id()});
            o.workers = cfg.workers;
            try {
                const MappingReport rep = parallel_map(l.hardware(), w, o);
                res.pm.push_back({l.layer_id(), rep.blocks.size(), rep.mean_dist_before(), rep.mean_dist_after(),
                                  rep.total_calls()});
                res.pm_calls += rep.total_calls();
            } catch (const Error &) {
                rethrow_in_stage("PM", l.layer_id());
            }
            if (b.size() == l.bias().size()) {
                l.bias() = b;
            }
            l.sync_sigma();
        });
        write_text(out / "pm.csv", stage_csv(res.pm, "dist_before_osp", "dist_after"));
        checkpoint("pm");
        if (test != nullptr) {
            res.mapped_test_acc = evaluate(photonic, *test, cfg.workers);
        }
    }

    std::uint64_t sl_steps = 0;
    if (cfg.stages.sl) {
        Trainer t(photonic, cfg.sl, cfg.sampling, derive_seed(cfg.seed, {tag(SeedStage::train)}), cfg.workers);
        std::ofstream csv(out / "metrics.csv", std::ios::binary);
        write_metrics_header(csv);
        res.sl_metrics = t.fit(data.train, test, &csv);
        res.sl_calls = t.meter().total();
        sl_steps = t.steps();
        checkpoint("sl");
    }
    if (test != nullptr) {
        res.final_test_acc = evaluate(photonic, *test, cfg.workers);
    }

    const std::vector<LayerDims> dims = photonic.cost_dims();
    CostReport dense = profile_iteration(dims, SamplingPlan{}, cfg.sl.batch_size, "dense");
    CostReport sparse = profile_iteration(dims, cfg.sampling, cfg.sl.batch_size, "sampled");
    sparse.set_baseline(dense);
    nlohmann::json cost = {
        {"dataset", cfg.data.source == "blobs" ? "blobs (synthetic stand-in)" : cfg.data.path},
        {"per_iteration", sparse.to_json()},
        {"per_iteration_dense", dense.to_json()},
        {"measured", {{"ic_calls", res.ic_calls}, {"pm_calls", res.pm_calls}, {"sl_calls", res.sl_calls},
                      {"sl_steps", sl_steps}}},
        {"projected",
         {{"ic", stage_projection(Stage::ic, dims, cfg.ic.epochs, 1)},
          {"pm", stage_projection(Stage::pm, dims, cfg.pm.epochs, 1)},
          {"sl", stage_projection(Stage::sl, dims, std::max<std::uint64_t>(sl_steps, 1), cfg.sl.batch_size)}}}};
    nlohmann::json acc = nlohmann::json::object();
    for (const auto &[key, value] : {std::pair{"twin", res.twin_test_acc}, std::pair{"mapped", res.mapped_test_acc},
                                     std::pair{"final", res.final_test_acc}}) {
        if (value) {
            acc[key] = *value;
        }
    }
    cost["test_accuracy"] = acc;
    write_json_file(out / "cost.json", cost);
    return res;
}

}  // namespace ptcflow
