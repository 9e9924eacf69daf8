#include "sril/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sril/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sril {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw TensorError("spec: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw TensorError("spec: unknown key '" + key + "' in '" + where + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (j.contains(key)) return j.at(key).get<T>();
    return fallback;
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw TensorError("spec: missing required key '" + key + "' in '" + where + "'");
    return j.at(key).get<T>();
}

}  // namespace

ExperimentSpec spec_from_json(const json& j) {
    check_keys(j, {"dataset", "scenario", "method", "outputs", "grid"}, "spec");
    ExperimentSpec s;

    const json& d = j.contains("dataset") ? j.at("dataset") : json::object();
    if (!j.contains("dataset")) throw TensorError("spec: missing required block 'dataset'");
    s.dataset.kind = get_or<std::string>(d, "kind", "blobs");
    if (s.dataset.kind == "blobs") {
        check_keys(d, {"kind", "classes", "dim", "train_per_class", "test_per_class", "spread"},
                   "dataset");
        s.dataset.classes = require<int>(d, "classes", "dataset");
        s.dataset.dim = get_or<int>(d, "dim", 8);
        s.dataset.train_per_class = get_or<int>(d, "train_per_class", 200);
        s.dataset.test_per_class = get_or<int>(d, "test_per_class", 50);
        s.dataset.spread = get_or<double>(d, "spread", 0.3);
    } else if (s.dataset.kind == "rings") {
        check_keys(d, {"kind", "classes", "train_per_class", "test_per_class", "spread", "radius_step"},
                   "dataset");
        s.dataset.classes = require<int>(d, "classes", "dataset");
        s.dataset.train_per_class = get_or<int>(d, "train_per_class", 200);
        s.dataset.test_per_class = get_or<int>(d, "test_per_class", 50);
        s.dataset.spread = get_or<double>(d, "spread", 0.1);
        s.dataset.radius_step = get_or<double>(d, "radius_step", 1.0);
    } else if (s.dataset.kind == "idx") {
        check_keys(d, {"kind", "train_images", "train_labels", "test_images", "test_labels"}, "dataset");
        s.dataset.train_images = require<std::string>(d, "train_images", "dataset");
        s.dataset.train_labels = require<std::string>(d, "train_labels", "dataset");
        s.dataset.test_images = require<std::string>(d, "test_images", "dataset");
        s.dataset.test_labels = require<std::string>(d, "test_labels", "dataset");
    } else if (s.dataset.kind == "csv") {
        check_keys(d, {"kind", "train_path", "test_path", "label_column"}, "dataset");
        s.dataset.train_path = require<std::string>(d, "train_path", "dataset");
        s.dataset.test_path = require<std::string>(d, "test_path", "dataset");
        s.dataset.label_column = require<std::string>(d, "label_column", "dataset");
    } else {
        throw TensorError("spec: unknown dataset kind '" + s.dataset.kind + "'");
    }

    if (!j.contains("scenario")) throw TensorError("spec: missing required block 'scenario'");
    const json& sc = j.at("scenario");
    check_keys(sc, {"initial_task_size", "increment", "seeds", "memory_per_class"}, "scenario");
    s.scenario.initial_task_size = require<int>(sc, "initial_task_size", "scenario");
    s.scenario.increment = require<int>(sc, "increment", "scenario");
    s.scenario.seeds = get_or<std::vector<std::uint64_t>>(sc, "seeds", {0});
    s.scenario.memory_per_class = get_or<int>(sc, "memory_per_class", 20);

    const json& m = j.contains("method") ? j.at("method") : json::object();
    check_keys(m,
               {"alpha", "lambda_th", "lambda_gfd", "epochs", "batch_size", "lr0", "momentum",
                "weight_decay", "distill_mode", "cwi_enabled", "K", "margin"},
               "method");
    s.method.alpha = get_or<double>(m, "alpha", 0.995);
    s.method.lambda_th = get_or<double>(m, "lambda_th", 0.1);
    s.method.lambda_gfd = get_or<double>(m, "lambda_gfd", 2.0);
    s.method.epochs = get_or<int>(m, "epochs", 40);
    s.method.batch_size = get_or<int>(m, "batch_size", 128);
    s.method.lr0 = get_or<double>(m, "lr0", 0.1);
    s.method.momentum = get_or<double>(m, "momentum", 0.9);
    s.method.weight_decay = get_or<double>(m, "weight_decay", 0.0005);
    s.method.distill_mode = distill_mode_from_string(get_or<std::string>(m, "distill_mode", "gfd"));
    s.method.cwi_enabled = get_or<bool>(m, "cwi_enabled", true);
    s.method.K = get_or<int>(m, "K", 10);
    s.method.margin = get_or<double>(m, "margin", 0.6);
    s.method.validate();

    const json& o = j.contains("outputs") ? j.at("outputs") : json::object();
    check_keys(o, {"dir", "formats"}, "outputs");
    s.outputs.dir = get_or<std::string>(o, "dir", "runs/experiment");
    s.outputs.formats = get_or<std::vector<std::string>>(o, "formats", {"json"});
    return s;
}

json spec_to_json(const ExperimentSpec& s) {
    json d;
    d["kind"] = s.dataset.kind;
    if (s.dataset.kind == "blobs") {
        d["classes"] = s.dataset.classes;
        d["dim"] = s.dataset.dim;
        d["train_per_class"] = s.dataset.train_per_class;
        d["test_per_class"] = s.dataset.test_per_class;
        d["spread"] = s.dataset.spread;
    } else if (s.dataset.kind == "rings") {
        d["classes"] = s.dataset.classes;
        d["train_per_class"] = s.dataset.train_per_class;
        d["test_per_class"] = s.dataset.test_per_class;
        d["spread"] = s.dataset.spread;
        d["radius_step"] = s.dataset.radius_step;
    } else if (s.dataset.kind == "idx") {
        d["train_images"] = s.dataset.train_images;
        d["train_labels"] = s.dataset.train_labels;
        d["test_images"] = s.dataset.test_images;
        d["test_labels"] = s.dataset.test_labels;
    } else {
        d["train_path"] = s.dataset.train_path;
        d["test_path"] = s.dataset.test_path;
        d["label_column"] = s.dataset.label_column;
    }
    json j;
    j["dataset"] = d;
    j["scenario"] = {{"initial_task_size", s.scenario.initial_task_size},
                     {"increment", s.scenario.increment},
                     {"seeds", s.scenario.seeds},
                     {"memory_per_class", s.scenario.memory_per_class}};
    j["method"] = {{"alpha", s.method.alpha},
                   {"lambda_th", s.method.lambda_th},
                   {"lambda_gfd", s.method.lambda_gfd},
                   {"epochs", s.method.epochs},
                   {"batch_size", s.method.batch_size},
                   {"lr0", s.method.lr0},
                   {"momentum", s.method.momentum},
                   {"weight_decay", s.method.weight_decay},
                   {"distill_mode", to_string(s.method.distill_mode)},
                   {"cwi_enabled", s.method.cwi_enabled},
                   {"K", s.method.K},
                   {"margin", s.method.margin}};
    j["outputs"] = {{"dir", s.outputs.dir}, {"formats", s.outputs.formats}};
    return j;
}

json load_spec_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw TensorError("cannot open experiment spec: " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw TensorError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

std::vector<std::pair<std::string, json>> expand_grid(const json& spec) {
    json base = spec;
    base.erase("grid");
    if (!spec.contains("grid")) return {{"", base}};
    const json& grid = spec.at("grid");
    if (!grid.is_object()) throw TensorError("spec: 'grid' must be an object");

    std::vector<std::pair<std::string, std::vector<json>>> axes;
    for (const auto& [key, vals] : grid.items()) {
        if (!vals.is_array() || vals.empty())
            throw TensorError("spec: grid axis '" + key + "' must be a non-empty array");
        axes.emplace_back(key, std::vector<json>(vals.begin(), vals.end()));
    }

    std::vector<std::pair<std::string, json>> combos{{"", base}};
    for (const auto& [key, vals] : axes) {
        // dotted path, e.g. method.distill_mode
        std::vector<std::string> parts;
        std::istringstream ss(key);
        std::string part;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        const std::string leaf = parts.back();

        std::vector<std::pair<std::string, json>> next;
        for (const auto& [name, cfg] : combos)
            for (const json& v : vals) {
                json c = cfg;
                json* cur = &c;
                for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
                (*cur)[leaf] = v;
                std::string vstr = v.is_string() ? v.get<std::string>() : v.dump();
                next.emplace_back(name.empty() ? leaf + "=" + vstr : name + "_" + leaf + "=" + vstr,
                                  c);
            }
        combos = std::move(next);
    }
    // re-validate each combo so bad grid values fail fast
    for (const auto& [name, cfg] : combos) spec_from_json(cfg);
    return combos;
}

std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& ds, std::uint64_t seed) {
    if (ds.kind == "blobs") {
        BlobsConfig cfg;
        cfg.classes = ds.classes;
        cfg.dim = ds.dim;
        cfg.train_per_class = ds.train_per_class;
        cfg.test_per_class = ds.test_per_class;
        cfg.spread = ds.spread;
        cfg.seed = derive_seed(seed, "dataset");
        return make_blobs(cfg);
    }
    if (ds.kind == "rings") {
        RingsConfig cfg;
        cfg.classes = ds.classes;
        cfg.train_per_class = ds.train_per_class;
        cfg.test_per_class = ds.test_per_class;
        cfg.spread = ds.spread;
        cfg.radius_step = ds.radius_step;
        cfg.seed = derive_seed(seed, "dataset");
        return make_rings(cfg);
    }
    if (ds.kind == "idx")
        return {load_idx(ds.train_images, ds.train_labels), load_idx(ds.test_images, ds.test_labels)};
    return {load_csv(ds.train_path, ds.label_column), load_csv(ds.test_path, ds.label_column)};
}

BackboneConfig backbone_for(const Dataset& train) {
    BackboneConfig cfg;
    if (train.sample_shape.size() == 1) {
        cfg.arch = "mlp-s";
        cfg.input_dim = train.sample_shape[0];
    } else {
        cfg.arch = "conv-s";
        cfg.in_channels = train.sample_shape[0];
        cfg.height = train.sample_shape[1];
        cfg.width = train.sample_shape[2];
    }
    return cfg;
}

std::string resolve_output_dir(const std::string& dir) {
    fs::path p(dir);
    if (p.is_absolute()) return dir;
    if (const char* root = std::getenv("SRIL_OUTPUT_ROOT")) return (fs::path(root) / p).string();
    return dir;
}

std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

namespace {

json step_to_json(const StepRecord& r, double delta) {
    json j;
    j["step"] = r.step;
    j["lr"] = r.lr;
    j["cls_loss"] = r.cls_loss;
    j["gfd_loss"] = r.gfd_loss;
    j["conf_old_model"] = std::isnan(r.conf_old) ? json(nullptr) : json(r.conf_old);
    j["conf_new_model"] = std::isnan(r.conf_new) ? json(nullptr) : json(r.conf_new);
    j["gate_fired"] = r.gate_fired;
    j["mask_rate"] = r.mask_rate;
    j["delta"] = delta;
    return j;
}

void write_steps(const std::string& path, const TaskLog& log, double delta) {
    std::ofstream os(path);
    if (!os) throw TensorError("cannot write step log: " + path);
    for (const auto& r : log.steps) os << step_to_json(r, delta).dump() << "\n";
}

json matrix_to_json(const AccuracyMatrix& m) {
    return json{{"a", m.a}, {"test_counts", m.test_counts}};
}

AccuracyMatrix matrix_from_json(const json& j) {
    AccuracyMatrix m;
    m.a = j.at("a").get<std::vector<std::vector<double>>>();
    m.test_counts = j.at("test_counts").get<std::vector<int>>();
    return m;
}

Tensor probe_batch(const Dataset& test) {
    const int n = static_cast<int>(std::min<std::size_t>(256, test.size()));
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    return test.batch(idx);
}

}  // namespace

RunResult run_single(const ExperimentSpec& spec, std::uint64_t seed, const std::string& run_dir,
                     const RunOptions& opts, int stop_after_task) {
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    const fs::path dir(run_dir);
    const fs::path progress_path = dir / "progress.json";
    if (fs::exists(progress_path) && !opts.resume && !opts.overwrite)
        throw TensorError("run directory " + run_dir +
                          " already contains a run; pass --overwrite or --resume");

    auto [train, test] = build_datasets(spec.dataset, seed);
    const int num_classes = train.num_classes;
    Scenario scenario = build_scenario(num_classes, spec.scenario.initial_task_size,
                                       spec.scenario.increment, seed);
    const int T = scenario.num_tasks();
    const BackboneConfig bb_cfg = backbone_for(train);

    SRILConfig cfg = spec.method;
    cfg.seed = seed;
    cfg.deterministic = opts.deterministic;

    {
        json config;
        config["spec"] = spec_to_json(spec);
        config["seed"] = seed;
        config["deterministic"] = opts.deterministic;
        std::ofstream os(dir / "config.json");
        os << config.dump(2) << "\n";
    }

    Model model;
    ExemplarStore store;
    store.per_class_budget = spec.scenario.memory_per_class;
    AccuracyMatrix acc_cnn, acc_nme;
    int start_task = 0;

    if (opts.resume && fs::exists(progress_path)) {
        std::ifstream is(progress_path);
        json prog = json::parse(is);
        start_task = prog.at("completed_tasks").get<int>();
        if (start_task > 0) {
            model = load_checkpoint((dir / "checkpoints" /
                                     ("task" + std::to_string(start_task - 1) + ".ckpt"))
                                        .string());
            store = ExemplarStore::load(
                (dir / ("exemplars_task" + std::to_string(start_task - 1) + ".json")).string());
            acc_cnn = matrix_from_json(prog.at("cnn"));
            acc_nme = matrix_from_json(prog.at("nme"));
        }
    }

    for (int t = start_task; t < T; ++t) {
        const int n_task = static_cast<int>(scenario.tasks[t].size());
        const int n_seen = scenario.classes_through(t);

        ModelPair pair;
        if (t == 0) {
            RngStream init_rng(derive_seed(seed, "init"));
            model = make_model(bb_cfg, n_task, cfg.K, cfg.margin, init_rng);
        } else {
            pair.old_model = snapshot(model);
            RngStream expand_rng(derive_seed(seed, "expand", static_cast<std::uint64_t>(t)));
            expand_head(model.head, n_task, expand_rng);
        }
        pair.new_model = model;

        // task samples plus replay memory
        std::vector<int> idxs;
        std::vector<int> labels;
        for (int cls : scenario.tasks[t])
            for (int i : train.indices_of_class(cls)) {
                idxs.push_back(i);
                labels.push_back(scenario.head_index[cls]);
            }
        if (t > 0)
            for (const auto& [cls, exemplar_idxs] : store.indices_by_class)
                for (int i : exemplar_idxs) {
                    idxs.push_back(i);
                    labels.push_back(scenario.head_index[cls]);
                }

        const TaskState state = make_task_state(t, n_task, n_seen, cfg);
        TaskLog log = train_task(pair, train, idxs, labels, cfg, state,
                                 derive_seed(seed, "task", static_cast<std::uint64_t>(t)));
        model = pair.new_model;

        write_steps((dir / ("steps_task" + std::to_string(t) + ".jsonl")).string(), log, state.delta);
        update_exemplars(store, train, scenario.tasks[t], model, spec.scenario.memory_per_class);
        save_checkpoint((dir / "checkpoints" / ("task" + std::to_string(t) + ".ckpt")).string(), model);
        store.save((dir / ("exemplars_task" + std::to_string(t) + ".json")).string());

        EvalResult ev_cnn = evaluate(model, test, scenario, t + 1, EvalHead::cnn);
        EvalResult ev_nme = evaluate(model, test, scenario, t + 1, EvalHead::nme, &store, &train);
        acc_cnn.a.push_back(ev_cnn.per_task);
        acc_nme.a.push_back(ev_nme.per_task);
        acc_cnn.test_counts = ev_cnn.per_task_count;
        acc_nme.test_counts = ev_nme.per_task_count;

        {
            json prog;
            prog["completed_tasks"] = t + 1;
            prog["cnn"] = matrix_to_json(acc_cnn);
            prog["nme"] = matrix_to_json(acc_nme);
            std::ofstream os(progress_path);
            os << prog.dump(2) << "\n";
        }
        if (stop_after_task >= 0 && t >= stop_after_task) {
            RunResult partial;
            partial.cnn = acc_cnn;
            partial.nme = acc_nme;
            return partial;
        }
    }

    // analysis artifacts: representation similarity and channel drift
    // between the task-0 model and the final model on a fixed probe
    Model task0 = load_checkpoint((dir / "checkpoints" / "task0.ckpt").string());
    Tensor probe = probe_batch(test);
    auto heat = cka_heatmap(task0, model, probe);
    std::vector<std::vector<double>> shifts;
    for (int l = 0; l < model.backbone.num_stages(); ++l)
        shifts.push_back(channel_shift_histogram(task0, model, probe, l));

    json metrics;
    metrics["config"] = spec_to_json(spec);
    metrics["config_hash"] = config_hash(spec_to_json(spec));
    metrics["seed"] = seed;
    {
        json sc;
        sc["num_tasks"] = T;
        sc["num_increments"] = scenario.num_increments();
        std::vector<int> sizes;
        for (const auto& task : scenario.tasks) sizes.push_back(static_cast<int>(task.size()));
        sc["classes_per_task"] = sizes;
        metrics["scenario"] = sc;
    }
    metrics["accuracy_matrix"] = {{"cnn", matrix_to_json(acc_cnn)}, {"nme", matrix_to_json(acc_nme)}};
    std::vector<double> seen_cnn, seen_nme, diag_cnn;
    for (int k = 0; k < T; ++k) {
        seen_cnn.push_back(acc_cnn.all_seen(k));
        seen_nme.push_back(acc_nme.all_seen(k));
        diag_cnn.push_back(acc_cnn.a[k][k]);
    }
    metrics["all_seen"] = {{"cnn", seen_cnn}, {"nme", seen_nme}};
    metrics["average_accuracy"] = {{"cnn", average_accuracy(acc_cnn)},
                                   {"nme", average_accuracy(acc_nme)}};
    if (T >= 2)
        metrics["forgetting_measure"] = {{"cnn", forgetting_measure(acc_cnn)},
                                         {"nme", forgetting_measure(acc_nme)}};
    metrics["new_task_accuracy"] = {{"cnn", diag_cnn}};
    metrics["cka_heatmap"] = heat;
    metrics["cka_last_tap_diag"] = heat.back().back();
    metrics["channel_shift"] = shifts;
    {
        std::ofstream os(dir / "metrics.json");
        os << metrics.dump(2) << "\n";
    }

    // embeddings of the test set for external visualization
    {
        std::vector<int> all(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) all[i] = static_cast<int>(i);
        auto emb = embed_samples(model, test, all);
        std::ofstream os(dir / "embeddings.csv");
        os << "label";
        for (std::size_t d = 0; d < emb[0].size(); ++d) os << ",e" << d;
        os << "\n";
        for (std::size_t i = 0; i < emb.size(); ++i) {
            os << test.labels[i];
            for (double v : emb[i]) os << "," << v;
            os << "\n";
        }
    }

    RunResult res;
    res.cnn = acc_cnn;
    res.nme = acc_nme;
    res.metrics = metrics;
    return res;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.empty() ? 1 : static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / (static_cast<double>(v.size()) - 1)) : 0.0;
    return {m, s};
}

}  // namespace

std::vector<std::string> run_experiment(const std::string& spec_path, const RunOptions& opts) {
    json raw = load_spec_file(spec_path);
    spec_from_json(raw.contains("grid") ? [&] {
        json b = raw;
        b.erase("grid");
        return b;
    }() : raw);
    auto combos = expand_grid(raw);

    std::vector<std::string> combo_dirs;
    for (const auto& [combo_name, cfg_json] : combos) {
        ExperimentSpec spec = spec_from_json(cfg_json);
        if (opts.seed_override) spec.scenario.seeds = {*opts.seed_override};
        fs::path out = resolve_output_dir(spec.outputs.dir);
        if (!combo_name.empty()) out /= combo_name;
        fs::create_directories(out);

        json agg;
        agg["combo"] = combo_name;
        agg["config"] = spec_to_json(spec);
        std::vector<double> avg_cnn, avg_nme, fm_cnn, fm_nme;
        json per_seed = json::object();
        for (std::uint64_t seed : spec.scenario.seeds) {
            const std::string seed_dir = (out / ("seed_" + std::to_string(seed))).string();
            RunResult r = run_single(spec, seed, seed_dir, opts);
            avg_cnn.push_back(average_accuracy(r.cnn));
            avg_nme.push_back(average_accuracy(r.nme));
            if (r.cnn.num_tasks() >= 2) {
                fm_cnn.push_back(forgetting_measure(r.cnn));
                fm_nme.push_back(forgetting_measure(r.nme));
            }
            per_seed[std::to_string(seed)] = {{"average_accuracy_cnn", avg_cnn.back()},
                                              {"average_accuracy_nme", avg_nme.back()}};
        }
        auto [mc, sc] = mean_std(avg_cnn);
        auto [mn, sn] = mean_std(avg_nme);
        agg["average_accuracy"] = {{"cnn", {{"mean", mc}, {"std", sc}}},
                                   {"nme", {{"mean", mn}, {"std", sn}}}};
        if (!fm_cnn.empty()) {
            auto [fmc, fsc] = mean_std(fm_cnn);
            auto [fmn, fsn] = mean_std(fm_nme);
            agg["forgetting_measure"] = {{"cnn", {{"mean", fmc}, {"std", fsc}}},
                                         {"nme", {{"mean", fmn}, {"std", fsn}}}};
        }
        agg["per_seed"] = per_seed;
        std::ofstream os(out / "aggregate.json");
        os << agg.dump(2) << "\n";
        combo_dirs.push_back(out.string());
    }
    return combo_dirs;
}

namespace {

struct DirSummary {
    std::string name;
    json config;
    json agg;                       // aggregate.json content
    std::vector<std::uint64_t> seeds;
    // per seed new-task accuracies (cnn), for IM
    std::map<std::uint64_t, std::vector<double>> new_task_acc;
    std::map<std::uint64_t, double> avg_cnn;
};

DirSummary load_dir(const std::string& d) {
    DirSummary s;
    s.name = fs::path(d).filename().string();
    const fs::path agg_path = fs::path(d) / "aggregate.json";
    if (!fs::exists(agg_path))
        throw TensorError("no aggregate.json in " + d + " (is this a combo directory?)");
    std::ifstream is(agg_path);
    s.agg = json::parse(is);
    s.config = s.agg.at("config");
    for (const auto& seed : s.config.at("scenario").at("seeds")) {
        const std::uint64_t sd = seed.get<std::uint64_t>();
        const fs::path mp = fs::path(d) / ("seed_" + std::to_string(sd)) / "metrics.json";
        if (!fs::exists(mp)) continue;
        std::ifstream ms(mp);
        json m = json::parse(ms);
        s.seeds.push_back(sd);
        s.new_task_acc[sd] = m.at("new_task_accuracy").at("cnn").get<std::vector<double>>();
        s.avg_cnn[sd] = m.at("average_accuracy").at("cnn").get<double>();
    }
    return s;
}

bool is_baseline(const json& config) {
    const auto& m = config.at("method");
    return m.at("distill_mode") == "none" && m.at("cwi_enabled") == false;
}

std::string fmt_pm(const json& node) {
    if (node.is_null()) return "-";
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << 100.0 * node.at("mean").get<double>() << " +/- "
       << 100.0 * node.at("std").get<double>();
    return os.str();
}

}  // namespace

std::string report(const std::vector<std::string>& dirs, const std::string& format,
                   const std::string& reference_dir) {
    std::vector<DirSummary> rows;
    for (const auto& d : dirs) rows.push_back(load_dir(d));

    // scenario shapes must match; differing shapes are flagged, not merged
    std::string warn;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const json a = rows[0].config.at("scenario"), b = rows[i].config.at("scenario");
        if (a.at("initial_task_size") != b.at("initial_task_size") ||
            a.at("increment") != b.at("increment"))
            warn = "WARNING: heterogeneous scenario shapes across directories (" + rows[0].name +
                   " vs " + rows[i].name + "); rows are not comparable\n";
    }

    // IM reference: explicit dir, else the baseline configuration if present
    const DirSummary* ref = nullptr;
    DirSummary ref_loaded;
    if (!reference_dir.empty()) {
        ref_loaded = load_dir(reference_dir);
        ref = &ref_loaded;
    } else {
        for (const auto& r : rows)
            if (is_baseline(r.config)) ref = &r;
    }

    json out = json::array();
    for (const auto& r : rows) {
        json row;
        row["name"] = r.name;
        row["distill_mode"] = r.config.at("method").at("distill_mode");
        row["cwi_enabled"] = r.config.at("method").at("cwi_enabled");
        row["memory_per_class"] = r.config.at("scenario").at("memory_per_class");
        row["average_accuracy_cnn"] = r.agg.at("average_accuracy").at("cnn");
        row["average_accuracy_nme"] = r.agg.at("average_accuracy").at("nme");
        row["forgetting_measure_cnn"] =
            r.agg.contains("forgetting_measure") ? r.agg.at("forgetting_measure").at("cnn") : json();
        if (ref) {
            std::vector<double> ims;
            for (auto sd : r.seeds) {
                auto it = ref->new_task_acc.find(sd);
                if (it == ref->new_task_acc.end()) continue;
                const auto& mine = r.new_task_acc.at(sd);
                if (mine.size() != it->second.size() || mine.size() < 2) continue;
                double s = 0.0;
                for (std::size_t k = 1; k < mine.size(); ++k) s += it->second[k] - mine[k];
                ims.push_back(s / (static_cast<double>(mine.size()) - 1));
            }
            if (!ims.empty()) {
                auto [m, sdv] = mean_std(ims);
                row["intransigence_measure_cnn"] = {{"mean", m}, {"std", sdv}};
            }
        }
        out.push_back(row);
    }

    if (format == "json") return warn + out.dump(2) + "\n";
    std::ostringstream os;
    os << warn;
    const char sep = format == "csv" ? ',' : '|';
    os << "name" << sep << "distill" << sep << "cwi" << sep << "mem" << sep << "avg_acc_cnn" << sep
       << "avg_acc_nme" << sep << "fm_cnn" << sep << "im_cnn" << "\n";
    for (const auto& row : out) {
        os << row.at("name").get<std::string>() << sep
           << row.at("distill_mode").get<std::string>() << sep
           << (row.at("cwi_enabled").get<bool>() ? "on" : "off") << sep
           << row.at("memory_per_class").get<int>() << sep
           << fmt_pm(row.at("average_accuracy_cnn")) << sep
           << fmt_pm(row.at("average_accuracy_nme")) << sep
           << fmt_pm(row.at("forgetting_measure_cnn")) << sep
           << (row.contains("intransigence_measure_cnn") ? fmt_pm(row.at("intransigence_measure_cnn"))
                                                         : "-")
           << "\n";
    }
    return os.str();
}

std::vector<std::string> inspect(const std::string& run_dir, const std::string& what) {
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "config.json"))
        throw TensorError("no config.json in " + run_dir + " (expected a seed run directory)");
    std::ifstream cis(dir / "config.json");
    json config = json::parse(cis);
    const std::uint64_t seed = config.at("seed").get<std::uint64_t>();
    ExperimentSpec spec = spec_from_json(config.at("spec"));

    auto list_step_files = [&] {
        std::vector<fs::path> files;
        for (int t = 0;; ++t) {
            fs::path p = dir / ("steps_task" + std::to_string(t) + ".jsonl");
            if (!fs::exists(p)) break;
            files.push_back(p);
        }
        if (files.empty()) throw TensorError("no step logs in " + run_dir);
        return files;
    };

    std::vector<std::string> written;
    if (what == "confidence") {
        std::ofstream os(dir / "confidence.csv");
        os << "task,step,conf_diff,delta,gate_fired\n";
        int t = 0;
        for (const auto& f : list_step_files()) {
            std::ifstream is(f);
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                json r = json::parse(line);
                if (r.at("conf_old_model").is_null()) continue;
                os << t << "," << r.at("step").get<int>() << ","
                   << (r.at("conf_old_model").get<double>() - r.at("conf_new_model").get<double>())
                   << "," << r.at("delta").get<double>() << "," << (r.at("gate_fired").get<bool>() ? 1 : 0)
                   << "\n";
            }
            ++t;
        }
        written.push_back((dir / "confidence.csv").string());
    } else if (what == "mask") {
        std::ofstream os(dir / "mask_rates.csv");
        os << "task,step";
        bool header_done = false;
        std::ostringstream body;
        int t = 0;
        std::size_t layers = 0;
        for (const auto& f : list_step_files()) {
            std::ifstream is(f);
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                json r = json::parse(line);
                const auto rates = r.at("mask_rate").get<std::vector<double>>();
                if (rates.empty()) continue;
                layers = rates.size();
                header_done = true;
                body << t << "," << r.at("step").get<int>();
                for (double v : rates) body << "," << v;
                body << "\n";
            }
            ++t;
        }
        if (!header_done) throw TensorError("run has no mask statistics (distill mode 'none'?)");
        for (std::size_t l = 0; l < layers; ++l) os << ",rate_l" << l;
        os << "\n" << body.str();
        written.push_back((dir / "mask_rates.csv").string());
    } else if (what == "cka" || what == "shift") {
        auto [train, test] = build_datasets(spec.dataset, seed);
        (void)train;
        std::vector<fs::path> ckpts;
        for (int t = 0;; ++t) {
            fs::path p = dir / "checkpoints" / ("task" + std::to_string(t) + ".ckpt");
            if (!fs::exists(p)) break;
            ckpts.push_back(p);
        }
        if (ckpts.size() < 2) throw TensorError("need at least two task checkpoints in " + run_dir);
        Model first = load_checkpoint(ckpts.front().string());
        Model last = load_checkpoint(ckpts.back().string());
        Tensor probe = probe_batch(test);
        if (what == "cka") {
            auto heat = cka_heatmap(first, last, probe);
            std::ofstream os(dir / "cka.csv");
            for (const auto& row : heat) {
                for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << row[j];
                os << "\n";
            }
            written.push_back((dir / "cka.csv").string());
        } else {
            std::ofstream os(dir / "shift.csv");
            os << "layer,channel_rank,shift\n";
            for (int l = 0; l < first.backbone.num_stages(); ++l) {
                auto s = channel_shift_histogram(first, last, probe, l);
                for (std::size_t c = 0; c < s.size(); ++c) os << l << "," << c << "," << s[c] << "\n";
            }
            written.push_back((dir / "shift.csv").string());
        }
    } else {
        throw TensorError("inspect: unknown analysis '" + what +
                          "' (expected mask, confidence, cka or shift)");
    }
    return written;
}

}  // namespace sril
