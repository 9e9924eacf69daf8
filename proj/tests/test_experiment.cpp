#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sril/experiment.hpp"
#include "sril/model.hpp"

using namespace sril;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_spec() {
    return json{{"dataset", {{"kind", "blobs"}, {"classes", 4}, {"dim", 3}, {"train_per_class", 8},
                             {"test_per_class", 4}, {"spread", 0.2}}},
                {"scenario", {{"initial_task_size", 2}, {"increment", 2}, {"seeds", {1}},
                              {"memory_per_class", 2}}},
                {"method", {{"epochs", 1}, {"batch_size", 16}, {"K", 2}}}};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sril_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_be32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

TEST_CASE("spec parsing applies defaults and rejects unknown keys") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    CHECK(s.dataset.classes == 4);
    CHECK(s.method.lambda_gfd == 2.0);  // default
    CHECK(s.method.distill_mode == DistillMode::gfd);
    CHECK(s.scenario.memory_per_class == 2);
    CHECK(s.outputs.dir == "runs/experiment");

    json bad = minimal_spec();
    bad["surprise"] = 1;
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["method"]["learning_rate"] = 0.1;  // not a known method key
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["dataset"]["radius_step"] = 1.0;  // rings-only key under blobs
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["dataset"].erase("classes");
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad.erase("scenario");
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["method"]["distill_mode"] = "pod";
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["method"]["epochs"] = 0;
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
    bad = minimal_spec();
    bad["dataset"]["kind"] = "imagenet";
    CHECK_THROWS_AS(spec_from_json(bad), TensorError);
}

TEST_CASE("spec survives a json round-trip") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    json j = spec_to_json(s);
    ExperimentSpec back = spec_from_json(j);
    CHECK(spec_to_json(back) == j);
}

TEST_CASE("grid expansion takes the cross product with readable names") {
    json spec = minimal_spec();
    CHECK(expand_grid(spec).size() == 1);
    CHECK(expand_grid(spec)[0].first.empty());

    spec["grid"] = {{"method.distill_mode", {"none", "sfd", "gfd"}},
                    {"method.cwi_enabled", {false, true}}};
    auto combos = expand_grid(spec);
    REQUIRE(combos.size() == 6);
    bool found = false;
    for (const auto& [name, cfg] : combos) {
        CHECK(cfg.contains("method"));
        CHECK_FALSE(cfg.contains("grid"));
        // grid axes apply in key order, so cwi_enabled names come first
        if (name == "cwi_enabled=true_distill_mode=gfd") {
            found = true;
            CHECK(cfg["method"]["distill_mode"] == "gfd");
            CHECK(cfg["method"]["cwi_enabled"] == true);
        }
    }
    CHECK(found);

    // invalid grid values fail during expansion, not later mid-run
    json bad = minimal_spec();
    bad["grid"] = {{"method.epochs", {0}}};
    CHECK_THROWS_AS(expand_grid(bad), TensorError);
    bad["grid"] = {{"method.epochs", json::array()}};
    CHECK_THROWS_AS(expand_grid(bad), TensorError);
}

TEST_CASE("generated datasets are seed-deterministic with the right shapes") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    auto [tr1, te1] = build_datasets(s.dataset, 7);
    auto [tr2, te2] = build_datasets(s.dataset, 7);
    CHECK(tr1.features == tr2.features);
    CHECK(tr1.labels == tr2.labels);
    CHECK(tr1.size() == 32);
    CHECK(te1.size() == 16);
    CHECK(tr1.sample_shape == Shape{3});
    CHECK(tr1.num_classes == 4);
    auto [tr3, te3] = build_datasets(s.dataset, 8);
    (void)te3;
    CHECK(tr1.features != tr3.features);

    CHECK(backbone_for(tr1).arch == "mlp-s");
    Dataset img;
    img.sample_shape = {1, 16, 16};
    BackboneConfig bc = backbone_for(img);
    CHECK(bc.arch == "conv-s");
    CHECK(bc.height == 16);
}

TEST_CASE("idx loader reads big-endian files and scales pixels") {
    TempDir tmp("idx");
    const auto img_path = (tmp.path / "img.idx").string();
    const auto lab_path = (tmp.path / "lab.idx").string();
    {
        std::ofstream os(img_path, std::ios::binary);
        write_be32(os, 0x803);
        write_be32(os, 2);  // samples
        write_be32(os, 2);  // rows
        write_be32(os, 2);  // cols
        const unsigned char px[8] = {0, 51, 102, 153, 204, 255, 0, 255};
        os.write(reinterpret_cast<const char*>(px), 8);
    }
    {
        std::ofstream os(lab_path, std::ios::binary);
        write_be32(os, 0x801);
        write_be32(os, 2);
        const unsigned char labs[2] = {1, 0};
        os.write(reinterpret_cast<const char*>(labs), 2);
    }
    Dataset ds = load_idx(img_path, lab_path);
    CHECK(ds.sample_shape == Shape{1, 2, 2});
    CHECK(ds.size() == 2);
    CHECK(ds.labels == std::vector<int>{1, 0});
    CHECK(ds.num_classes == 2);
    CHECK(ds.features[0] == 0.0);
    CHECK(ds.features[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(ds.features[5] == 1.0);

    // label magic in the image slot is rejected
    CHECK_THROWS_AS(load_idx(lab_path, lab_path), TensorError);
    // mismatched counts are rejected
    {
        std::ofstream os(lab_path, std::ios::binary);
        write_be32(os, 0x801);
        write_be32(os, 3);
        const unsigned char labs[3] = {1, 0, 1};
        os.write(reinterpret_cast<const char*>(labs), 3);
    }
    CHECK_THROWS_AS(load_idx(img_path, lab_path), TensorError);
}

TEST_CASE("csv loader picks the label column by name") {
    TempDir tmp("csv");
    const auto path = (tmp.path / "d.csv").string();
    {
        std::ofstream os(path);
        os << "x1,label,x2\n";
        os << "0.5,1,-2\n";
        os << "1.5,0,4\n";
    }
    Dataset ds = load_csv(path, "label");
    CHECK(ds.sample_shape == Shape{2});
    CHECK(ds.labels == std::vector<int>{1, 0});
    CHECK(ds.features == std::vector<double>{0.5, -2.0, 1.5, 4.0});
    CHECK(ds.num_classes == 2);
    CHECK_THROWS_AS(load_csv(path, "y"), TensorError);
    {
        std::ofstream os(path, std::ios::app);
        os << "1.0,2\n";  // short row
    }
    CHECK_THROWS_AS(load_csv(path, "label"), TensorError);
}

TEST_CASE("relative output dirs resolve against SRIL_OUTPUT_ROOT") {
    unsetenv("SRIL_OUTPUT_ROOT");
    CHECK(resolve_output_dir("runs/x") == "runs/x");
    CHECK(resolve_output_dir("/abs/x") == "/abs/x");
    setenv("SRIL_OUTPUT_ROOT", "/data/out", 1);
    CHECK(resolve_output_dir("runs/x") == "/data/out/runs/x");
    CHECK(resolve_output_dir("/abs/x") == "/abs/x");
    unsetenv("SRIL_OUTPUT_ROOT");
}

TEST_CASE("config hash is stable and content-sensitive") {
    json a = minimal_spec(), b = minimal_spec();
    CHECK(config_hash(a) == config_hash(b));
    b["method"]["epochs"] = 2;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("two identical runs produce byte-identical artifacts") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    TempDir tmp("repeat");
    RunOptions opts;
    run_single(s, 3, (tmp.path / "a").string(), opts);
    run_single(s, 3, (tmp.path / "b").string(), opts);
    for (const char* f : {"metrics.json", "progress.json", "steps_task0.jsonl", "steps_task1.jsonl",
                          "exemplars_task1.json", "embeddings.csv"})
        CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
    CHECK(slurp(tmp.path / "a" / "checkpoints" / "task1.ckpt") ==
          slurp(tmp.path / "b" / "checkpoints" / "task1.ckpt"));
    // a different seed changes the metrics
    run_single(s, 4, (tmp.path / "c").string(), opts);
    CHECK(slurp(tmp.path / "a" / "metrics.json") != slurp(tmp.path / "c" / "metrics.json"));
}

TEST_CASE("existing runs are guarded against accidental reuse") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    TempDir tmp("guard");
    const std::string d = (tmp.path / "run").string();
    RunOptions opts;
    run_single(s, 1, d, opts);
    CHECK_THROWS_AS(run_single(s, 1, d, opts), TensorError);
    opts.overwrite = true;
    CHECK_NOTHROW(run_single(s, 1, d, opts));
}

TEST_CASE("an interrupted run resumes to the same result") {
    ExperimentSpec s = spec_from_json(minimal_spec());
    TempDir tmp("resume");
    RunOptions opts;
    run_single(s, 9, (tmp.path / "full").string(), opts);

    run_single(s, 9, (tmp.path / "part").string(), opts, /*stop_after_task=*/0);
    CHECK_FALSE(fs::exists(tmp.path / "part" / "metrics.json"));
    RunOptions resume;
    resume.resume = true;
    run_single(s, 9, (tmp.path / "part").string(), resume);
    CHECK(slurp(tmp.path / "full" / "metrics.json") == slurp(tmp.path / "part" / "metrics.json"));
    CHECK(slurp(tmp.path / "full" / "checkpoints" / "task1.ckpt") ==
          slurp(tmp.path / "part" / "checkpoints" / "task1.ckpt"));
}

TEST_CASE("run_experiment writes per-combo aggregates and report reads them") {
    TempDir tmp("exp");
    json spec = minimal_spec();
    spec["scenario"]["seeds"] = {1, 2};
    spec["outputs"] = {{"dir", (tmp.path / "out").string()}};
    spec["grid"] = {{"method.distill_mode", {"none", "gfd"}},
                    {"method.cwi_enabled", {false}}};
    const auto spec_path = (tmp.path / "spec.json").string();
    {
        std::ofstream os(spec_path);
        os << spec.dump(2);
    }
    RunOptions opts;
    auto dirs = run_experiment(spec_path, opts);
    REQUIRE(dirs.size() == 2);
    for (const auto& d : dirs) {
        CHECK(fs::exists(fs::path(d) / "aggregate.json"));
        CHECK(fs::exists(fs::path(d) / "seed_1" / "metrics.json"));
        CHECK(fs::exists(fs::path(d) / "seed_2" / "metrics.json"));
    }
    json agg = json::parse(slurp(fs::path(dirs[0]) / "aggregate.json"));
    CHECK(agg.at("average_accuracy").at("nme").contains("mean"));
    CHECK(agg.at("per_seed").size() == 2);

    // json report covers both rows; the none/cwi-off combo anchors the
    // intransigence column for the other row
    json rep = json::parse(report(dirs, "json"));
    REQUIRE(rep.size() == 2);
    for (const auto& row : rep) {
        CHECK(row.contains("average_accuracy_cnn"));
        if (row.at("distill_mode") == "gfd") CHECK(row.contains("intransigence_measure_cnn"));
    }
    const std::string csv = report(dirs, "csv");
    CHECK(csv.find("avg_acc_cnn") != std::string::npos);
    const std::string table = report(dirs, "table");
    CHECK(table.find('|') != std::string::npos);
    CHECK_THROWS_AS(report({(tmp.path / "nope").string()}, "table"), TensorError);

    // inspect emits plot series from a seed directory
    const std::string seed_dir = (fs::path(dirs[1]) / "seed_1").string();
    for (const char* what : {"confidence", "mask", "cka", "shift"}) {
        auto files = inspect(seed_dir, what);
        REQUIRE(files.size() == 1);
        CHECK(fs::exists(files[0]));
        CHECK(!slurp(files[0]).empty());
    }
    CHECK_THROWS_AS(inspect(seed_dir, "gradients"), TensorError);
    // mode 'none' has no mask series to plot
    CHECK_THROWS_AS(inspect((fs::path(dirs[0]) / "seed_1").string(), "mask"), TensorError);
}
