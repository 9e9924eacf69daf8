#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sril/data.hpp"
#include "sril/metrics.hpp"
#include "sril/protocol.hpp"
#include "sril/trainer.hpp"

namespace sril {

struct DatasetSpec {
    std::string kind = "blobs";  // blobs | rings | idx | csv
    // generators
    int classes = 16;
    int dim = 8;
    int train_per_class = 200;
    int test_per_class = 50;
    double spread = 0.3;
    double radius_step = 1.0;
    // files
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::string train_path, test_path, label_column;                   // csv
};

struct ScenarioSpec {
    int initial_task_size = 0;
    int increment = 0;
    std::vector<std::uint64_t> seeds{0};
    int memory_per_class = 20;
};

struct OutputSpec {
    std::string dir;
    std::vector<std::string> formats{"json"};
};

struct ExperimentSpec {
    DatasetSpec dataset;
    ScenarioSpec scenario;
    SRILConfig method;
    OutputSpec outputs;
};

// Strict parse: unknown keys anywhere are an error; dataset and scenario
// sizes are required, everything else has defaults.
ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ExperimentSpec& s);
nlohmann::json load_spec_file(const std::string& path);

// Cross product of the optional top-level "grid" block (dotted keys ->
// value lists). Without a grid, returns one unnamed combo.
std::vector<std::pair<std::string, nlohmann::json>> expand_grid(const nlohmann::json& spec);

struct RunOptions {
    bool overwrite = false;
    bool resume = false;
    bool deterministic = false;
    std::optional<std::uint64_t> seed_override;
};

// Build the train/test pair for a resolved spec under a run seed (generator
// datasets are themselves seeded from it).
std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& ds, std::uint64_t seed);
BackboneConfig backbone_for(const Dataset& train);

struct RunResult {
    AccuracyMatrix cnn;
    AccuracyMatrix nme;
    nlohmann::json metrics;
};

// One seeded run: scenario construction, per-task training, exemplar
// updates, dual-head evaluation, metrics.json. stop_after_task < num_tasks
// leaves a resumable partial run (used by crash-consistency tests).
RunResult run_single(const ExperimentSpec& spec, std::uint64_t seed, const std::string& run_dir,
                     const RunOptions& opts, int stop_after_task = -1);

// Full experiment: every grid combo x every seed, plus per-combo aggregate
// files. Returns the list of combo directories.
std::vector<std::string> run_experiment(const std::string& spec_path, const RunOptions& opts);

// Comparison across run/combo directories; format is table, csv or json.
std::string report(const std::vector<std::string>& dirs, const std::string& format,
                   const std::string& reference_dir = "");

// Writes plot-ready CSV series for one seed directory.
// what is one of: mask, confidence, cka, shift.
std::vector<std::string> inspect(const std::string& run_dir, const std::string& what);

// Resolve the output dir against SRIL_OUTPUT_ROOT when relative.
std::string resolve_output_dir(const std::string& dir);

std::string config_hash(const nlohmann::json& j);

}  // namespace sril
