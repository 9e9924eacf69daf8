#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sril/experiment.hpp"
#include "sril/verify.hpp"

int main(int argc, char** argv) {
    CLI::App app{"sril - selective-regularization class-incremental training"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run an experiment spec (every grid combo x seed)");
    std::string spec_path;
    run->add_option("spec", spec_path, "experiment spec JSON file")->required();
    sril::RunOptions opts;
    std::uint64_t seed_override = 0;
    auto* seed_opt = run->add_option("--seed", seed_override,
                                     "run only this seed, overriding the spec's seed list");
    run->add_flag("--overwrite", opts.overwrite, "replace existing run directories");
    run->add_flag("--resume", opts.resume, "continue partially completed runs");
    run->add_flag("--deterministic", opts.deterministic,
                  "force the sequential deterministic execution path");

    // report
    auto* rep = app.add_subcommand("report", "Tabulate metrics across run directories");
    std::vector<std::string> dirs;
    std::string format = "table";
    std::string reference;
    rep->add_option("dirs", dirs, "combo directories (containing aggregate.json)")->required();
    rep->add_option("--format", format, "table, csv or json")
        ->check(CLI::IsMember({"table", "csv", "json"}));
    rep->add_option("--reference", reference,
                    "reference combo directory for the intransigence column");

    // inspect
    auto* ins = app.add_subcommand("inspect", "Export plot-ready CSV series from a seed run");
    std::string run_dir;
    std::string what = "confidence";
    ins->add_option("dir", run_dir, "seed run directory")->required();
    ins->add_option("--what", what, "mask, confidence, cka or shift")
        ->check(CLI::IsMember({"mask", "confidence", "cka", "shift"}));

    // verify
    auto* ver = app.add_subcommand("verify", "Run the built-in numerical self-test");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            if (seed_opt->count()) opts.seed_override = seed_override;
            auto out = sril::run_experiment(spec_path, opts);
            for (const auto& d : out) std::cout << d << "\n";
        } else if (*rep) {
            std::cout << sril::report(dirs, format, reference);
        } else if (*ins) {
            for (const auto& f : sril::inspect(run_dir, what)) std::cout << f << "\n";
        } else if (*ver) {
            bool ok = true;
            for (const auto& c : sril::run_verification()) {
                std::cout << (c.passed ? "PASS" : "FAIL") << "  " << c.name;
                if (!c.passed) std::cout << "  (" << c.detail << ")";
                std::cout << "\n";
                ok = ok && c.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
