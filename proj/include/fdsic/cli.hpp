#pragma once

// Command-line front end: generate, tune, run, count, report.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdsic/harness.hpp"

namespace fdsic {

namespace detail {

struct CliOptions {
    std::string config_path;
    int seeds = 0;
    std::string betas;
    std::string methods;
    std::string out;
    int jobs = 0;
    bool quick = false;
    bool truth = false;
};

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Defaults, then --quick, then the config file, then explicit flags.
inline ExperimentConfig build_config(const CliOptions& o) {
    ExperimentConfig c = o.quick ? ExperimentConfig::quick() : ExperimentConfig{};
    if (!o.config_path.empty()) c = load_config(o.config_path, c);
    if (o.quick) {
        c.n_seeds = 10;
        c.n_tuning_seeds = 2;
    }
    if (o.seeds > 0) c.n_seeds = o.seeds;
    if (!o.betas.empty()) {
        c.betas.clear();
        for (const auto& b : split_list(o.betas)) c.betas.push_back(parse_real(b));
    }
    if (!o.methods.empty() && o.methods != "all") {
        c.methods.clear();
        for (const auto& m : split_list(o.methods)) c.methods.push_back(method_from_string(m));
    }
    if (o.jobs > 0) c.jobs = o.jobs;
    c.out_dir = o.out.empty() ? resolve_out_dir(c) : o.out;
    return c;
}

inline void add_common(CLI::App* sub, CliOptions& o) {
    sub->add_option("--config", o.config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--seeds", o.seeds, "total number of seeds (tuning + evaluation)")->check(CLI::PositiveNumber);
    sub->add_option("--betas", o.betas, "comma-separated AR(1) coefficients");
    sub->add_option("--methods", o.methods, "comma-separated methods or 'all'");
    sub->add_option("--out", o.out, "output directory (overrides FDSIC_OUT_DIR)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--quick", o.quick, "reduced preset: 10 seeds, 2 of them for tuning");
}

inline int cmd_generate(const ExperimentConfig& c, bool truth) {
    c.validate();
    const std::string dir = c.out_dir + "/datasets";
    ensure_dir(dir);
    struct Item {
        double beta;
        int seed;
    };
    std::vector<Item> items;
    for (double b : c.betas)
        for (int s = 0; s < c.n_seeds; ++s) items.push_back({b, s});
    DatasetOptions opt = c.data;
    opt.record_truth = truth;
    parallel_map<int>(items.size(), c.jobs, [&](std::size_t i) {
        const auto ds = generate_dataset(static_cast<std::uint64_t>(items[i].seed), items[i].beta, c.hw, c.ofdm, opt);
        char stem[64];
        std::snprintf(stem, sizeof stem, "/beta%.6g_seed%d", items[i].beta, items[i].seed);
        write_dataset_csv(ds, dir + stem);
        return 0;
    });
    std::cout << "wrote " << items.size() << " datasets to " << dir << "\n";
    return 0;
}

inline int cmd_tune(const ExperimentConfig& c) {
    c.validate();
    ensure_dir(c.out_dir);
    TunedStore store = TunedStore::load(tuned_path(c.out_dir));
    const std::size_t runs = tune(c, store, true);
    store.save(tuned_path(c.out_dir));
    const std::string hash = config_hash(c);
    std::cout << "method,beta,hyperparameter,mean_tuning_db\n";
    for (double b : c.betas)
        for (Method m : c.methods) {
            const auto e = store.find(m, b, hash);
            std::cout << to_string(m) << "," << fmt6(b) << "," << fmt6(e->value) << "," << fmt6(e->score) << "\n";
        }
    std::cout << runs << " tuning runs, config " << hash << "\n";
    return 0;
}

inline int cmd_run(const ExperimentConfig& c) {
    const auto out = run_sweep(c, c.out_dir);
    std::size_t diverged = 0;
    for (const auto& r : out.runs)
        if (r.diverged) {
            ++diverged;
            std::cerr << "diverged: " << to_string(r.method) << " beta=" << fmt6(r.beta) << " seed=" << r.seed << "\n";
        }
    std::cout << summary_csv(out.summary);
    std::cout << out.runs.size() << " evaluation runs (" << diverged << " diverged), " << out.tuning_runs
              << " tuning runs; results in " << c.out_dir << "\n";
    return 0;
}

inline int cmd_count(const ExperimentConfig& c) {
    c.hw.validate();
    const auto counts = measured_counts(c);
    std::cout << csv_header_op_counts() << "\n";
    for (Method m : c.methods) std::cout << csv_row(m, counts.at(m)) << "\n";
    return 0;
}

inline int cmd_report(const ExperimentConfig& c) {
    const auto rows = emit_summary(c.out_dir, read_text(c.out_dir + "/runs.csv"));
    std::cout << summary_csv(rows);
    return 0;
}

}  // namespace detail

inline int cli_main(int argc, char** argv) {
    CLI::App app{"Full-duplex self-interference cancellation benchmark"};
    app.require_subcommand(1);
    detail::CliOptions o;
    auto* gen = app.add_subcommand("generate", "write datasets only");
    auto* tun = app.add_subcommand("tune", "hyperparameter search on the tuning seeds");
    auto* run = app.add_subcommand("run", "tune if needed, evaluate, write all CSVs");
    auto* cnt = app.add_subcommand("count", "per-update operation counts");
    auto* rep = app.add_subcommand("report", "re-aggregate an existing runs.csv");
    for (auto* s : {gen, tun, run, cnt, rep}) detail::add_common(s, o);
    gen->add_flag("--truth", o.truth, "also write the parameter trajectories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        const ExperimentConfig c = detail::build_config(o);
        if (*gen) return detail::cmd_generate(c, o.truth);
        if (*tun) return detail::cmd_tune(c);
        if (*run) return detail::cmd_run(c);
        if (*cnt) return detail::cmd_count(c);
        return detail::cmd_report(c);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace fdsic
