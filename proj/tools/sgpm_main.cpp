#include "sgpm/error.hpp"
#include "sgpm/runner.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

namespace {

int run_cmd(const std::string& config_path, long long seed_override,
            const std::string& resume) {
    sgpm::ExperimentConfig config = sgpm::parse_config_file(config_path);
    std::vector<std::uint64_t> seeds = config.seeds;
    if (seed_override >= 0) seeds = {static_cast<std::uint64_t>(seed_override)};
    for (std::uint64_t seed : seeds) {
        const auto start = std::chrono::steady_clock::now();
        sgpm::RunResult result = sgpm::run_experiment(config, seed, resume);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s: avg_accuracy=%.4f", result.run_dir.c_str(),
                    result.summary.avg_accuracy);
        if (result.summary.backward_transfer)
            std::printf(" bwt=%.4f", *result.summary.backward_transfer);
        std::printf(" (%.1fs)\n", secs);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-learning benchmark harness: gradient projection memory "
                 "with k-winner activations and heterogeneous dropout"};
    app.require_subcommand(1);

    std::string config_path, resume, ckpt_path, mode, out_path;
    long long seed_override = -1;

    auto* run = app.add_subcommand("run", "Run the continual-learning experiment in a config");
    run->add_option("--config", config_path, "JSON config file")->required();
    run->add_option("--seed", seed_override, "Override the config's seed list with one seed");
    run->add_option("--resume", resume, "Checkpoint to resume from");

    auto* compare = app.add_subcommand("compare", "Aggregate metrics across run directories");
    std::vector<std::string> run_dirs;
    compare->add_option("dirs", run_dirs, "Run directories (each with metrics.csv)")
        ->required()
        ->expected(-1);

    auto* analyze = app.add_subcommand("analyze", "Inspect a checkpoint");
    analyze->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
    analyze->add_option("--mode", mode, "variance | jsd | dims")->required();
    analyze->add_option("--out", out_path, "Write CSV here instead of stdout");

    auto* gen = app.add_subcommand("gen-swissroll", "Emit a Swiss Roll task stream as CSV");
    std::size_t gen_t = 50, gen_n = 100;
    double gen_noise = 0.015;
    std::uint64_t gen_seed = 1;
    gen->add_option("--t", gen_t, "Number of tasks")->required();
    gen->add_option("--out", out_path, "Output CSV path")->required();
    gen->add_option("--n", gen_n, "Training points per class per task");
    gen->add_option("--noise", gen_noise, "Coordinate noise sigma");
    gen->add_option("--seed", gen_seed, "Stream seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_cmd(config_path, seed_override, resume);
        if (compare->parsed()) {
            std::cout << sgpm::compare_runs(run_dirs);
            return 0;
        }
        if (analyze->parsed()) {
            sgpm::AnalyzeMode m;
            if (mode == "variance")
                m = sgpm::AnalyzeMode::kVariance;
            else if (mode == "jsd")
                m = sgpm::AnalyzeMode::kJsd;
            else if (mode == "dims")
                m = sgpm::AnalyzeMode::kDims;
            else
                throw sgpm::Error("analyze: unknown mode \"" + mode + "\"");
            const std::string csv = sgpm::analyze(ckpt_path, m);
            if (out_path.empty())
                std::cout << csv;
            else
                sgpm::write_file_atomic(out_path, csv);
            return 0;
        }
        if (gen->parsed()) {
            sgpm::TaskStream stream = sgpm::gen_swiss_roll(gen_t, gen_n, gen_noise, gen_seed);
            sgpm::write_file_atomic(out_path, sgpm::swiss_roll_csv(stream));
            std::printf("%s: %zu tasks written\n", out_path.c_str(), stream.task_count());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
