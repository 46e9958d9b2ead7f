#ifndef SGPM_RUNNER_HPP
#define SGPM_RUNNER_HPP

#include "sgpm/checkpoint.hpp"
#include "sgpm/config.hpp"
#include "sgpm/metrics.hpp"

#include <string>
#include <vector>

namespace sgpm {

struct RunResult {
    std::string run_dir;
    AccuracyMatrix accuracy;
    Summary summary;
    std::vector<std::vector<std::vector<double>>> nu_history;   // [task][layer][unit]
    std::vector<std::size_t> final_basis_dims;
};

// Runs the continual-learning loop for one seed: per task, train with
// memory-projected gradients, then evaluate all seen tasks, fold the task's
// activations into the memory and refresh the dropout probabilities.
// Artifacts land in <out_dir>/<variant>_s<seed>/ and are written atomically
// as each task completes. resume_ckpt continues a run from its last saved
// boundary.
RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const std::string& resume_ckpt = "");

// Aggregates metrics.csv across run directories into one comparison table:
// variant, runs, avg_accuracy mean/std, BT mean/std. Sample std; a single
// run reports 0.
std::string compare_runs(const std::vector<std::string>& run_dirs);

enum class AnalyzeMode { kVariance, kJsd, kDims };

// Post-hoc analysis of a checkpoint. variance: captured-variance curves of
// the last task's activations per layer; jsd: divergence between the
// validation activation pmfs of consecutive tasks; dims: current basis
// column counts. Returns CSV text.
std::string analyze(const std::string& ckpt_path, AnalyzeMode mode,
                    std::size_t max_components = 50);

// Task stream described by a config, for the given seed.
TaskStream build_stream(const ExperimentConfig& config, std::uint64_t seed);

void write_file_atomic(const std::string& path, const std::string& content);

} // namespace sgpm

#endif
