#ifndef SGPM_CONFIG_HPP
#define SGPM_CONFIG_HPP

#include "sgpm/gpm.hpp"
#include "sgpm/tasks.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sgpm {

enum class Benchmark { kSwissRoll, kPermutedMnist };
enum class DropoutMode { kNone, kHeterogeneous, kRandom };

// Flat experiment configuration. Every default below can be overridden by
// the like-named key in the JSON config file; unknown keys are rejected.
struct ExperimentConfig {
    Benchmark benchmark = Benchmark::kPermutedMnist;
    std::size_t task_count = 10;                 // "T"
    std::vector<std::size_t> hidden = {512, 512};
    std::vector<std::size_t> k_winner;           // per hidden layer, kDense = dense
    DropoutMode dropout = DropoutMode::kNone;
    double alpha = 0.0;                          // resolved value ("auto" = 24/k)
    bool alpha_auto = false;
    double eps_th = 0.99;
    double learning_rate = 0.01;
    std::size_t epochs = 0;                      // 0: benchmark default (5 / 200)
    std::size_t batch_size = 0;                  // 0: benchmark default (64 / 32)
    std::size_t n_samples = 512;
    bool mask_per_sample = false;
    GpmThreshold gpm_threshold = GpmThreshold::kJoint;
    std::vector<std::uint64_t> seeds = {1};
    std::string data_dir = "data";
    std::string out_dir = "runs";

    // Swiss Roll stream knobs.
    std::size_t sr_n_per_class = 100;
    double sr_noise_sigma = 0.015;
    double sr_theta_min = 1.5 * 3.14159265358979323846;
    double sr_theta_max = 4.5 * 3.14159265358979323846;

    // Permuted-MNIST stream knobs.
    std::size_t pm_train_per_task = 2000;
    std::size_t pm_val_size = 5000;
    std::size_t pm_test_per_task = 2000;
    MnistFileNames mnist_files;

    std::size_t effective_epochs() const;
    std::size_t effective_batch_size() const;
    bool uses_kwinner() const;

    void validate() const;

    // Canonical JSON with every effective value spelled out; identical
    // configs serialize identically.
    std::string echo_json() const;
    // FNV-1a 64 over the echo, as 16 hex digits.
    std::string config_hash() const;

    // Short human-readable variant tag (benchmark, k, dropout, alpha,
    // eps_th); two runs differing only in seed share it.
    std::string variant_tag() const;
};

// Parses a JSON config file / string; values not present fall back to the
// defaults above. Unknown keys raise Error.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

} // namespace sgpm

#endif
