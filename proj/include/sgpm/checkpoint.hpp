#ifndef SGPM_CHECKPOINT_HPP
#define SGPM_CHECKPOINT_HPP

#include "sgpm/gpm.hpp"
#include "sgpm/metrics.hpp"
#include "sgpm/net.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sgpm {

// Full training state at a task boundary. Binary layout: magic "GPMC",
// u32 LE version, then the model / gpm / dropout / rng / progress sections,
// each prefixed with its u64 LE byte length. Counts are u64 LE, floats
// IEEE-754 binary64 LE.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    MlpModel model;
    GpmMemory memory;
    DropoutState dropout;
    std::array<std::uint64_t, 4> train_rng{};
    std::array<std::uint64_t, 4> mask_rng{};
    std::array<std::uint64_t, 4> gpm_rng{};

    std::uint64_t completed_tasks = 0;
    std::uint64_t seed = 0;
    AccuracyMatrix accuracy;
    // Per completed task: per hidden layer, validation winner counts.
    std::vector<std::vector<std::vector<double>>> nu_history;
    std::string config_echo;
};

// Writes to a temporary file in the target directory, then renames.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Validates magic, version and section lengths; malformed input raises
// Error naming the byte offset.
Checkpoint load_checkpoint(const std::string& path);

} // namespace sgpm

#endif
