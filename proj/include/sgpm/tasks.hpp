#ifndef SGPM_TASKS_HPP
#define SGPM_TASKS_HPP

#include "sgpm/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sgpm {

enum class Split { kTrain, kVal, kTest };

struct LabeledDataset {
    DenseMatrix inputs;        // one column per sample
    std::vector<int> labels;
    Split split = Split::kTrain;

    std::size_t size() const { return labels.size(); }
};

struct TaskData {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

struct TaskStream {
    std::vector<TaskData> tasks;
    std::size_t class_count = 0;
    // Pixel permutation per task (permuted-image streams only).
    std::vector<std::vector<std::uint32_t>> permutations;

    std::size_t task_count() const { return tasks.size(); }
    std::size_t input_dim() const { return tasks.front().train.inputs.rows(); }
};

// Parameters of the two-spiral construction; defaults match the stream the
// experiments use. Radius grows linearly to 1 over theta in
// [theta_min, theta_max]; class 1 sits at theta + pi.
struct SwissRollParams {
    double theta_min = 1.5 * 3.14159265358979323846;
    double theta_max = 4.5 * 3.14159265358979323846;
    double noise_sigma = 0.015;
    std::size_t n_val_per_class = 0;    // 0: ceil(n_train/2)
    std::size_t n_test_per_class = 0;   // 0: ceil(n_train/2)
};

// T binary tasks carved from two interleaved spirals by equal angular arcs.
// Per task and class: n_per_class training points plus the val/test counts
// from params. Inputs lie in [-1,1]^2 before noise. Deterministic per seed.
TaskStream gen_swiss_roll(std::size_t T, std::size_t n_per_class, double noise_sigma,
                          std::uint64_t seed, const SwissRollParams& params = {});

// Same stream serialized as CSV: x1,x2,label,task,split.
std::string swiss_roll_csv(const TaskStream& stream);

// Decoded IDX payload. Pixel payloads (magic 0x00000803) are rescaled to
// [0,1]; label payloads (magic 0x00000801) keep their integer values.
struct IdxData {
    std::uint32_t magic = 0;
    std::vector<std::size_t> dims;
    std::vector<double> data;
};

IdxData parse_idx(const std::vector<std::uint8_t>& bytes);

// Reads an IDX file, transparently inflating gzip (magic 1f 8b).
IdxData load_idx_file(const std::string& path);

struct MnistData {
    DenseMatrix train_images;   // 784 x N, values in [0,1]
    std::vector<int> train_labels;
    DenseMatrix test_images;
    std::vector<int> test_labels;
};

struct MnistFileNames {
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    std::string test_images = "t10k-images-idx3-ubyte";
    std::string test_labels = "t10k-labels-idx1-ubyte";
};

// Loads the four standard files from dir, trying each name and name+".gz".
MnistData load_mnist(const std::string& dir, const MnistFileNames& names = {});

struct PermutedMnistParams {
    std::size_t val_size = 5000;        // last images of the training set
    std::size_t test_per_task = 2000;   // 0: full test set
};

// T tasks over pixel permutations of the same image corpus. Task 1 is the
// identity permutation; tasks 2..T draw independent permutations from the
// seed. Each task's training set is a stratified subsample of the
// pre-validation pool; val and test splits are fixed across tasks (up to
// the per-task permutation).
TaskStream permuted_mnist_stream(const MnistData& mnist, std::size_t T,
                                 std::size_t train_per_task, std::uint64_t seed,
                                 const PermutedMnistParams& params = {});

} // namespace sgpm

#endif
