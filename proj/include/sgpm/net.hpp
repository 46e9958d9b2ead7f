#ifndef SGPM_NET_HPP
#define SGPM_NET_HPP

#include "sgpm/matrix.hpp"
#include "sgpm/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sgpm {

// Winner count sentinel: a hidden layer with k == kDense applies plain ReLU.
inline constexpr std::size_t kDense = 0;

struct SgdConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LayerState {
    // (d_out) x (d_in + 1); the last column multiplies a constant-1 input
    // coordinate and acts as the bias.
    DenseMatrix weights;
    std::size_t in_dim() const { return weights.cols() - 1; }
    std::size_t out_dim() const { return weights.rows(); }
};

// Single-head MLP. Hidden layers apply ReLU followed by top-k selection
// (k == kDense keeps every positive activation); the output layer is linear.
struct MlpModel {
    std::vector<LayerState> layers;
    std::vector<std::size_t> k_winner;   // one entry per hidden layer

    static MlpModel init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t output_dim, const std::vector<std::size_t>& k_winner,
                         Rng& rng);

    std::size_t num_layers() const { return layers.size(); }
    std::size_t num_hidden() const { return layers.empty() ? 0 : layers.size() - 1; }
    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    // Dimension of the input to layer l, bias coordinate included.
    std::size_t layer_input_dim(std::size_t l) const { return layers[l].weights.cols(); }
};

// Per-neuron activation counters and the retention probabilities derived
// from them. Counters accumulate over every task seen so far; probabilities
// are refreshed from the counters only at task boundaries.
struct DropoutState {
    std::vector<std::vector<std::uint64_t>> counters;   // per hidden layer
    std::vector<std::vector<double>> retention;         // per hidden layer, in (0,1]
    double alpha = 0.0;
    std::uint64_t rng_seed = 0;

    static DropoutState make(const std::vector<std::size_t>& hidden_widths, double alpha,
                             std::uint64_t rng_seed);
};

using RetainMasks = std::vector<std::vector<std::uint8_t>>;   // per hidden layer

// ReLU, then masked-off coordinates forced to zero, then the k largest
// strictly positive survivors kept. Ties at the k'th value resolve to the
// lowest index. k == kDense keeps all positive survivors.
struct KwinnerResult {
    std::vector<double> activation;
    std::vector<std::uint32_t> winners;
};
KwinnerResult kwinner_forward(const std::vector<double>& z, std::size_t k,
                              const std::vector<std::uint8_t>* retain_mask);

enum class Mode { kTrain, kEval };

// Everything a forward pass can report. layer_inputs[l] is the input to
// layer l with the constant-1 coordinate appended: exactly the vectors
// whose span the gradient projection memory protects.
struct ForwardTrace {
    DenseMatrix logits;                        // C x B
    std::vector<DenseMatrix> layer_inputs;     // (d_l + 1) x B each
    std::vector<DenseMatrix> winner_mask;      // per hidden layer, d x B of {0,1}
    std::vector<std::vector<std::vector<std::uint32_t>>> winners;   // [hidden][sample]
};

// Batched forward over column-per-sample inputs. Eval mode ignores masks.
// want_winners controls whether per-sample winner sets are materialized.
ForwardTrace forward_batch(const MlpModel& model, const DenseMatrix& x, Mode mode,
                           const RetainMasks* masks, bool want_winners);

// Single-sample forward.
struct ForwardResult {
    std::vector<double> logits;
    std::vector<std::vector<double>> layer_inputs;
    std::vector<std::vector<std::uint32_t>> winners;
};
ForwardResult forward(const MlpModel& model, const std::vector<double>& x, Mode mode,
                      const RetainMasks* masks);

struct LossAndGrads {
    double loss = 0.0;
    std::vector<DenseMatrix> grads;
};

// Mean softmax cross-entropy and weight gradients over a batch (columns of
// inputs). Training mode with optional dropout masks; gradients flow only
// through winner coordinates. When projection_bases is given, each layer's
// input activations are projected off the basis span before the gradient
// outer product is formed, which equals projecting the finished gradient.
// winners_out, when non-null, receives the per-sample winner sets of the
// training forward (for activation counter updates).
LossAndGrads loss_and_grads(const MlpModel& model, const DenseMatrix& inputs,
                            const std::vector<int>& labels, const RetainMasks* masks,
                            const std::vector<DenseMatrix>* projection_bases = nullptr,
                            std::vector<std::vector<std::vector<std::uint32_t>>>* winners_out =
                                nullptr);

// W <- W - lr * G, with G first projected off the basis span when a
// non-empty basis is supplied for the layer. Saturated layers (basis
// columns == weight columns) receive an exactly zero update.
void sgd_step(MlpModel& model, const std::vector<DenseMatrix>& grads, double lr,
              const std::vector<DenseMatrix>* projection_bases = nullptr);

// Adds one count per sample for every winning neuron.
void update_counters(DropoutState& state,
                     const std::vector<std::vector<std::vector<std::uint32_t>>>& winners);

// Recomputes retention probabilities from the accumulated counters:
// p_j = exp(-alpha * b_j / max_j b_j), all ones while counters are all zero.
void refresh_retention(DropoutState& state);

// Collapses each layer's retention vector to its mean (the matched-rate
// uniform baseline).
void flatten_retention_to_mean(DropoutState& state);

// One Bernoulli draw per neuron with the current retention probabilities.
RetainMasks sample_retain_mask(const DropoutState& state, Rng& rng);

} // namespace sgpm

#endif
