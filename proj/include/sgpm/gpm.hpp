#ifndef SGPM_GPM_HPP
#define SGPM_GPM_HPP

#include "sgpm/matrix.hpp"
#include "sgpm/net.hpp"
#include "sgpm/rng.hpp"

#include <cstddef>
#include <vector>

namespace sgpm {

struct LabeledDataset;

// Per-layer orthonormal bases approximating the span of every completed
// task's layer-input activations. Gradients for later tasks are confined to
// the orthogonal complement of these spans.
struct GpmMemory {
    std::vector<DenseMatrix> bases;   // layer l: (d_l + 1) x m_l, m_l may be 0
    double eps_th = 0.99;
    std::size_t n_samples = 512;

    static GpmMemory make(const MlpModel& model, double eps_th, std::size_t n_samples);
};

// Captured-energy bookkeeping for a basis update: joint counts the old-basis
// share of the new activations toward the threshold (the default); residual
// thresholds the residual spectrum on its own.
enum class GpmThreshold { kJoint, kResidual };

// Layer-l input activations (bias coordinate included) of n_samples training
// points drawn without replacement, eval-mode forward. All points are used
// when the dataset is smaller than n_samples.
DenseMatrix collect_activations(const MlpModel& model, const LabeledDataset& data,
                                std::size_t layer, std::size_t n_samples, Rng& rng);

// Same sampling decision for every layer in one forward pass, so each
// layer's stored span corresponds to the same input points.
std::vector<DenseMatrix> collect_all_activations(const MlpModel& model,
                                                 const LabeledDataset& data,
                                                 std::size_t n_samples, Rng& rng);

// Leading eigenvectors of X X^T / N covering an eps_th fraction of the
// spectrum's energy.
DenseMatrix init_basis(const DenseMatrix& x, double eps_th);

// Grows the basis with leading eigendirections of the residual
// (I - M M^T) X until the captured share of ||X||_F^2 reaches eps_th or the
// residual spectrum is exhausted. Existing columns are never removed.
DenseMatrix update_basis(const DenseMatrix& m_old, const DenseMatrix& x_new, double eps_th,
                         GpmThreshold mode = GpmThreshold::kJoint);

// Current per-layer bases, in the form sgd_step and loss_and_grads expect.
const std::vector<DenseMatrix>& projection_bases(const GpmMemory& memory);

std::vector<std::size_t> basis_dimensions(const GpmMemory& memory);

// Task-boundary update: collect activations for every layer and fold them
// into the per-layer bases.
void absorb_task(GpmMemory& memory, const MlpModel& model, const LabeledDataset& data,
                 Rng& rng, GpmThreshold mode = GpmThreshold::kJoint);

} // namespace sgpm

#endif
