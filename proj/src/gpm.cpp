#include "sgpm/gpm.hpp"

#include "sgpm/error.hpp"
#include "sgpm/linalg.hpp"
#include "sgpm/tasks.hpp"

#include <cmath>

namespace sgpm {

namespace {

// Eigenvalues below this fraction of the leading one are noise, not
// directions worth memorizing. eps_th == 1 keeps everything above rounding
// level so the no-forgetting guarantee stays exact.
double residual_floor(double eps_th) { return eps_th >= 1.0 ? 1e-14 : 1e-12; }

} // namespace

GpmMemory GpmMemory::make(const MlpModel& model, double eps_th, std::size_t n_samples) {
    if (!(eps_th > 0.0) || eps_th > 1.0)
        throw Error("GpmMemory: eps_th must lie in (0,1], got " + std::to_string(eps_th));
    if (n_samples == 0) throw Error("GpmMemory: n_samples must be > 0");
    GpmMemory m;
    m.eps_th = eps_th;
    m.n_samples = n_samples;
    for (std::size_t l = 0; l < model.num_layers(); ++l)
        m.bases.emplace_back(model.layer_input_dim(l), 0);
    return m;
}

std::vector<DenseMatrix> collect_all_activations(const MlpModel& model,
                                                 const LabeledDataset& data,
                                                 std::size_t n_samples, Rng& rng) {
    const std::size_t total = data.inputs.cols();
    if (total == 0) throw Error("collect_activations: empty dataset");

    std::vector<std::size_t> picked = rng.sample_without_replacement(total, n_samples);
    DenseMatrix sampled(data.inputs.rows(), picked.size());
    for (std::size_t c = 0; c < picked.size(); ++c)
        for (std::size_t r = 0; r < sampled.rows(); ++r)
            sampled(r, c) = data.inputs(r, picked[c]);

    ForwardTrace trace = forward_batch(model, sampled, Mode::kEval, nullptr, false);
    return std::move(trace.layer_inputs);
}

DenseMatrix collect_activations(const MlpModel& model, const LabeledDataset& data,
                                std::size_t layer, std::size_t n_samples, Rng& rng) {
    if (layer >= model.num_layers())
        throw Error("collect_activations: layer index out of range");
    return collect_all_activations(model, data, n_samples, rng)[layer];
}

DenseMatrix init_basis(const DenseMatrix& x, double eps_th) {
    if (x.rows() == 0 || x.cols() == 0 || x.max_abs() == 0.0)
        throw Error("init_basis: zero activation matrix");
    EigenResult eig = second_moment_eig(x);
    std::size_t r = captured_dim(eig.eigenvalues, eps_th);
    r = std::min(r, eig.eigenvectors.cols());
    return eig.eigenvectors.left_cols(r);
}

DenseMatrix update_basis(const DenseMatrix& m_old, const DenseMatrix& x_new, double eps_th,
                         GpmThreshold mode) {
    if (m_old.cols() == 0) return init_basis(x_new, eps_th);
    if (x_new.rows() == 0 || x_new.cols() == 0 || x_new.max_abs() == 0.0)
        throw Error("update_basis: zero activation matrix");
    if (m_old.rows() != x_new.rows())
        throw Error("update_basis: basis rows " + std::to_string(m_old.rows()) +
                    " vs activation rows " + std::to_string(x_new.rows()));
    if (m_old.cols() >= m_old.rows()) return m_old;   // saturated

    const double total_energy = x_new.frobenius_norm() * x_new.frobenius_norm();

    DenseMatrix coef = matmul_at_b(m_old, x_new);
    double captured = 0.0;
    for (std::size_t i = 0; i < coef.size(); ++i) captured += coef.data()[i] * coef.data()[i];

    const double slack = (eps_th >= 1.0 ? 1e-14 : 1e-12) * total_energy;
    if (captured >= eps_th * total_energy - slack) return m_old;

    DenseMatrix residual = x_new;
    {
        DenseMatrix span = matmul(m_old, coef);
        for (std::size_t i = 0; i < residual.size(); ++i) residual.data()[i] -= span.data()[i];
    }
    if (residual.max_abs() == 0.0) return m_old;

    EigenResult eig = second_moment_eig(residual);
    if (eig.eigenvalues.empty() || eig.eigenvalues.front() <= 0.0) return m_old;
    const double floor = residual_floor(eps_th) * eig.eigenvalues.front();
    const double n = static_cast<double>(x_new.cols());

    // Joint mode: the old basis's share of the new activations counts toward
    // the threshold. Residual mode: threshold the residual spectrum alone.
    double reach = captured;
    double target = eps_th * total_energy - slack;
    if (mode == GpmThreshold::kResidual) {
        double residual_energy = 0.0;
        for (double l : eig.eigenvalues) residual_energy += n * l;
        reach = 0.0;
        target = eps_th * residual_energy - 1e-12 * residual_energy;
    }

    std::size_t take = 0;
    while (take < eig.eigenvectors.cols()) {
        if (eig.eigenvalues[take] <= floor) break;
        if (reach >= target) break;
        reach += n * eig.eigenvalues[take];
        ++take;
    }
    if (take == 0) return m_old;

    DenseMatrix grown = append_orthonormal(m_old, eig.eigenvectors.left_cols(take), 1e-10);
    if (grown.cols() > grown.rows())
        throw Error("update_basis: basis exceeded ambient dimension");
    return grown;
}

const std::vector<DenseMatrix>& projection_bases(const GpmMemory& memory) {
    return memory.bases;
}

std::vector<std::size_t> basis_dimensions(const GpmMemory& memory) {
    std::vector<std::size_t> dims;
    dims.reserve(memory.bases.size());
    for (const auto& b : memory.bases) dims.push_back(b.cols());
    return dims;
}

void absorb_task(GpmMemory& memory, const MlpModel& model, const LabeledDataset& data,
                 Rng& rng, GpmThreshold mode) {
    if (memory.bases.size() != model.num_layers())
        throw Error("absorb_task: memory/model layer count mismatch");
    std::vector<DenseMatrix> acts = collect_all_activations(model, data, memory.n_samples, rng);
    for (std::size_t l = 0; l < acts.size(); ++l)
        memory.bases[l] = update_basis(memory.bases[l], acts[l], memory.eps_th, mode);
}

} // namespace sgpm
