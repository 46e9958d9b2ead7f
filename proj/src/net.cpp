#include "sgpm/net.hpp"

#include "sgpm/error.hpp"
#include "sgpm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgpm {

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("SgdConfig: learning_rate must be > 0");
    if (epochs == 0) throw Error("SgdConfig: epochs must be > 0");
    if (batch_size == 0) throw Error("SgdConfig: batch_size must be > 0");
}

MlpModel MlpModel::init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                        std::size_t output_dim, const std::vector<std::size_t>& k_winner,
                        Rng& rng) {
    if (k_winner.size() != hidden.size())
        throw Error("MlpModel::init: need one winner count per hidden layer");
    for (std::size_t i = 0; i < hidden.size(); ++i)
        if (k_winner[i] != kDense && k_winner[i] > hidden[i])
            throw Error("MlpModel::init: k exceeds hidden width at layer " + std::to_string(i));

    MlpModel m;
    m.k_winner = k_winner;
    std::size_t fan_in = input_dim;
    auto add_layer = [&](std::size_t fan_out) {
        LayerState layer;
        layer.weights = DenseMatrix(fan_out, fan_in + 1);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < layer.weights.size(); ++i)
            layer.weights.data()[i] = rng.uniform(-bound, bound);
        // Bias column starts at zero.
        for (std::size_t r = 0; r < fan_out; ++r) layer.weights(r, fan_in) = 0.0;
        m.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (std::size_t h : hidden) add_layer(h);
    add_layer(output_dim);
    return m;
}

DropoutState DropoutState::make(const std::vector<std::size_t>& hidden_widths, double alpha,
                                std::uint64_t rng_seed) {
    if (alpha < 0.0) throw Error("DropoutState: alpha must be >= 0");
    DropoutState s;
    s.alpha = alpha;
    s.rng_seed = rng_seed;
    for (std::size_t w : hidden_widths) {
        s.counters.emplace_back(w, 0);
        s.retention.emplace_back(w, 1.0);
    }
    return s;
}

KwinnerResult kwinner_forward(const std::vector<double>& z, std::size_t k,
                              const std::vector<std::uint8_t>* retain_mask) {
    if (k != kDense && k > z.size())
        throw Error("kwinner_forward: k=" + std::to_string(k) + " exceeds layer width " +
                    std::to_string(z.size()));
    if (retain_mask && retain_mask->size() != z.size())
        throw Error("kwinner_forward: mask length mismatch");

    KwinnerResult res;
    res.activation.assign(z.size(), 0.0);

    std::vector<std::uint32_t> positives;
    positives.reserve(z.size());
    for (std::uint32_t j = 0; j < z.size(); ++j) {
        if (retain_mask && !(*retain_mask)[j]) continue;
        if (z[j] > 0.0) positives.push_back(j);
    }

    if (k == kDense || positives.size() <= k) {
        for (std::uint32_t j : positives) res.activation[j] = z[j];
        res.winners = std::move(positives);
        return res;
    }

    // Top-k among surviving positives; ties resolved toward the lower index
    // (stable order on equal values, since candidates are index-sorted).
    std::nth_element(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     positives.end(), [&](std::uint32_t a, std::uint32_t b) {
                         if (z[a] != z[b]) return z[a] > z[b];
                         return a < b;
                     });
    positives.resize(k);
    std::sort(positives.begin(), positives.end());
    for (std::uint32_t j : positives) res.activation[j] = z[j];
    res.winners = std::move(positives);
    return res;
}

namespace {

// Appends the constant-1 row to a (d x B) activation block.
DenseMatrix with_bias_row(const DenseMatrix& x) {
    DenseMatrix out(x.rows() + 1, x.cols());
    std::copy(x.data(), x.data() + x.size(), out.data());
    double* last = out.row(x.rows());
    std::fill(last, last + x.cols(), 1.0);
    return out;
}

} // namespace

ForwardTrace forward_batch(const MlpModel& model, const DenseMatrix& x, Mode mode,
                           const RetainMasks* masks, bool want_winners) {
    if (model.layers.empty()) throw Error("forward_batch: model has no layers");
    if (x.rows() != model.input_dim())
        throw Error("forward_batch: input dimension " + std::to_string(x.rows()) +
                    " does not match model input " + std::to_string(model.input_dim()));
    if (mode == Mode::kEval) masks = nullptr;
    if (masks && masks->size() != model.num_hidden())
        throw Error("forward_batch: need one mask per hidden layer");

    const std::size_t B = x.cols();
    const std::size_t H = model.num_hidden();

    ForwardTrace trace;
    trace.layer_inputs.reserve(model.num_layers());
    if (want_winners) trace.winners.resize(H);
    trace.winner_mask.reserve(H);

    DenseMatrix cur = with_bias_row(x);
    std::vector<double> zcol;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        trace.layer_inputs.push_back(cur);
        DenseMatrix z = matmul(model.layers[l].weights, cur);
        if (l + 1 == model.num_layers()) {
            trace.logits = std::move(z);
            break;
        }
        const std::size_t d = z.rows();
        const std::size_t k = model.k_winner[l];
        const std::vector<std::uint8_t>* mask = masks ? &(*masks)[l] : nullptr;
        DenseMatrix wmask(d, B);
        if (want_winners) trace.winners[l].resize(B);
        zcol.resize(d);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t r = 0; r < d; ++r) zcol[r] = z(r, b);
            KwinnerResult kr = kwinner_forward(zcol, k, mask);
            for (std::size_t r = 0; r < d; ++r) z(r, b) = kr.activation[r];
            for (std::uint32_t w : kr.winners) wmask(w, b) = 1.0;
            if (want_winners) trace.winners[l][b] = std::move(kr.winners);
        }
        trace.winner_mask.push_back(std::move(wmask));
        cur = with_bias_row(z);
    }
    if (!trace.logits.all_finite())
        throw Error("forward_batch: non-finite logits");
    return trace;
}

ForwardResult forward(const MlpModel& model, const std::vector<double>& x, Mode mode,
                      const RetainMasks* masks) {
    DenseMatrix xin(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) xin(i, 0) = x[i];
    ForwardTrace t = forward_batch(model, xin, mode, masks, true);
    ForwardResult r;
    r.logits = t.logits.col(0);
    for (const auto& li : t.layer_inputs) r.layer_inputs.push_back(li.col(0));
    for (auto& w : t.winners) r.winners.push_back(std::move(w[0]));
    return r;
}

namespace {

// softmax(logits) - onehot(labels), scaled by 1/B; loss accumulated too.
DenseMatrix softmax_delta(const DenseMatrix& logits, const std::vector<int>& labels,
                          double& loss_out) {
    const std::size_t C = logits.rows();
    const std::size_t B = logits.cols();
    DenseMatrix delta(C, B);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        double mx = logits(0, b);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits(c, b));
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(logits(c, b) - mx);
        const double log_sum = std::log(sum) + mx;
        const int y = labels[b];
        loss += log_sum - logits(static_cast<std::size_t>(y), b);
        for (std::size_t c = 0; c < C; ++c) {
            double p = std::exp(logits(c, b) - log_sum);
            delta(c, b) = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_b;
        }
    }
    loss_out = loss * inv_b;
    return delta;
}

// Input activations with their basis-span component removed; equivalent to
// projecting the finished gradient because grad = delta * inputs^T.
DenseMatrix project_inputs(const DenseMatrix& inputs, const DenseMatrix& basis) {
    if (basis.cols() == 0) return inputs;
    if (basis.rows() != inputs.rows())
        throw Error("projection basis rows " + std::to_string(basis.rows()) +
                    " do not match activation dimension " + std::to_string(inputs.rows()));
    if (basis.cols() >= basis.rows())
        return DenseMatrix(inputs.rows(), inputs.cols());   // saturated layer
    DenseMatrix coef = matmul_at_b(basis, inputs);
    DenseMatrix span = matmul(basis, coef);
    DenseMatrix out = inputs;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= span.data()[i];
    return out;
}

} // namespace

LossAndGrads loss_and_grads(const MlpModel& model, const DenseMatrix& inputs,
                            const std::vector<int>& labels, const RetainMasks* masks,
                            const std::vector<DenseMatrix>* projection_bases,
                            std::vector<std::vector<std::vector<std::uint32_t>>>* winners_out) {
    if (inputs.cols() == 0) throw Error("loss_and_grads: empty batch");
    if (inputs.cols() != labels.size())
        throw Error("loss_and_grads: " + std::to_string(inputs.cols()) + " samples vs " +
                    std::to_string(labels.size()) + " labels");
    const std::size_t C = model.output_dim();
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw Error("loss_and_grads: label " + std::to_string(y) + " outside [0," +
                        std::to_string(C) + ")");
    if (projection_bases && projection_bases->size() != model.num_layers())
        throw Error("loss_and_grads: need one projection basis per layer");

    ForwardTrace trace = forward_batch(model, inputs, Mode::kTrain, masks, winners_out != nullptr);
    if (winners_out) *winners_out = std::move(trace.winners);

    LossAndGrads out;
    out.grads.resize(model.num_layers());
    DenseMatrix delta = softmax_delta(trace.logits, labels, out.loss);

    for (std::size_t l = model.num_layers(); l-- > 0;) {
        const DenseMatrix* lin = &trace.layer_inputs[l];
        DenseMatrix projected;
        if (projection_bases && (*projection_bases)[l].cols() > 0) {
            projected = project_inputs(*lin, (*projection_bases)[l]);
            lin = &projected;
        }
        out.grads[l] = matmul_a_bt(delta, *lin);
        if (l == 0) break;
        // Back through the layer: drop the bias row, gate by winners.
        DenseMatrix back = matmul_at_b(model.layers[l].weights, delta);
        const DenseMatrix& wm = trace.winner_mask[l - 1];
        DenseMatrix next(wm.rows(), wm.cols());
        for (std::size_t i = 0; i < next.size(); ++i)
            next.data()[i] = back.data()[i] * wm.data()[i];
        delta = std::move(next);
    }
    return out;
}

void sgd_step(MlpModel& model, const std::vector<DenseMatrix>& grads, double lr,
              const std::vector<DenseMatrix>* projection_bases) {
    if (grads.size() != model.num_layers())
        throw Error("sgd_step: expected " + std::to_string(model.num_layers()) + " gradients, got " +
                    std::to_string(grads.size()));
    if (projection_bases && projection_bases->size() != model.num_layers())
        throw Error("sgd_step: need one basis entry per layer");

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        DenseMatrix& w = model.layers[l].weights;
        if (grads[l].rows() != w.rows() || grads[l].cols() != w.cols())
            throw Error("sgd_step: gradient shape " + shape_str(grads[l]) +
                        " does not match weights " + shape_str(w) + " at layer " +
                        std::to_string(l));
        const DenseMatrix* g = &grads[l];
        DenseMatrix projected;
        if (projection_bases && (*projection_bases)[l].cols() > 0) {
            const DenseMatrix& basis = (*projection_bases)[l];
            if (basis.cols() >= w.cols()) continue;   // saturated: update is zero
            projected = project_complement(*g, basis);
            g = &projected;
        }
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * g->data()[i];
    }
}

void update_counters(DropoutState& state,
                     const std::vector<std::vector<std::vector<std::uint32_t>>>& winners) {
    if (winners.size() != state.counters.size())
        throw Error("update_counters: layer count mismatch");
    for (std::size_t l = 0; l < winners.size(); ++l) {
        auto& b = state.counters[l];
        for (const auto& sample : winners[l])
            for (std::uint32_t j : sample) {
                if (j >= b.size()) throw Error("update_counters: winner index out of range");
                ++b[j];
            }
    }
}

void refresh_retention(DropoutState& state) {
    for (std::size_t l = 0; l < state.counters.size(); ++l) {
        const auto& b = state.counters[l];
        auto& p = state.retention[l];
        std::uint64_t bmax = 0;
        for (std::uint64_t c : b) bmax = std::max(bmax, c);
        if (bmax == 0 || state.alpha == 0.0) {
            std::fill(p.begin(), p.end(), 1.0);
            continue;
        }
        const double inv = 1.0 / static_cast<double>(bmax);
        for (std::size_t j = 0; j < b.size(); ++j)
            p[j] = std::exp(-state.alpha * static_cast<double>(b[j]) * inv);
    }
}

void flatten_retention_to_mean(DropoutState& state) {
    for (auto& p : state.retention) {
        if (p.empty()) continue;
        const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
        std::fill(p.begin(), p.end(), mean);
    }
}

RetainMasks sample_retain_mask(const DropoutState& state, Rng& rng) {
    RetainMasks masks;
    masks.reserve(state.retention.size());
    for (const auto& p : state.retention) {
        std::vector<std::uint8_t> m(p.size());
        for (std::size_t j = 0; j < p.size(); ++j) m[j] = rng.bernoulli(p[j]) ? 1 : 0;
        masks.push_back(std::move(m));
    }
    return masks;
}

} // namespace sgpm
