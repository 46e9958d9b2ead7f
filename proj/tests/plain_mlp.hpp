#ifndef SGPM_TESTS_PLAIN_MLP_HPP
#define SGPM_TESTS_PLAIN_MLP_HPP

// Reference ReLU MLP with softmax cross-entropy and SGD, written with plain
// per-sample loops. Used as the trajectory oracle for the dense-sentinel
// equivalence tests; shares no computational path with the library.

#include "sgpm/matrix.hpp"

#include <cmath>
#include <vector>

namespace oracle {

struct PlainMlp {
    // Same shape convention as the library: (d_out) x (d_in + 1), bias last.
    std::vector<sgpm::DenseMatrix> w;

    static PlainMlp from_weights(const std::vector<sgpm::DenseMatrix>& weights) {
        return PlainMlp{weights};
    }

    std::vector<double> logits(const std::vector<double>& x) const {
        std::vector<double> cur = x;
        for (std::size_t l = 0; l < w.size(); ++l) {
            cur.push_back(1.0);
            std::vector<double> next(w[l].rows(), 0.0);
            for (std::size_t i = 0; i < w[l].rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < w[l].cols(); ++j) s += w[l](i, j) * cur[j];
                next[i] = (l + 1 < w.size() && s < 0.0) ? 0.0 : s;   // ReLU on hidden
            }
            cur = std::move(next);
        }
        return cur;
    }

    // One SGD step on the batch; returns the mean cross-entropy before the step.
    double train_step(const sgpm::DenseMatrix& inputs, const std::vector<int>& labels,
                      double lr) {
        const std::size_t B = labels.size();
        std::vector<sgpm::DenseMatrix> grads;
        for (const auto& wi : w) grads.emplace_back(wi.rows(), wi.cols());
        double loss = 0.0;

        for (std::size_t s = 0; s < B; ++s) {
            // Forward, keeping every layer's biased input and pre-activation.
            std::vector<std::vector<double>> ins;
            std::vector<double> cur(inputs.rows());
            for (std::size_t r = 0; r < inputs.rows(); ++r) cur[r] = inputs(r, s);
            std::vector<std::vector<double>> zs;
            for (std::size_t l = 0; l < w.size(); ++l) {
                cur.push_back(1.0);
                ins.push_back(cur);
                std::vector<double> z(w[l].rows(), 0.0);
                for (std::size_t i = 0; i < w[l].rows(); ++i)
                    for (std::size_t j = 0; j < w[l].cols(); ++j) z[i] += w[l](i, j) * cur[j];
                zs.push_back(z);
                cur.resize(z.size());
                for (std::size_t i = 0; i < z.size(); ++i)
                    cur[i] = (l + 1 < w.size() && z[i] < 0.0) ? 0.0 : z[i];
            }

            // Softmax cross-entropy.
            double mx = cur[0];
            for (double v : cur) mx = std::max(mx, v);
            double sum = 0.0;
            for (double v : cur) sum += std::exp(v - mx);
            const double logsum = std::log(sum) + mx;
            loss += logsum - cur[labels[s]];

            std::vector<double> delta(cur.size());
            for (std::size_t c = 0; c < cur.size(); ++c)
                delta[c] = std::exp(cur[c] - logsum) - (static_cast<int>(c) == labels[s]);

            for (std::size_t l = w.size(); l-- > 0;) {
                for (std::size_t i = 0; i < w[l].rows(); ++i)
                    for (std::size_t j = 0; j < w[l].cols(); ++j)
                        grads[l](i, j) += delta[i] * ins[l][j];
                if (l == 0) break;
                std::vector<double> prev(w[l].cols() - 1, 0.0);
                for (std::size_t j = 0; j + 1 < w[l].cols(); ++j) {
                    double s2 = 0.0;
                    for (std::size_t i = 0; i < w[l].rows(); ++i) s2 += w[l](i, j) * delta[i];
                    prev[j] = zs[l - 1][j] > 0.0 ? s2 : 0.0;
                }
                delta = std::move(prev);
            }
        }

        const double inv_b = 1.0 / static_cast<double>(B);
        for (std::size_t l = 0; l < w.size(); ++l)
            for (std::size_t i = 0; i < w[l].size(); ++i)
                w[l].data()[i] -= lr * grads[l].data()[i] * inv_b;
        return loss * inv_b;
    }
};

} // namespace oracle

#endif
