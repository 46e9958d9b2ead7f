#include "sgpm/metrics.hpp"

#include "sgpm/error.hpp"
#include "sgpm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sgpm {

std::size_t AccuracyMatrix::completed() const {
    std::size_t n = 0;
    while (n < rows_.size() && rows_[n].size() == n + 1) ++n;
    return n;
}

void AccuracyMatrix::set_row(std::size_t t2, std::vector<double> accuracies) {
    if (t2 >= rows_.size()) throw Error("AccuracyMatrix: row out of range");
    if (accuracies.size() != t2 + 1)
        throw Error("AccuracyMatrix: row " + std::to_string(t2 + 1) + " needs " +
                    std::to_string(t2 + 1) + " entries");
    for (double a : accuracies)
        if (a < 0.0 || a > 1.0) throw Error("AccuracyMatrix: accuracy outside [0,1]");
    rows_[t2] = std::move(accuracies);
}

double AccuracyMatrix::at(std::size_t t1, std::size_t t2) const {
    if (t2 >= rows_.size() || t1 > t2 || rows_[t2].size() != t2 + 1)
        throw Error("AccuracyMatrix: entry (" + std::to_string(t1 + 1) + "," +
                    std::to_string(t2 + 1) + ") undefined");
    return rows_[t2][t1];
}

std::string AccuracyMatrix::to_csv() const {
    std::ostringstream out;
    const std::size_t T = rows_.size();
    char buf[32];
    for (std::size_t t2 = 0; t2 < T; ++t2) {
        for (std::size_t t1 = 0; t1 < T; ++t1) {
            if (t1 > 0) out << ',';
            if (t1 <= t2 && rows_[t2].size() == t2 + 1) {
                std::snprintf(buf, sizeof buf, "%.6f", rows_[t2][t1]);
                out << buf;
            }
        }
        out << '\n';
    }
    return out.str();
}

double evaluate(const MlpModel& model, const LabeledDataset& data) {
    if (data.size() == 0) throw Error("evaluate: empty dataset");
    ForwardTrace trace = forward_batch(model, data.inputs, Mode::kEval, nullptr, false);
    std::size_t correct = 0;
    const std::size_t C = trace.logits.rows();
    for (std::size_t b = 0; b < trace.logits.cols(); ++b) {
        std::size_t arg = 0;
        double best = trace.logits(0, b);
        for (std::size_t c = 1; c < C; ++c)
            if (trace.logits(c, b) > best) {
                best = trace.logits(c, b);
                arg = c;
            }
        if (static_cast<int>(arg) == data.labels[b]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

Summary summarize(const AccuracyMatrix& m) {
    const std::size_t T = m.task_count();
    if (T == 0 || m.completed() != T)
        throw Error("summarize: matrix incomplete");
    Summary s;
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += m.at(t, T - 1);
    s.avg_accuracy = acc / static_cast<double>(T);
    if (T >= 2) {
        double bt = 0.0;
        for (std::size_t t = 0; t + 1 < T; ++t) bt += m.at(t, T - 1) - m.at(t, t);
        s.backward_transfer = bt / static_cast<double>(T - 1);
    }
    return s;
}

ActivationStats activation_stats(const MlpModel& model, const LabeledDataset& data) {
    if (data.size() == 0) throw Error("activation_stats: empty dataset");
    ForwardTrace trace = forward_batch(model, data.inputs, Mode::kEval, nullptr, true);

    ActivationStats stats;
    const std::size_t H = model.num_hidden();
    stats.nu.resize(H);
    stats.q.resize(H);
    stats.degenerate.assign(H, 0);
    for (std::size_t l = 0; l < H; ++l) {
        const std::size_t width = model.layers[l].out_dim();
        stats.nu[l].assign(width, 0.0);
        for (const auto& sample : trace.winners[l])
            for (std::uint32_t j : sample) stats.nu[l][j] += 1.0;
        double total = 0.0;
        for (double v : stats.nu[l]) total += v;
        stats.q[l].assign(width, 0.0);
        if (total > 0.0) {
            for (std::size_t j = 0; j < width; ++j) stats.q[l][j] = stats.nu[l][j] / total;
        } else {
            std::fill(stats.q[l].begin(), stats.q[l].end(), 1.0 / static_cast<double>(width));
            stats.degenerate[l] = 1;
        }
    }
    return stats;
}

double jsd(const std::vector<double>& q1, const std::vector<double>& q2) {
    if (q1.size() != q2.size())
        throw Error("jsd: length mismatch " + std::to_string(q1.size()) + " vs " +
                    std::to_string(q2.size()));
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < q1.size(); ++j) {
        if (q1[j] < 0.0 || q2[j] < 0.0) throw Error("jsd: negative probability mass");
        s1 += q1[j];
        s2 += q2[j];
    }
    if (std::fabs(s1 - 1.0) > 1e-9 || std::fabs(s2 - 1.0) > 1e-9)
        throw Error("jsd: inputs are not normalized (sums " + std::to_string(s1) + ", " +
                    std::to_string(s2) + ")");

    double acc = 0.0;
    for (std::size_t j = 0; j < q1.size(); ++j) {
        const double m = q1[j] + q2[j];
        if (q1[j] > 0.0) acc += 0.5 * q1[j] * std::log(2.0 * q1[j] / m);
        if (q2[j] > 0.0) acc += 0.5 * q2[j] * std::log(2.0 * q2[j] / m);
    }
    return std::max(acc, 0.0);
}

std::vector<double> captured_variance_curve(const DenseMatrix& x, std::size_t max_components) {
    if (x.rows() == 0 || x.cols() == 0 || x.max_abs() == 0.0)
        throw Error("captured_variance_curve: zero activation matrix");
    EigenResult eig = second_moment_eig(x);
    double total = 0.0;
    for (double l : eig.eigenvalues) total += std::max(l, 0.0);
    if (total <= 0.0) throw Error("captured_variance_curve: degenerate spectrum");

    std::vector<double> curve(max_components, 1.0);
    double cum = 0.0;
    for (std::size_t r = 0; r < max_components; ++r) {
        if (r < eig.eigenvalues.size()) {
            cum += std::max(eig.eigenvalues[r], 0.0);
            curve[r] = std::min(cum / total, 1.0);
        }
        // beyond the spectrum the curve stays at 1
    }
    return curve;
}

} // namespace sgpm
