#ifndef SGPM_METRICS_HPP
#define SGPM_METRICS_HPP

#include "sgpm/matrix.hpp"
#include "sgpm/net.hpp"
#include "sgpm/tasks.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sgpm {

// Lower-triangular accuracy record: entry (t1, t2), t1 <= t2, is the test
// accuracy on task t1 right after finishing training task t2.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t T) : rows_(T) {}

    std::size_t task_count() const { return rows_.size(); }
    std::size_t completed() const;

    void set_row(std::size_t t2, std::vector<double> accuracies);
    double at(std::size_t t1, std::size_t t2) const;
    const std::vector<std::vector<double>>& rows() const { return rows_; }

    std::string to_csv() const;

private:
    std::vector<std::vector<double>> rows_;   // rows_[t2] has t2+1 entries
};

struct Summary {
    double avg_accuracy = 0.0;
    std::optional<double> backward_transfer;   // absent when T < 2
};

// Fraction of argmax-correct predictions.
double evaluate(const MlpModel& model, const LabeledDataset& data);

// avg = mean_t M(t,T); BT = mean_{t<T} [M(t,T) - M(t,t)].
Summary summarize(const AccuracyMatrix& m);

// Winner counts over a validation set (eval mode) and the per-layer pmf
// q = nu / sum(nu). A layer that never fires gets the uniform pmf and its
// degenerate flag set.
struct ActivationStats {
    std::vector<std::vector<double>> nu;
    std::vector<std::vector<double>> q;
    std::vector<std::uint8_t> degenerate;
};

ActivationStats activation_stats(const MlpModel& model, const LabeledDataset& data);

// Jensen-Shannon divergence in nats: symmetric, in [0, ln 2], with the
// convention 0 * log(0/x) = 0. Inputs must be equal-length pmfs.
double jsd(const std::vector<double>& q1, const std::vector<double>& q2);

// Entry r-1 = fraction of spectrum energy captured by the r leading
// eigenvectors of X X^T / N; non-decreasing, final entries 1 when
// max_components exceeds the spectrum.
std::vector<double> captured_variance_curve(const DenseMatrix& x, std::size_t max_components);

} // namespace sgpm

#endif
