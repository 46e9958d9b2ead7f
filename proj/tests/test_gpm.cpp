#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "sgpm/error.hpp"
#include "sgpm/gpm.hpp"
#include "sgpm/linalg.hpp"
#include "sgpm/net.hpp"
#include "sgpm/tasks.hpp"

#include <cmath>

using namespace sgpm;

namespace {

LabeledDataset dataset_from(const DenseMatrix& inputs) {
    LabeledDataset d;
    d.inputs = inputs;
    d.labels.assign(inputs.cols(), 0);
    return d;
}

double frob(const DenseMatrix& m) { return m.frobenius_norm(); }

double span_residual(const DenseMatrix& x, const DenseMatrix& basis) {
    DenseMatrix coef = matmul_at_b(basis, x);
    DenseMatrix span = matmul(basis, coef);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.data()[i] - span.data()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

TEST_CASE("collect_activations samples columns with the bias row") {
    Rng mrng(1);
    MlpModel m = MlpModel::init(3, {5}, 2, {2}, mrng);
    DenseMatrix inputs = oracle::random_matrix(3, 20, mrng);
    LabeledDataset data = dataset_from(inputs);

    Rng rng(2);
    DenseMatrix x0 = collect_activations(m, data, 0, 8, rng);
    CHECK(x0.rows() == 4);
    CHECK(x0.cols() == 8);
    // Raw-input layer: columns are input samples plus the constant-1 row.
    for (std::size_t c = 0; c < x0.cols(); ++c) CHECK(x0(3, c) == 1.0);
    bool found = false;
    for (std::size_t s = 0; s < 20 && !found; ++s)
        found = x0(0, 0) == inputs(0, s) && x0(1, 0) == inputs(1, s) && x0(2, 0) == inputs(2, s);
    CHECK(found);
}

TEST_CASE("collect_activations clamps to the dataset size") {
    Rng mrng(3);
    MlpModel m = MlpModel::init(2, {4}, 2, {kDense}, mrng);
    LabeledDataset data = dataset_from(oracle::random_matrix(2, 5, mrng));
    Rng rng(4);
    DenseMatrix x = collect_activations(m, data, 1, 100, rng);
    CHECK(x.cols() == 5);
    CHECK(x.rows() == 5);   // 4 hidden + bias

    LabeledDataset empty;
    empty.inputs = DenseMatrix(2, 0);
    CHECK_THROWS_AS(collect_activations(m, empty, 0, 4, rng), Error);
}

TEST_CASE("every collected layer carries the constant-1 coordinate") {
    Rng mrng(5);
    MlpModel m = MlpModel::init(3, {6, 4}, 2, {3, 2}, mrng);
    LabeledDataset data = dataset_from(oracle::random_matrix(3, 12, mrng));
    Rng rng(6);
    auto acts = collect_all_activations(m, data, 12, rng);
    REQUIRE(acts.size() == 3);
    for (const auto& x : acts)
        for (std::size_t c = 0; c < x.cols(); ++c) CHECK(x(x.rows() - 1, c) == 1.0);
}

TEST_CASE("init_basis on rank-1 data returns that direction") {
    DenseMatrix x(3, 6);
    for (std::size_t c = 0; c < 6; ++c) x(0, c) = 2.0;   // all columns parallel to e1
    for (double eps : {0.5, 0.9, 1.0}) {
        DenseMatrix m = init_basis(x, eps);
        REQUIRE(m.cols() == 1);
        CHECK(std::fabs(m(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::fabs(m(1, 0)) <= 1e-12);
    }
}

TEST_CASE("init_basis at full variance recovers the rank") {
    Rng rng(7);
    DenseMatrix x = oracle::random_matrix(6, 30, rng);   // full rank 6 a.s.
    DenseMatrix m = init_basis(x, 1.0);
    CHECK(m.cols() == 6);
}

TEST_CASE("init_basis on rank-3 data at 0.99 captures the span") {
    Rng rng(8);
    DenseMatrix base = oracle::random_matrix(10, 3, rng);
    DenseMatrix coef = oracle::random_matrix(3, 25, rng);
    DenseMatrix x = matmul(base, coef);
    DenseMatrix m = init_basis(x, 0.99);
    CHECK(m.cols() <= 3);
    if (m.cols() == 3) CHECK(span_residual(x, m) <= 1e-8 * frob(x));
    // At full variance the rank must come out exactly.
    DenseMatrix mfull = init_basis(x, 1.0);
    CHECK(mfull.cols() == 3);
    CHECK(span_residual(x, mfull) <= 1e-8 * frob(x));
}

TEST_CASE("init_basis rejects zero input") {
    CHECK_THROWS_AS(init_basis(DenseMatrix(4, 5), 0.9), Error);
}

TEST_CASE("update_basis keeps the old basis when nothing new appears") {
    Rng rng(9);
    DenseMatrix base = oracle::random_matrix(8, 2, rng);
    DenseMatrix coef = oracle::random_matrix(2, 20, rng);
    DenseMatrix x1 = matmul(base, coef);
    DenseMatrix m1 = init_basis(x1, 1.0);

    // New activations entirely inside span(m1).
    DenseMatrix coef2 = oracle::random_matrix(static_cast<std::size_t>(m1.cols()), 15, rng);
    DenseMatrix x2 = matmul(m1, coef2);
    DenseMatrix m2 = update_basis(m1, x2, 1.0);
    CHECK(m2.cols() == m1.cols());
    CHECK(m2 == m1);
}

TEST_CASE("update_basis from an empty basis reduces to init_basis") {
    Rng rng(10);
    DenseMatrix x = oracle::random_matrix(5, 12, rng);
    DenseMatrix empty(5, 0);
    DenseMatrix a = update_basis(empty, x, 0.95);
    DenseMatrix b = init_basis(x, 0.95);
    CHECK(a == b);
}

TEST_CASE("orthogonal new direction is appended") {
    DenseMatrix m_old(3, 1);
    m_old(0, 0) = 1.0;   // e1
    DenseMatrix x(3, 5);
    for (std::size_t c = 0; c < 5; ++c) x(1, c) = 3.0;   // all columns e2
    DenseMatrix m = update_basis(m_old, x, 0.99);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 1.0);   // old column untouched, in place
    CHECK(std::fabs(m(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("update_basis never removes columns and never exceeds the dimension") {
    Rng rng(11);
    DenseMatrix basis(6, 0);
    std::size_t prev = 0;
    for (int task = 0; task < 8; ++task) {
        DenseMatrix x = oracle::random_matrix(6, 10, rng);
        DenseMatrix grown = update_basis(basis, x, 0.8);
        CHECK(grown.cols() >= prev);
        CHECK(grown.cols() <= 6);
        // Old columns appear unchanged, in order.
        for (std::size_t c = 0; c < prev; ++c)
            for (std::size_t r = 0; r < 6; ++r) CHECK(grown(r, c) == basis(r, c));
        prev = grown.cols();
        basis = grown;
    }
}

TEST_CASE("projection_bases reflect the memory and start empty") {
    Rng mrng(12);
    MlpModel model = MlpModel::init(4, {6}, 3, {2}, mrng);
    GpmMemory mem = GpmMemory::make(model, 0.99, 16);
    const auto& bases = projection_bases(mem);
    REQUIRE(bases.size() == 2);
    CHECK(bases[0].cols() == 0);
    CHECK(bases[0].rows() == 5);
    CHECK(basis_dimensions(mem) == std::vector<std::size_t>{0, 0});

    // Empty bases leave sgd_step as plain SGD.
    MlpModel before = model;
    std::vector<DenseMatrix> grads;
    Rng rng(13);
    for (const auto& l : model.layers)
        grads.push_back(oracle::random_matrix(l.weights.rows(), l.weights.cols(), rng));
    MlpModel plain = model;
    sgd_step(plain, grads, 0.1, nullptr);
    sgd_step(model, grads, 0.1, &bases);
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        CHECK(model.layers[l].weights == plain.layers[l].weights);
}

TEST_CASE("saturated layer yields an exactly zero projected update") {
    Rng mrng(14);
    MlpModel model = MlpModel::init(2, {3}, 2, {kDense}, mrng);
    std::vector<DenseMatrix> bases;
    bases.push_back(DenseMatrix::identity(3));
    bases.push_back(DenseMatrix::identity(4));
    MlpModel before = model;
    std::vector<DenseMatrix> grads;
    Rng rng(15);
    for (const auto& l : model.layers)
        grads.push_back(oracle::random_matrix(l.weights.rows(), l.weights.cols(), rng));
    sgd_step(model, grads, 0.7, &bases);
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        CHECK(model.layers[l].weights == before.layers[l].weights);
}

TEST_CASE("basis dimensions grow monotonically under absorb_task") {
    Rng mrng(16);
    MlpModel model = MlpModel::init(3, {8}, 2, {3}, mrng);
    GpmMemory mem = GpmMemory::make(model, 0.99, 32);
    Rng rng(17);
    std::vector<std::size_t> prev{0, 0};
    for (int task = 0; task < 4; ++task) {
        LabeledDataset data = dataset_from(oracle::random_matrix(3, 32, rng));
        absorb_task(mem, model, data, rng);
        auto dims = basis_dimensions(mem);
        for (std::size_t l = 0; l < dims.size(); ++l) {
            CHECK(dims[l] >= prev[l]);
            CHECK(dims[l] <= mem.bases[l].rows());
        }
        prev = dims;
    }
}

TEST_CASE("exact memory: later updates leave stored responses untouched") {
    // eps_th = 1 on task-1 activations, then many projected updates; the
    // response of every layer on the stored samples must stay fixed.
    Rng mrng(18);
    MlpModel model = MlpModel::init(4, {12}, 3, {4}, mrng);
    Rng drng(19);
    LabeledDataset task1 = dataset_from(oracle::random_matrix(4, 24, drng));
    for (auto& y : task1.labels) y = static_cast<int>(drng.below(3));

    GpmMemory mem = GpmMemory::make(model, 1.0, 64);
    Rng grng(20);
    std::vector<DenseMatrix> stored = collect_all_activations(model, task1, 64, grng);
    for (std::size_t l = 0; l < stored.size(); ++l)
        mem.bases[l] = update_basis(mem.bases[l], stored[l], 1.0);

    std::vector<DenseMatrix> before_resp;
    for (std::size_t l = 0; l < model.num_layers(); ++l)
        before_resp.push_back(matmul(model.layers[l].weights, stored[l]));

    // Train on a different task with projected gradients.
    Rng trng(21);
    LabeledDataset task2 = dataset_from(oracle::random_matrix(4, 24, trng));
    for (auto& y : task2.labels) y = static_cast<int>(trng.below(3));
    for (int step = 0; step < 200; ++step) {
        LossAndGrads lg = loss_and_grads(model, task2.inputs, task2.labels, nullptr,
                                         &projection_bases(mem));
        sgd_step(model, lg.grads, 0.05, nullptr);
    }

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        DenseMatrix after = matmul(model.layers[l].weights, stored[l]);
        for (std::size_t i = 0; i < after.size(); ++i)
            CHECK(std::fabs(after.data()[i] - before_resp[l].data()[i]) <= 1e-9);
    }
}

TEST_CASE("residual thresholding variant also grows a usable basis") {
    Rng rng(22);
    DenseMatrix x1 = oracle::random_matrix(6, 15, rng);
    DenseMatrix m1 = init_basis(x1, 0.95);
    DenseMatrix x2 = oracle::random_matrix(6, 15, rng);
    DenseMatrix joint = update_basis(m1, x2, 0.95, GpmThreshold::kJoint);
    DenseMatrix residual = update_basis(m1, x2, 0.95, GpmThreshold::kResidual);
    CHECK(joint.cols() >= m1.cols());
    CHECK(residual.cols() >= m1.cols());
    // Residual mode thresholds the leftover spectrum alone, so it never
    // appends fewer directions than the joint rule.
    CHECK(residual.cols() >= joint.cols());
}
