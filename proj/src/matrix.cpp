#include "sgpm/matrix.hpp"

#include "sgpm/error.hpp"

#include <Eigen/Core>

#include <cmath>

namespace sgpm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap map(const DenseMatrix& m) {
    return CMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

} // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool DenseMatrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c)
            t(c, r) = (*this)(r, c);
    return t;
}

std::vector<double> DenseMatrix::col(std::size_t c) const {
    std::vector<double> v(rows_);
    for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
    return v;
}

void DenseMatrix::set_col(std::size_t c, const std::vector<double>& v) {
    for (std::size_t r = 0; r < rows_ && r < v.size(); ++r) (*this)(r, c) = v[r];
}

DenseMatrix DenseMatrix::left_cols(std::size_t n) const {
    DenseMatrix out(rows_, n);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < n; ++c)
            out(r, c) = (*this)(r, c);
    return out;
}

std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw Error("matmul: inner dimensions disagree, " + shape_str(a) + " * " + shape_str(b));
    DenseMatrix c(a.rows(), b.cols());
    if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
    MMap(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()))
        .noalias() = map(a) * map(b);
    return c;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows())
        throw Error("matmul_at_b: dimensions disagree, " + shape_str(a) + "^T * " + shape_str(b));
    DenseMatrix c(a.cols(), b.cols());
    if (c.rows() == 0 || c.cols() == 0 || a.rows() == 0) return c;
    MMap(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()))
        .noalias() = map(a).transpose() * map(b);
    return c;
}

DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.cols())
        throw Error("matmul_a_bt: dimensions disagree, " + shape_str(a) + " * " + shape_str(b) + "^T");
    DenseMatrix c(a.rows(), b.rows());
    if (c.rows() == 0 || c.cols() == 0 || a.cols() == 0) return c;
    MMap(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()))
        .noalias() = map(a) * map(b).transpose();
    return c;
}

} // namespace sgpm
