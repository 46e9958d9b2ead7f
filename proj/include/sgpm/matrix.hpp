#ifndef SGPM_MATRIX_HPP
#define SGPM_MATRIX_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace sgpm {

// Dense row-major matrix of doubles. The universal numeric carrier for
// activations, weights, bases and gradients.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool all_finite() const;
    double max_abs() const;
    double frobenius_norm() const;

    DenseMatrix transposed() const;

    // Copy of column c as a flat vector.
    std::vector<double> col(std::size_t c) const;
    void set_col(std::size_t c, const std::vector<double>& v);

    // Matrix formed by the first n columns.
    DenseMatrix left_cols(std::size_t n) const;

    bool operator==(const DenseMatrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B. Throws Error on inner-dimension mismatch, naming both shapes.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// C = A^T * B and C = A * B^T without materializing the transpose.
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b);

std::string shape_str(const DenseMatrix& m);

} // namespace sgpm

#endif
