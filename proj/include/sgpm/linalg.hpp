#ifndef SGPM_LINALG_HPP
#define SGPM_LINALG_HPP

#include "sgpm/matrix.hpp"

#include <cstddef>
#include <vector>

namespace sgpm {

// Eigendecomposition of a symmetric matrix. Eigenvalues sorted descending,
// eigenvector columns aligned with them, each column's largest-magnitude
// entry made positive.
struct EigenResult {
    std::vector<double> eigenvalues;
    DenseMatrix eigenvectors;
};

// Cyclic Jacobi on the symmetrized input (A+A^T)/2. Rejects non-square
// input and asymmetry beyond 1e-9 (relative to max|A| when that exceeds 1).
// Off-diagonal Frobenius tolerance 1e-12 relative to ||A||_F, capped at 100
// sweeps; failure to converge raises Error carrying the residual norm.
// Negative eigenvalues within rounding tolerance of zero are clamped to 0.
EigenResult sym_eig(const DenseMatrix& a);

// Smallest r with (sum of the r leading eigenvalues) / (total) >= eps_th.
// eps_th == 1.0 means the numerical rank: every eigenvalue above a
// rounding-noise floor relative to the leading one is kept.
// Requires a non-negative, non-increasing, not-all-zero spectrum.
std::size_t captured_dim(const std::vector<double>& eigenvalues, double eps_th);

// G * (I - M M^T): removes from each row of G its component inside the
// column span of M. M must have orthonormal columns (checked to 1e-8) and
// M.rows == G.cols. M may have zero columns, in which case G is returned
// unchanged.
DenseMatrix project_complement(const DenseMatrix& g, const DenseMatrix& m);

// Modified Gram-Schmidt with a second correction pass. Columns whose
// residual norm after orthogonalization falls below tol are dropped; the
// result may have zero columns.
DenseMatrix orthonormalize(const DenseMatrix& v, double tol);

// Appends to `basis` the columns of `extra` that survive orthogonalization
// against `basis` and the previously appended ones. Existing columns of
// `basis` are never touched.
DenseMatrix append_orthonormal(const DenseMatrix& basis, const DenseMatrix& extra, double tol);

// Eigenpairs of X X^T / N (N = cols of X) restricted to the part of the
// spectrum reachable from the data. When X has more rows than columns the
// N x N Gram matrix X^T X / N is decomposed instead and its eigenvectors
// mapped through X; either way the returned eigenvalues are those of
// X X^T / N that can be nonzero, sorted descending.
EigenResult second_moment_eig(const DenseMatrix& x);

} // namespace sgpm

#endif
