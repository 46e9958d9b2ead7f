#include "sgpm/linalg.hpp"

#include "sgpm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgpm {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagTol = 1e-12;   // relative to ||A||_F
constexpr double kRankFloor = 1e-14;    // relative to leading eigenvalue

double off_diag_frobenius(const DenseMatrix& a) {
    const std::size_t n = a.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
}

// One Jacobi rotation zeroing a(p,q); updates A (full storage) and V.
void rotate(DenseMatrix& a, DenseMatrix& v, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows();
    const double apq = a(p, q);
    const double app = a(p, p);
    const double aqq = a(q, q);

    const double theta = (aqq - app) / (2.0 * apq);
    double t;
    if (std::fabs(theta) > 1e307) {
        t = 1.0 / (2.0 * theta);
    } else {
        t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
    }
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    const double tau = s / (1.0 + c);

    a(p, p) = app - t * apq;
    a(q, q) = aqq + t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;

    double* rp = a.row(p);
    double* rq = a.row(q);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        const double aip = rp[i];
        const double aiq = rq[i];
        rp[i] = aip - s * (aiq + tau * aip);
        rq[i] = aiq + s * (aip - tau * aiq);
    }
    // Mirror the updated rows into the columns.
    for (std::size_t i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        a(i, p) = rp[i];
        a(i, q) = rq[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double vip = v(i, p);
        const double viq = v(i, q);
        v(i, p) = vip - s * (viq + tau * vip);
        v(i, q) = viq + s * (vip - tau * viq);
    }
}

void fix_column_sign(DenseMatrix& v, std::size_t c) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < v.rows(); ++r) {
        const double m = std::fabs(v(r, c));
        if (m > best) {
            best = m;
            arg = r;
        }
    }
    if (v(arg, c) < 0.0)
        for (std::size_t r = 0; r < v.rows(); ++r) v(r, c) = -v(r, c);
}

} // namespace

EigenResult sym_eig(const DenseMatrix& input) {
    if (input.rows() != input.cols())
        throw Error("sym_eig: matrix is not square (" + shape_str(input) + ")");
    const std::size_t n = input.rows();
    if (n == 0) return {{}, DenseMatrix(0, 0)};

    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            asym = std::max(asym, std::fabs(input(i, j) - input(j, i)));
    const double asym_tol = 1e-9 * std::max(1.0, input.max_abs());
    if (asym > asym_tol)
        throw Error("sym_eig: input asymmetry " + std::to_string(asym) + " exceeds tolerance");

    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = 0.5 * (input(i, j) + input(j, i));

    const double scale = a.frobenius_norm();
    const double tol = kOffDiagTol * std::max(scale, 1e-300);
    DenseMatrix v = DenseMatrix::identity(n);

    bool converged = off_diag_frobenius(a) <= tol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q)
                if (a(p, q) != 0.0) rotate(a, v, p, q);
        converged = off_diag_frobenius(a) <= tol;
    }
    if (!converged)
        throw Error("sym_eig: no convergence in " + std::to_string(kMaxSweeps) +
                    " sweeps, off-diagonal norm " + std::to_string(off_diag_frobenius(a)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenResult res;
    res.eigenvalues.resize(n);
    res.eigenvectors = DenseMatrix(n, n);
    double max_abs_eig = 0.0;
    for (std::size_t k = 0; k < n; ++k) max_abs_eig = std::max(max_abs_eig, std::fabs(a(k, k)));
    const double clamp_tol = 1e-12 * max_abs_eig;
    for (std::size_t k = 0; k < n; ++k) {
        double lambda = a(order[k], order[k]);
        if (lambda < 0.0 && -lambda <= clamp_tol) lambda = 0.0;
        res.eigenvalues[k] = lambda;
        for (std::size_t r = 0; r < n; ++r) res.eigenvectors(r, k) = v(r, order[k]);
        fix_column_sign(res.eigenvectors, k);
    }
    return res;
}

std::size_t captured_dim(const std::vector<double>& eigenvalues, double eps_th) {
    if (eigenvalues.empty()) throw Error("captured_dim: empty spectrum");
    if (!(eps_th > 0.0) || eps_th > 1.0)
        throw Error("captured_dim: eps_th must lie in (0,1], got " + std::to_string(eps_th));
    double total = 0.0;
    double prev = eigenvalues.front();
    for (double l : eigenvalues) {
        if (l < 0.0) throw Error("captured_dim: negative eigenvalue " + std::to_string(l));
        if (l > prev + 1e-12 * std::max(1.0, prev))
            throw Error("captured_dim: spectrum not non-increasing");
        prev = l;
        total += l;
    }
    if (total <= 0.0) throw Error("captured_dim: all-zero spectrum (degenerate activation matrix)");

    if (eps_th == 1.0) {
        // Numerical rank: keep everything above rounding noise.
        const double floor = kRankFloor * eigenvalues.front();
        std::size_t r = 0;
        for (double l : eigenvalues)
            if (l > floor) ++r;
        return std::max<std::size_t>(r, 1);
    }

    const double target = eps_th * total - 1e-12 * total;
    double cum = 0.0;
    for (std::size_t r = 0; r < eigenvalues.size(); ++r) {
        cum += eigenvalues[r];
        if (cum >= target) return r + 1;
    }
    return eigenvalues.size();
}

DenseMatrix project_complement(const DenseMatrix& g, const DenseMatrix& m) {
    if (m.cols() == 0) return g;
    if (m.rows() != g.cols())
        throw Error("project_complement: basis rows " + std::to_string(m.rows()) +
                    " do not match G columns " + std::to_string(g.cols()));
    // Orthonormality gate: worst deviation of M^T M from the identity.
    DenseMatrix gram = matmul_at_b(m, m);
    double dev = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i)
        for (std::size_t j = 0; j < gram.cols(); ++j)
            dev = std::max(dev, std::fabs(gram(i, j) - (i == j ? 1.0 : 0.0)));
    if (dev > 1e-8)
        throw Error("project_complement: basis not orthonormal, Gram deviation " +
                    std::to_string(dev));

    DenseMatrix gm = matmul(g, m);
    DenseMatrix back = matmul_a_bt(gm, m);
    DenseMatrix out = g;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= back.data()[i];
    return out;
}

namespace {

// Shared MGS core; the columns of q0 are copied through untouched.
DenseMatrix mgs(const DenseMatrix& q0, const DenseMatrix& v, double tol) {
    const std::size_t d = q0.cols() > 0 ? q0.rows() : v.rows();
    std::vector<std::vector<double>> cols;
    cols.reserve(q0.cols() + v.cols());
    for (std::size_t c = 0; c < q0.cols(); ++c) cols.push_back(q0.col(c));

    for (std::size_t c = 0; c < v.cols(); ++c) {
        std::vector<double> w = v.col(c);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& qc : cols) {
                double dot = 0.0;
                for (std::size_t r = 0; r < d; ++r) dot += qc[r] * w[r];
                for (std::size_t r = 0; r < d; ++r) w[r] -= dot * qc[r];
            }
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm >= tol && norm > 0.0) {
            for (double& x : w) x /= norm;
            cols.push_back(std::move(w));
        }
        if (cols.size() == d) break;   // space is full
    }

    DenseMatrix out(d, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < d; ++r) out(r, c) = cols[c][r];
    return out;
}

} // namespace

DenseMatrix orthonormalize(const DenseMatrix& v, double tol) {
    return mgs(DenseMatrix(v.rows(), 0), v, tol);
}

DenseMatrix append_orthonormal(const DenseMatrix& basis, const DenseMatrix& extra, double tol) {
    if (basis.cols() > 0 && extra.cols() > 0 && basis.rows() != extra.rows())
        throw Error("append_orthonormal: row mismatch " + shape_str(basis) + " vs " +
                    shape_str(extra));
    return mgs(basis, extra, tol);
}

EigenResult second_moment_eig(const DenseMatrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw Error("second_moment_eig: empty matrix");
    const double inv_n = 1.0 / static_cast<double>(x.cols());

    if (x.rows() <= x.cols()) {
        DenseMatrix s = matmul_a_bt(x, x);
        for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] *= inv_n;
        return sym_eig(s);
    }

    // Snapshot route: same nonzero spectrum from the smaller Gram matrix.
    DenseMatrix gram = matmul_at_b(x, x);
    for (std::size_t i = 0; i < gram.size(); ++i) gram.data()[i] *= inv_n;
    EigenResult small = sym_eig(gram);

    const double lead = small.eigenvalues.empty() ? 0.0 : small.eigenvalues.front();
    const double floor = kRankFloor * lead;
    std::size_t mappable = 0;
    while (mappable < small.eigenvalues.size() && small.eigenvalues[mappable] > floor) ++mappable;

    // v_i = X u_i / ||X u_i||; only directions with real energy are mappable.
    DenseMatrix u = small.eigenvectors.left_cols(mappable);
    DenseMatrix xv = matmul(x, u);
    for (std::size_t c = 0; c < mappable; ++c) {
        double norm = 0.0;
        for (std::size_t r = 0; r < xv.rows(); ++r) norm += xv(r, c) * xv(r, c);
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t r = 0; r < xv.rows(); ++r) xv(r, c) /= norm;
    }
    EigenResult res;
    res.eigenvectors = orthonormalize(xv, 1e-10);
    // Full small-Gram spectrum: the unmapped tail is rounding-level noise,
    // kept so captured-variance fractions stay exact.
    res.eigenvalues = small.eigenvalues;
    for (std::size_t c = 0; c < res.eigenvectors.cols(); ++c)
        fix_column_sign(res.eigenvectors, c);
    return res;
}

} // namespace sgpm
