#pragma once

// Dense small-matrix primitives shared by the iterative algorithms: reduced QR,
// reduced/truncated SVD with a deterministic sign convention, and principal
// angles for subspace comparison.

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <optional>
#include <stdexcept>

#include "hspace/core/matrix.hpp"

namespace hspace::linalg {

struct QrFactors {
    DenseMatrix q;  // n×k, orthonormal columns
    DenseMatrix r;  // k×k, upper triangular, nonnegative diagonal
};

struct SvdFactors {
    DenseMatrix u;  // n×r, orthonormal columns
    Vector s;       // r singular values, nonincreasing, ≥ 0
    DenseMatrix v;  // d×r, orthonormal columns
};

// Deterministic sign convention: the largest-magnitude entry of each right
// singular vector is made positive and U follows, so direction files are
// stable across runs.
inline void fix_signs(DenseMatrix& u, DenseMatrix& v) {
    for (Index j = 0; j < v.cols(); ++j) {
        Index imax = 0;
        v.col(j).cwiseAbs().maxCoeff(&imax);
        if (v(imax, j) < 0.0) {
            v.col(j) = -v.col(j);
            if (j < u.cols()) u.col(j) = -u.col(j);
        }
    }
}

inline QrFactors reduced_qr(const DenseMatrix& m) {
    if (m.rows() < m.cols())
        throw std::invalid_argument("reduced_qr: rows < cols");
    require_finite(m, "reduced_qr");
    const Index n = m.rows(), k = m.cols();

    Eigen::HouseholderQR<DenseMatrix> qr(m);
    QrFactors out;
    out.q = qr.householderQ() * DenseMatrix::Identity(n, k);
    out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Index i = 0; i < k; ++i) {
        if (out.r(i, i) < 0.0) {
            out.r.row(i) = -out.r.row(i);
            out.q.col(i) = -out.q.col(i);
        }
    }
    return out;
}

// Thin SVD when rank is omitted, truncated top-`rank` factors otherwise.
inline SvdFactors reduced_svd(const DenseMatrix& m, std::optional<Index> rank = std::nullopt) {
    require_finite(m, "reduced_svd");
    const Index full = std::min(m.rows(), m.cols());
    Index r = rank.value_or(full);
    if (r < 0 || r > full)
        throw std::invalid_argument("reduced_svd: rank exceeds min dimension");

    // BDCSVD wants rows ≥ cols; transpose the wide case and swap factors.
    const bool wide = m.cols() > m.rows();
    const DenseMatrix work = wide ? DenseMatrix(m.transpose()) : m;
    Eigen::BDCSVD<DenseMatrix> svd(work, Eigen::ComputeThinU | Eigen::ComputeThinV);

    SvdFactors out;
    if (wide) {
        out.u = svd.matrixV().leftCols(r);
        out.v = svd.matrixU().leftCols(r);
    } else {
        out.u = svd.matrixU().leftCols(r);
        out.v = svd.matrixV().leftCols(r);
    }
    out.s = svd.singularValues().head(r);
    fix_signs(out.u, out.v);
    return out;
}

inline DenseMatrix reconstruct(const SvdFactors& f) {
    return f.u * f.s.asDiagonal() * f.v.transpose();
}

// Principal angles between the column spans of A and B, in radians,
// nondecreasing in [0, π/2]. Inputs must have orthonormal columns.
inline Vector principal_angles(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("principal_angles: row count mismatch");
    const double tol = 1e-8;
    if (orthonormality_defect(a) > tol * static_cast<double>(std::max<Index>(1, a.cols())) ||
        orthonormality_defect(b) > tol * static_cast<double>(std::max<Index>(1, b.cols())))
        throw std::invalid_argument("principal_angles: inputs not orthonormal");

    Eigen::BDCSVD<DenseMatrix> svd(a.transpose() * b);
    Vector sv = svd.singularValues();
    Vector angles(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
        angles[i] = std::acos(std::clamp(sv[i], -1.0, 1.0));
    std::sort(angles.begin(), angles.end());
    return angles;
}

// Orthonormal basis of the row space of m: right singular vectors whose
// singular value clears the numerical-rank cutoff, further capped at `rank`
// when one is given (so a rank-deficient input never yields null-space
// columns).
inline DenseMatrix row_space_basis(const DenseMatrix& m, std::optional<Index> rank = std::nullopt) {
    SvdFactors f = reduced_svd(m);
    const double cutoff = f.s.size() > 0 ? f.s[0] * 1e-12 : 0.0;
    Index r = 0;
    while (r < f.s.size() && f.s[r] > cutoff) ++r;
    if (rank) r = std::min(r, *rank);
    return f.v.leftCols(r);
}

}  // namespace hspace::linalg
