#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hspace {

// All decomposition code works in 64-bit precision, row-major storage so
// matrices serialize to the tensor file format without copies.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const DenseMatrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
    if (!m.allFinite())
        throw std::invalid_argument(what + ": non-finite entries");
}

// Max |QᵀQ − I| deviation in Frobenius norm; used by invariant checks.
inline double orthonormality_defect(const DenseMatrix& q) {
    const Index k = q.cols();
    return (q.transpose() * q - DenseMatrix::Identity(k, k)).norm();
}

}  // namespace hspace
