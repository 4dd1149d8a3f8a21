#pragma once

// Matrix-free differentiable operator contract.
//
// An operator models a smooth map F : R^n -> R^m linearized at a fixed base
// point x0. Implementations expose the Jacobian J = dF/dx|_{x0} only through
// products:
//
//   jvp(v)  = J v        (R^n -> R^m)
//   vjp(u)  = J^T u      (R^m -> R^n)
//
// plus rows()/cols()/base_point()/apply(). Batched forms map Eigen matrices
// column-block-wise; the helpers below loop over columns so an operator only
// has to provide the single-vector entry points. Operators are immutable
// after construction and all entry points are deterministic.

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/op/region.hpp"

namespace hspace {

template <class Op>
concept DifferentiableOperator = requires(const Op op, const Vector& v) {
    { op.rows() } -> std::convertible_to<Index>;
    { op.cols() } -> std::convertible_to<Index>;
    { op.base_point() } -> std::convertible_to<Vector>;
    { op.jvp(v) } -> std::convertible_to<Vector>;
    { op.vjp(v) } -> std::convertible_to<Vector>;
};

// J V for an n×k block V, one column at a time.
template <DifferentiableOperator Op>
DenseMatrix jvp_block(const Op& op, const DenseMatrix& v) {
    if (v.rows() != op.cols())
        throw std::invalid_argument("jvp_block: block has " + std::to_string(v.rows()) +
                                    " rows, operator expects " + std::to_string(op.cols()));
    DenseMatrix out(op.rows(), v.cols());
    for (Index j = 0; j < v.cols(); ++j) out.col(j) = op.jvp(v.col(j));
    return out;
}

// J^T U for an m×k block U, one column at a time.
template <DifferentiableOperator Op>
DenseMatrix vjp_block(const Op& op, const DenseMatrix& u) {
    if (u.rows() != op.rows())
        throw std::invalid_argument("vjp_block: block has " + std::to_string(u.rows()) +
                                    " rows, operator expects " + std::to_string(op.rows()));
    DenseMatrix out(op.cols(), u.cols());
    for (Index j = 0; j < u.cols(); ++j) out.col(j) = op.vjp(u.col(j));
    return out;
}

// Materialize the full Jacobian column by column. Intended for small
// operators in tests and diagnostics only.
template <DifferentiableOperator Op>
DenseMatrix dense_jacobian(const Op& op) {
    DenseMatrix j(op.rows(), op.cols());
    Vector e = Vector::Zero(op.cols());
    for (Index i = 0; i < op.cols(); ++i) {
        e[i] = 1.0;
        j.col(i) = op.jvp(e);
        e[i] = 0.0;
    }
    return j;
}

// Adjoint consistency for one probe pair:
//   |<u, Jv> - <J^T u, v>| / (|u||v| + tiny).
// Exact-adjoint pairs sit at rounding level; a mismatched transpose shows up
// at O(1).
template <DifferentiableOperator Op>
double adjoint_discrepancy(const Op& op, const Vector& u, const Vector& v) {
    if (u.size() != op.rows())
        throw std::invalid_argument("adjoint_discrepancy: u has " + std::to_string(u.size()) +
                                    " entries, operator emits " + std::to_string(op.rows()));
    if (v.size() != op.cols())
        throw std::invalid_argument("adjoint_discrepancy: v has " + std::to_string(v.size()) +
                                    " entries, operator expects " + std::to_string(op.cols()));
    const double lhs = u.dot(op.jvp(v));
    const double rhs = op.vjp(u).dot(v);
    return std::abs(lhs - rhs) / (u.norm() * v.norm() + 1e-300);
}

// Worst adjoint discrepancy over `trials` random normal pairs.
template <DifferentiableOperator Op>
double max_adjoint_discrepancy(const Op& op, int trials = 100, std::uint64_t seed = 0x5eedULL) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Vector u = rng.normal_vector(op.rows());
        Vector v = rng.normal_vector(op.cols());
        worst = std::max(worst, adjoint_discrepancy(op, u, v));
    }
    return worst;
}

// Central-difference check of the analytic jvp against the nonlinear map:
//   (F(point + eps t) - F(point - eps t)) / (2 eps) ~ J t.
// Returns the relative error. For context-frozen operators the Jacobian is
// taken at the operator's base point, so `point` should coincide with it.
template <class Op>
double jvp_finite_difference_check(const Op& op, const Vector& point, const Vector& tangent,
                                   double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("jvp_finite_difference_check: eps must be > 0");
    if (point.size() != op.cols() || tangent.size() != op.cols())
        throw std::invalid_argument("jvp_finite_difference_check: dimension mismatch");
    Vector fd = (op.apply(point + eps * tangent) - op.apply(point - eps * tangent)) / (2.0 * eps);
    Vector an = op.jvp(tangent);
    const double denom = std::max(an.norm(), 1e-300);
    return (fd - an).norm() / denom;
}

// Affine operator F(x) = A (x - x0) + b with an explicit matrix. Reference
// implementation of the contract; used by tests and as the restriction base
// case.
class ExplicitOperator {
  public:
    ExplicitOperator(DenseMatrix a, Vector x0, Vector b)
        : a_(std::move(a)), x0_(std::move(x0)), b_(std::move(b)) {
        if (x0_.size() != a_.cols() || b_.size() != a_.rows())
            throw std::invalid_argument("ExplicitOperator: shape mismatch");
        require_finite(a_, "ExplicitOperator matrix");
    }
    explicit ExplicitOperator(const DenseMatrix& a)
        : ExplicitOperator(a, Vector::Zero(a.cols()), Vector::Zero(a.rows())) {}

    Index rows() const { return a_.rows(); }
    Index cols() const { return a_.cols(); }
    const Vector& base_point() const { return x0_; }
    Vector apply(const Vector& x) const { return a_ * (x - x0_) + b_; }
    Vector jvp(const Vector& v) const { return a_ * v; }
    Vector vjp(const Vector& u) const { return a_.transpose() * u; }
    const DenseMatrix& matrix() const { return a_; }

  private:
    DenseMatrix a_;
    Vector x0_, b_;
};

// Restriction of an operator to the rows selected by a region mask, in the
// mask's ascending flat-index order. jvp gathers, vjp scatters with zero
// padding; the base operator is held by reference and must outlive the
// restriction.
template <DifferentiableOperator Op>
class RestrictedOperator {
  public:
    RestrictedOperator(const Op& op, RegionMask region)
        : op_(op), region_(std::move(region)), indices_(region_.flat_indices()) {
        if (static_cast<Index>(region_.mask.size()) != op.rows())
            throw std::invalid_argument("RestrictedOperator: mask covers " +
                                        std::to_string(region_.mask.size()) +
                                        " entries, operator emits " + std::to_string(op.rows()));
    }

    Index rows() const { return static_cast<Index>(indices_.size()); }
    Index cols() const { return op_.cols(); }
    Vector base_point() const { return op_.base_point(); }
    const Op& base() const { return op_; }
    const RegionMask& region() const { return region_; }
    const std::vector<Index>& indices() const { return indices_; }

    Vector apply(const Vector& x) const { return gather(op_.apply(x)); }
    Vector jvp(const Vector& v) const { return gather(op_.jvp(v)); }
    Vector vjp(const Vector& u) const {
        if (u.size() != rows())
            throw std::invalid_argument("RestrictedOperator::vjp: vector size mismatch");
        Vector full = Vector::Zero(op_.rows());
        for (std::size_t i = 0; i < indices_.size(); ++i) full[indices_[i]] = u[static_cast<Index>(i)];
        return op_.vjp(full);
    }

  private:
    Vector gather(const Vector& full) const {
        Vector out(rows());
        for (std::size_t i = 0; i < indices_.size(); ++i) out[static_cast<Index>(i)] = full[indices_[i]];
        return out;
    }

    const Op& op_;
    RegionMask region_;
    std::vector<Index> indices_;
};

template <DifferentiableOperator Op>
RestrictedOperator<Op> restrict_to_region(const Op& op, const RegionMask& region) {
    return RestrictedOperator<Op>(op, region);
}

// Restricting a restriction collapses onto the original base operator, so
// chained restrictions and a single restriction to the sub-mask are the same
// object by construction. The sub-mask must select within the current region.
template <DifferentiableOperator Op>
RestrictedOperator<Op> restrict_to_region(const RestrictedOperator<Op>& op,
                                          const RegionMask& sub) {
    if (!op.region().covers(sub))
        throw std::invalid_argument("restrict_to_region: sub-mask '" + sub.name +
                                    "' is not contained in region '" + op.region().name + "'");
    return RestrictedOperator<Op>(op.base(), sub);
}

}  // namespace hspace
