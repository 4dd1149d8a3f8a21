#pragma once

// Joint and Individual Variation Explained (JIVE) decomposition of stacked
// dimension-reduced Jacobian blocks.
//
// Given blocks X^(1..N) (each r × d_h), JIVE splits X^(i) = C^(i) + A^(i) + R
// where the stacked joint part C has rank <= r_C with one shared row space,
// each individual part A^(i) has rank <= r_A^(i), and Row(A^(i)) is
// orthogonal to Row(C). Alternating scheme:
//
//   X_joint <- X
//   repeat:
//     C        <- best rank-r_C approximation of stacked X_joint
//     V        <- orthonormal basis of Row(C)
//     A^(i)    <- best rank-r_A^(i) approximation of (X^(i) - C^(i))(I - VV^T)
//     X_joint  <- X - A
//   until (|dC|_F + sum_i |dA^(i)|_F) / |X|_F < tolerance or max_iterations.
//
// Each step solves its subproblem optimally, so the residual |X - C - A|_F is
// nonincreasing; the (I - VV^T) projection enforces C A^(i)T = 0 at every
// iteration, not just at convergence. Blocks are used as-is (no row
// centering): Jacobian rows are probe responses, not samples with a mean.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/direction.hpp"
#include "hspace/linalg.hpp"

namespace hspace {

struct ReducedJacobianBlock {
    std::string region;
    DenseMatrix matrix;  // r × d_h, rows scaled so column geometry matches U S V^T
};

// diag(S) V^T. Left-multiplying U S V^T by U^T preserves all column inner
// products (U has orthonormal columns), so Euclidean distances between
// columns of the rank-r Jacobian approximation survive the reduction.
inline ReducedJacobianBlock dimension_reduce(const linalg::SvdFactors& factors,
                                             std::string region) {
    ReducedJacobianBlock block;
    block.region = std::move(region);
    block.matrix = factors.s.asDiagonal() * factors.v.transpose();
    return block;
}

struct JiveConfig {
    Index joint_rank = 8;
    std::vector<Index> individual_ranks;  // one per block; broadcast if size 1
    int max_iterations = 500;
    double tolerance = 1e-8;
};

struct JiveDecomposition {
    std::vector<std::string> regions;
    DenseMatrix joint;                    // stacked C, (sum of block rows) × d_h
    std::vector<DenseMatrix> individual;  // A^(i), each block_rows × d_h
    Index joint_rank = 0;
    std::vector<Index> individual_ranks;
    std::vector<Index> block_rows;        // row count of each input block
    std::vector<double> residual_history;       // |X - C - A|_F per iteration
    std::vector<double> orthogonality_history;  // max_i |C A^(i)T|_max per iteration
    int iterations = 0;
    bool converged = false;
    double final_change = 0.0;  // last (|dC|+sum|dA|)/|X|_F value
    std::vector<std::string> warnings;

    Index block_index(const std::string& region) const {
        for (std::size_t i = 0; i < regions.size(); ++i)
            if (regions[i] == region) return static_cast<Index>(i);
        throw std::invalid_argument("JiveDecomposition: unknown region '" + region + "'");
    }

    // Rows of the stacked matrices belonging to block i.
    std::pair<Index, Index> block_span(Index i) const {
        Index start = 0;
        for (Index k = 0; k < i; ++k) start += block_rows[static_cast<std::size_t>(k)];
        return {start, block_rows[static_cast<std::size_t>(i)]};
    }
};

namespace detail {

// Best rank-k approximation via truncated SVD; rank 0 gives the zero matrix.
inline DenseMatrix rank_truncate(const DenseMatrix& m, Index k) {
    if (k == 0) return DenseMatrix::Zero(m.rows(), m.cols());
    linalg::SvdFactors f = linalg::reduced_svd(m, k);
    return linalg::reconstruct(f);
}

}  // namespace detail

inline JiveDecomposition jive(const std::vector<ReducedJacobianBlock>& blocks,
                              const JiveConfig& config) {
    if (blocks.empty()) throw std::invalid_argument("jive: no blocks");
    const Index d = blocks.front().matrix.cols();
    Index total_rows = 0;
    for (const auto& b : blocks) {
        if (b.matrix.cols() != d)
            throw std::invalid_argument("jive: block '" + b.region + "' has " +
                                        std::to_string(b.matrix.cols()) +
                                        " columns, expected " + std::to_string(d));
        require_finite(b.matrix, "jive block '" + b.region + "'");
        total_rows += b.matrix.rows();
    }

    const auto n = static_cast<Index>(blocks.size());
    std::vector<Index> r_a = config.individual_ranks;
    if (r_a.empty()) throw std::invalid_argument("jive: individual_ranks empty");
    if (static_cast<Index>(r_a.size()) == 1 && n > 1) r_a.resize(static_cast<std::size_t>(n), r_a[0]);
    if (static_cast<Index>(r_a.size()) != n)
        throw std::invalid_argument("jive: expected 1 or " + std::to_string(n) +
                                    " individual ranks, got " + std::to_string(r_a.size()));

    const Index r_c = config.joint_rank;
    Index max_ra = 0;
    for (Index r : r_a) {
        if (r < 0) throw std::invalid_argument("jive: individual rank must be >= 0");
        max_ra = std::max(max_ra, r);
    }
    if (r_c < 0) throw std::invalid_argument("jive: joint rank must be >= 0");
    if (r_c + max_ra > std::min(total_rows, d))
        throw std::invalid_argument("jive: joint rank " + std::to_string(r_c) +
                                    " plus max individual rank " + std::to_string(max_ra) +
                                    " exceeds min(total rows, columns) = " +
                                    std::to_string(std::min(total_rows, d)));
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (r_a[i] > std::min(blocks[i].matrix.rows(), d))
            throw std::invalid_argument("jive: individual rank for block '" + blocks[i].region +
                                        "' exceeds its dimensions");

    // Stack the input once; all block views below address rows of this.
    DenseMatrix x(total_rows, d);
    std::vector<Index> starts(blocks.size());
    {
        Index row = 0;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            starts[i] = row;
            x.middleRows(row, blocks[i].matrix.rows()) = blocks[i].matrix;
            row += blocks[i].matrix.rows();
        }
    }
    const double x_norm = std::max(x.norm(), 1e-300);

    JiveDecomposition out;
    for (const auto& b : blocks) out.regions.push_back(b.region);
    out.joint_rank = r_c;
    out.individual_ranks = r_a;
    for (const auto& b : blocks) out.block_rows.push_back(b.matrix.rows());

    DenseMatrix c = DenseMatrix::Zero(total_rows, d);
    std::vector<DenseMatrix> a(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
        a[i] = DenseMatrix::Zero(blocks[i].matrix.rows(), d);

    DenseMatrix x_joint = x;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        DenseMatrix c_new = detail::rank_truncate(x_joint, r_c);
        DenseMatrix v = linalg::row_space_basis(c_new, r_c);  // d × rank(C)

        double change = c_new.norm() == 0.0 && c.norm() == 0.0 ? 0.0 : (c_new - c).norm();
        double ortho = 0.0;
        std::vector<DenseMatrix> a_new(blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            DenseMatrix resid = x.middleRows(starts[i], out.block_rows[i]) -
                                c_new.middleRows(starts[i], out.block_rows[i]);
            if (v.cols() > 0) resid -= (resid * v) * v.transpose();
            a_new[i] = detail::rank_truncate(resid, r_a[i]);
            change += (a_new[i] - a[i]).norm();
            if (c_new.size() > 0 && a_new[i].size() > 0) {
                DenseMatrix cross = c_new * a_new[i].transpose();
                ortho = std::max(ortho, cross.cwiseAbs().maxCoeff());
            }
        }

        c = std::move(c_new);
        a = std::move(a_new);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            x_joint.middleRows(starts[i], out.block_rows[i]) =
                x.middleRows(starts[i], out.block_rows[i]) - a[i];

        DenseMatrix approx = c;
        for (std::size_t i = 0; i < blocks.size(); ++i)
            approx.middleRows(starts[i], out.block_rows[i]) += a[i];
        out.residual_history.push_back((x - approx).norm());
        out.orthogonality_history.push_back(ortho);
        ++out.iterations;

        out.final_change = change / x_norm;
        if (out.final_change < config.tolerance) {
            out.converged = true;
            break;
        }
    }

    if (blocks.size() == 1)
        out.warnings.push_back(
            "single input block: the joint/individual split degenerates to dividing one matrix "
            "into two mutually orthogonal row spaces");
    if (!out.converged)
        out.warnings.push_back("did not converge in " + std::to_string(config.max_iterations) +
                               " iterations; final residual " +
                               std::to_string(out.residual_history.back()) +
                               ", final relative change " + std::to_string(out.final_change));

    out.joint = std::move(c);
    out.individual = std::move(a);
    return out;
}

// Top-k right singular vectors of the stacked joint component.
inline std::vector<SemanticDirection> joint_directions(const JiveDecomposition& d, Index k) {
    if (k < 1 || k > d.joint_rank)
        throw std::invalid_argument("joint_directions: k must be in [1, " +
                                    std::to_string(d.joint_rank) + "]");
    linalg::SvdFactors f = linalg::reduced_svd(d.joint, k);
    std::vector<SemanticDirection> dirs;
    for (Index i = 0; i < k; ++i) {
        SemanticDirection s;
        s.v = f.v.col(i);
        s.v /= s.v.norm();
        s.component = DirectionComponent::joint;
        s.rank_index = static_cast<int>(i);
        dirs.push_back(std::move(s));
    }
    return dirs;
}

// Top-k right singular vectors of one region's individual component.
inline std::vector<SemanticDirection> individual_directions(const JiveDecomposition& d,
                                                            const std::string& region, Index k) {
    const Index bi = d.block_index(region);
    const Index r_a = d.individual_ranks[static_cast<std::size_t>(bi)];
    if (k < 1 || k > r_a)
        throw std::invalid_argument("individual_directions: k must be in [1, " +
                                    std::to_string(r_a) + "] for region '" + region + "'");
    linalg::SvdFactors f = linalg::reduced_svd(d.individual[static_cast<std::size_t>(bi)], k);
    std::vector<SemanticDirection> dirs;
    for (Index i = 0; i < k; ++i) {
        SemanticDirection s;
        s.v = f.v.col(i);
        s.v /= s.v.norm();
        s.component = DirectionComponent::individual;
        s.region = region;
        s.rank_index = static_cast<int>(i);
        dirs.push_back(std::move(s));
    }
    return dirs;
}

}  // namespace hspace
