#pragma once

// Matrix-free top-r SVD of a differentiable operator's Jacobian by subspace
// iteration on J^T J, driven purely through jvp/vjp probes:
//
//   V  <- QR(Gaussian)                 (d_h × r, orthonormal)
//   repeat:
//     U    <- J V                      (batched jvp)
//     s    <- singular values of U     (Ritz estimates of sigma_i(J))
//     Vhat <- J^T U                    (batched vjp)
//     V    <- left singular vectors of Vhat
//   until the Ritz estimates stabilize or max_iterations is hit.
//
// The returned factors come from one final Rayleigh-Ritz extraction: with
// U_fin = J V and thin SVD U_fin = P diag(S) W^T, the triple
// (U = P, S, V <- V W) satisfies J V = U diag(S) with orthonormal U and V, so
// U diag(S) V^T is the rank-r approximation of J restricted to span(V).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/core/rng.hpp"
#include "hspace/linalg.hpp"
#include "hspace/op/operator.hpp"

namespace hspace {

struct SubspaceIterationConfig {
    Index rank = 16;
    int max_iterations = 100;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
};

enum class TerminationReason { tolerance, max_iterations };

inline const char* to_string(TerminationReason r) {
    return r == TerminationReason::tolerance ? "tolerance" : "max_iterations";
}

struct SubspaceIterationHistory {
    // Ritz estimates sigma_i(J V) per iteration, each nonincreasing within an
    // iteration and (on linear operators) nondecreasing across iterations.
    std::vector<Vector> singular_values;
    // relative_change[k] compares iterations k and k+1:
    //   max_i |s_i^{(k+1)} - s_i^{(k)}| / s_1^{(k+1)}.
    std::vector<double> relative_change;
    TerminationReason terminated_by = TerminationReason::max_iterations;
    int iterations = 0;
};

struct SubspaceIterationResult {
    linalg::SvdFactors factors;
    SubspaceIterationHistory history;
};

struct ConvergenceReport {
    int iterations = 0;
    std::string terminated_by;
    Vector final_singular_values;
    std::vector<double> relative_change;
    double final_relative_change = 0.0;
};

inline ConvergenceReport convergence_report(const SubspaceIterationHistory& history) {
    if (history.singular_values.empty())
        throw std::invalid_argument("convergence_report: no iterations recorded");
    ConvergenceReport rep;
    rep.iterations = history.iterations;
    rep.terminated_by = to_string(history.terminated_by);
    rep.final_singular_values = history.singular_values.back();
    rep.relative_change = history.relative_change;
    rep.final_relative_change =
        history.relative_change.empty() ? 0.0 : history.relative_change.back();
    return rep;
}

template <DifferentiableOperator Op>
SubspaceIterationResult subspace_iteration(const Op& op, const SubspaceIterationConfig& config) {
    const Index m = op.rows();
    const Index n = op.cols();
    if (config.rank < 1) throw std::invalid_argument("subspace_iteration: rank must be >= 1");
    if (config.rank > std::min(m, n))
        throw std::invalid_argument("subspace_iteration: rank " + std::to_string(config.rank) +
                                    " exceeds operator dimensions " + std::to_string(m) + "x" +
                                    std::to_string(n));
    if (!(config.tolerance > 0.0))
        throw std::invalid_argument("subspace_iteration: tolerance must be > 0");
    if (config.max_iterations < 1)
        throw std::invalid_argument("subspace_iteration: max_iterations must be >= 1");

    Rng rng(config.seed);
    DenseMatrix v = linalg::reduced_qr(rng.normal_matrix(n, config.rank)).q;

    SubspaceIterationHistory history;
    Vector prev_s;
    DenseMatrix u;
    for (int k = 0; k < config.max_iterations; ++k) {
        u = jvp_block(op, v);
        if (!all_finite(u))
            throw std::runtime_error("subspace_iteration: jvp probe returned non-finite values");
        Vector s = Eigen::BDCSVD<DenseMatrix>(u).singularValues();
        history.singular_values.push_back(s);
        ++history.iterations;

        if (prev_s.size() > 0) {
            const double denom = std::max(s[0], 1e-300);
            const double change = (s - prev_s).cwiseAbs().maxCoeff() / denom;
            history.relative_change.push_back(change);
            if (change < config.tolerance) {
                history.terminated_by = TerminationReason::tolerance;
                break;
            }
        }
        prev_s = s;

        DenseMatrix vhat = vjp_block(op, u);
        if (!all_finite(vhat))
            throw std::runtime_error("subspace_iteration: vjp probe returned non-finite values");
        v = linalg::reduced_svd(vhat).u;
    }

    // Rayleigh-Ritz extraction from the last subspace and its image J V. The
    // loop may have updated v after the last recorded u, so refresh the image
    // (bit-identical when the loop broke on tolerance, since probes are
    // deterministic).
    u = jvp_block(op, v);
    Eigen::BDCSVD<DenseMatrix> fin(u, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SubspaceIterationResult out;
    out.factors.u = fin.matrixU();
    out.factors.s = fin.singularValues();
    out.factors.v = v * fin.matrixV();
    linalg::fix_signs(out.factors.u, out.factors.v);
    out.history = std::move(history);
    return out;
}

}  // namespace hspace
