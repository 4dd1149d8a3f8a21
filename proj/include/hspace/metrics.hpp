#pragma once

// Edit-quality metrics: ROIR (change energy outside the region of interest
// divided by change energy inside it — lower means more localized), factor
// regression against the synthetic renderer's ground truth, and per-region
// change-energy profiles.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspace/core/matrix.hpp"
#include "hspace/diffusion/image.hpp"
#include "hspace/diffusion/synth.hpp"
#include "hspace/op/region.hpp"

namespace hspace {

struct EditBatch {
    std::vector<ImageTensor> originals;
    std::vector<ImageTensor> edited;
    RegionMask roi;
};

// Mean over pairs of |(1-M)(X - X')|_F / |M(X - X')|_F. Pairs with zero
// in-region change are excluded with a warning; if every pair is excluded
// the edit did nothing measurable and that is an error.
inline double roir(const EditBatch& batch, std::vector<std::string>* warnings = nullptr) {
    if (batch.originals.empty() || batch.originals.size() != batch.edited.size())
        throw std::invalid_argument("roir: batch requires equally many originals and edited images");
    const RegionMask& m = batch.roi;

    double acc = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < batch.originals.size(); ++i) {
        const ImageTensor& a = batch.originals[i];
        const ImageTensor& b = batch.edited[i];
        if (!a.same_shape(b)) throw std::invalid_argument("roir: image pair shape mismatch");
        if (a.data.size() != m.mask.size())
            throw std::invalid_argument("roir: mask shape does not match images");
        double in2 = 0.0, out2 = 0.0;
        for (std::size_t j = 0; j < a.data.size(); ++j) {
            const double d = a.data[j] - b.data[j];
            (m.mask[j] ? in2 : out2) += d * d;
        }
        if (in2 == 0.0) {
            if (warnings)
                warnings->push_back("roir: pair " + std::to_string(i) +
                                    " has zero in-ROI change; excluded");
            continue;
        }
        acc += std::sqrt(out2) / std::sqrt(in2);
        ++used;
    }
    if (used == 0) throw std::runtime_error("roir: edit had no effect in ROI");
    return acc / static_cast<double>(used);
}

// Linear least-squares map from pixels to the five renderer factors. The
// renderer is exactly affine in its factors, so on clean renders the fit is
// exact and the reported noise floor is at rounding level; on model outputs
// it serves as the attribute readout.
class FactorRegressor {
  public:
    FactorRegressor() = default;

    void fit(const std::vector<ImageTensor>& images, const DenseMatrix& factors) {
        if (images.empty()) throw std::invalid_argument("FactorRegressor: no training images");
        if (factors.rows() != static_cast<Index>(images.size()) ||
            factors.cols() != kFactorCount)
            throw std::invalid_argument("FactorRegressor: factor table shape mismatch");
        const auto n = static_cast<Index>(images.size());
        const auto d = static_cast<Index>(images.front().data.size());

        DenseMatrix phi(n, d + 1);  // pixels plus intercept column
        for (Index i = 0; i < n; ++i) {
            const auto& img = images[static_cast<std::size_t>(i)];
            if (static_cast<Index>(img.data.size()) != d)
                throw std::invalid_argument("FactorRegressor: image size mismatch");
            for (Index j = 0; j < d; ++j) phi(i, j) = img.data[static_cast<std::size_t>(j)];
            phi(i, d) = 1.0;
        }

        // Min-norm least squares through the smaller Gram matrix. The design
        // matrix is heavily rank-deficient (the corpus is affine in a handful
        // of factors), and divide-and-conquer SVDs of large rank-deficient
        // near-square matrices are fragile; a self-adjoint eigensolve on the
        // smaller Gram side is robust at any rank and cheaper.
        const double rel = static_cast<double>(std::max(n, d + 1)) *
                           std::numeric_limits<double>::epsilon();
        if (n <= d + 1) {
            DenseMatrix gram = phi * phi.transpose();  // n x n
            Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(gram);
            const Vector& ev = eig.eigenvalues();  // ascending
            const double cut = ev[n - 1] * rel * rel;
            Vector inv = Vector::Zero(n);
            for (Index i = 0; i < n; ++i)
                if (ev[i] > cut && ev[i] > 0.0) inv[i] = 1.0 / ev[i];
            // pinv(phi) * F = phi^T * V * diag(1/lambda) * V^T * F
            weights_ = phi.transpose() *
                       (eig.eigenvectors() *
                        (inv.asDiagonal() * (eig.eigenvectors().transpose() * factors)));
        } else {
            DenseMatrix gram = phi.transpose() * phi;  // (d+1) x (d+1)
            Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(gram);
            const Vector& ev = eig.eigenvalues();
            const double cut = ev[d] * rel * rel;
            Vector inv = Vector::Zero(d + 1);
            for (Index i = 0; i < d + 1; ++i)
                if (ev[i] > cut && ev[i] > 0.0) inv[i] = 1.0 / ev[i];
            weights_ = eig.eigenvectors() *
                       (inv.asDiagonal() *
                        (eig.eigenvectors().transpose() * (phi.transpose() * factors)));
        }

        DenseMatrix resid = phi * weights_ - factors;
        noise_floor_ = Vector(kFactorCount);
        for (Index k = 0; k < kFactorCount; ++k)
            noise_floor_[k] = std::sqrt(resid.col(k).squaredNorm() / static_cast<double>(n));
        pixel_dim_ = d;
        fitted_ = true;
    }

    void fit(const FaceDataset& ds) { fit(ds.images, ds.factors); }

    bool fitted() const { return fitted_; }
    const Vector& noise_floor() const {
        require_fitted();
        return noise_floor_;
    }

    Vector predict(const ImageTensor& img) const {
        require_fitted();
        if (static_cast<Index>(img.data.size()) != pixel_dim_)
            throw std::invalid_argument("FactorRegressor::predict: image size mismatch");
        Vector phi(pixel_dim_ + 1);
        for (Index j = 0; j < pixel_dim_; ++j) phi[j] = img.data[static_cast<std::size_t>(j)];
        phi[pixel_dim_] = 1.0;
        return weights_.transpose() * phi;
    }

    // Coefficient of determination per factor on a labelled set.
    Vector r_squared(const std::vector<ImageTensor>& images, const DenseMatrix& factors) const {
        require_fitted();
        const auto n = static_cast<Index>(images.size());
        Vector out(kFactorCount);
        for (Index k = 0; k < kFactorCount; ++k) {
            const double mean = factors.col(k).mean();
            double ss_res = 0.0, ss_tot = 0.0;
            for (Index i = 0; i < n; ++i) {
                const double pred = predict(images[static_cast<std::size_t>(i)])[k];
                ss_res += (factors(i, k) - pred) * (factors(i, k) - pred);
                ss_tot += (factors(i, k) - mean) * (factors(i, k) - mean);
            }
            out[k] = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
        }
        return out;
    }

  private:
    void require_fitted() const {
        if (!fitted_) throw std::logic_error("FactorRegressor: regressor not fitted");
    }

    DenseMatrix weights_;  // (pixels+1) × 5
    Vector noise_floor_;
    Index pixel_dim_ = 0;
    bool fitted_ = false;
};

// Regressed factor values of the edited image minus the original.
inline Vector factor_delta(const ImageTensor& original, const ImageTensor& edited,
                           const FactorRegressor& regressor) {
    if (!original.same_shape(edited)) throw std::invalid_argument("factor_delta: shape mismatch");
    return regressor.predict(edited) - regressor.predict(original);
}

// |m_i (X - X')|_F^2 per region; over a partition these sum exactly to the
// total change energy.
inline std::vector<double> region_energy_profile(const ImageTensor& original,
                                                 const ImageTensor& edited,
                                                 const RegionSet& regions) {
    if (!original.same_shape(edited))
        throw std::invalid_argument("region_energy_profile: shape mismatch");
    std::vector<double> out;
    out.reserve(regions.size());
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const RegionMask& m = regions[r];
        if (m.mask.size() != original.data.size())
            throw std::invalid_argument("region_energy_profile: mask shape mismatch");
        double e = 0.0;
        for (std::size_t j = 0; j < m.mask.size(); ++j) {
            if (!m.mask[j]) continue;
            const double d = original.data[j] - edited.data[j];
            e += d * d;
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace hspace
