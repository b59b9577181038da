#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "mcev/chain.hpp"
#include "mcev/errors.hpp"

namespace mcev {

/// Affine map taking chain coordinates to unit-covariance ("whitened") ones:
/// y = L^{-1} (theta - mean), with C = L L^T the chain covariance.
struct Whitening {
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;   // lower triangular, strictly positive diagonal
    double log_jacobian = 0.0; // (1/2) ln det C = sum_i ln L_ii
    Eigen::Index dimension = 0;
    bool conditioning_warning = false;

    static Whitening identity(Eigen::Index m) {
        Whitening w;
        w.mean = Eigen::VectorXd::Zero(m);
        w.factor = Eigen::MatrixXd::Identity(m, m);
        w.log_jacobian = 0.0;
        w.dimension = m;
        return w;
    }
};

/// Weighted sample mean and covariance (normalised by the weight sum W).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> weighted_mean_cov(const Chain& chain) {
    const double W = chain.weight_sum();
    const Eigen::VectorXd mean = chain.parameters.transpose() * chain.weights / W;
    Eigen::MatrixXd centered = chain.parameters.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * (chain.weights.asDiagonal() * centered) / W;
    cov = 0.5 * (cov + cov.transpose().eval());
    for (Eigen::Index j = 0; j < cov.rows(); ++j)
        if (cov(j, j) <= 0.0)
            throw ValidationError("parameter column " + std::to_string(j) +
                                  " has zero variance; covariance is singular");
    return {mean, cov};
}

/// Cholesky-factor the covariance.  If it is not numerically positive definite,
/// fall back to an eigendecomposition with floored eigenvalues and set
/// conditioning_warning.
inline Whitening fit_whitening(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mean) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
        throw ValidationError("covariance/mean dimensions disagree");
    Whitening w;
    w.mean = mean;
    w.dimension = cov.rows();

    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        w.factor = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success)
            throw NumericError("eigendecomposition of the covariance failed");
        const double max_eig = es.eigenvalues().maxCoeff();
        if (!(max_eig > 0.0))
            throw NumericError("covariance has no positive eigenvalue (largest = " +
                               std::to_string(max_eig) + ")");
        const double floor = 1e-12 * max_eig;
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
        Eigen::MatrixXd repaired = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        Eigen::LLT<Eigen::MatrixXd> llt2(repaired);
        if (llt2.info() != Eigen::Success)
            throw NumericError("covariance not positive definite even after eigenvalue flooring");
        w.factor = llt2.matrixL();
        w.conditioning_warning = true;
    }
    w.log_jacobian = w.factor.diagonal().array().log().sum();
    if (!std::isfinite(w.log_jacobian))
        throw NumericError("non-finite whitening log-Jacobian");
    return w;
}

inline Whitening fit_whitening(const Chain& chain) {
    auto [mean, cov] = weighted_mean_cov(chain);
    return fit_whitening(cov, mean);
}

/// Map every chain row through the whitening transform (triangular solve per row).
inline Eigen::MatrixXd apply_whitening(const Whitening& w, const Chain& chain) {
    if (chain.dim() != w.dimension)
        throw ValidationError("chain dimension " + std::to_string(chain.dim()) +
                              " does not match whitening dimension " + std::to_string(w.dimension));
    Eigen::MatrixXd centered = (chain.parameters.rowwise() - w.mean.transpose()).transpose();
    w.factor.triangularView<Eigen::Lower>().solveInPlace(centered);
    return centered.transpose();
}

} // namespace mcev
