#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mcev/errors.hpp"
#include "mcev/knn.hpp"

namespace mcev {

/// Posterior over the marginal likelihood E, kept in log form.  Under the
/// Jeffreys prior it is inverse-gamma in E with shape N*k and scale exp(log_scale):
///   ln p(E | D) = cst - (N k + 1) ln E - exp(log_scale) / E.
struct EvidencePosterior {
    std::size_t n_points = 0;
    int k = 1;
    double log_weight_sum = 0.0;  // ln W
    double shape = 0.0;           // N * k
    double log_scale = 0.0;       // ln beta
    double log_map = 0.0;         // log_scale - ln(N k + 1)
    double sigma_frac = 0.0;      // 1 / sqrt(N k + 1)
    double sigma_frac_conservative = 0.0;  // sqrt(2) * sigma_frac
};

/// Sampling-resolution indicator (alpha_m N)^(-1/m); values above 0.5 signal
/// neighbour distances too large for the local-constant-density assumption.
struct ResolutionDiagnostic {
    double indicator = 0.0;
    bool threshold_exceeded = false;
};

/// Combine per-point target values, weights, and k-th neighbour distances into
/// the evidence posterior.  All accumulation happens in log space; the log-sum-exp
/// runs in fixed index order so results do not depend on thread count.
inline EvidencePosterior build_posterior(const Eigen::VectorXd& log_target,
                                         const Eigen::VectorXd& weights,
                                         const NeighborSet& neighbors, double log_jacobian,
                                         int m) {
    const Eigen::Index n = log_target.size();
    if (weights.size() != n || neighbors.distances.size() != n)
        throw ValidationError("log_target/weights/distances lengths disagree");
    if (n < neighbors.k + 1)
        throw ValidationError("need at least k+1 points to form the posterior");
    if (!std::isfinite(log_jacobian)) throw NumericError("non-finite log-Jacobian");

    const double neg_inf = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd terms(n);
    double max_term = neg_inf;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = log_ball_volume(m, std::log(neighbors.distances[i])) + log_target[i] -
                         std::log(weights[i]);
        if (std::isnan(t) || t == std::numeric_limits<double>::infinity())
            throw NumericError("non-finite evidence term at sample " + std::to_string(i));
        terms[i] = t;
        max_term = std::max(max_term, t);
    }
    if (max_term == neg_inf)
        throw ValidationError("every neighbour distance is zero; chain is degenerate");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (terms[i] != neg_inf) sum += std::exp(terms[i] - max_term);
    const double log_sum = max_term + std::log(sum);

    EvidencePosterior ep;
    ep.n_points = static_cast<std::size_t>(n);
    ep.k = neighbors.k;
    ep.log_weight_sum = std::log(weights.sum());
    ep.shape = static_cast<double>(n) * neighbors.k;
    ep.log_scale = ep.log_weight_sum + log_jacobian + log_sum;
    ep.log_map = ep.log_scale - std::log(ep.shape + 1.0);
    ep.sigma_frac = 1.0 / std::sqrt(ep.shape + 1.0);
    ep.sigma_frac_conservative = std::sqrt(2.0) * ep.sigma_frac;
    if (!std::isfinite(ep.log_map)) throw NumericError("non-finite evidence MAP");
    return ep;
}

/// Unnormalised log posterior density of E evaluated at ln E = log_E.
inline double log_posterior_density(const EvidencePosterior& ep, double log_E) {
    return -(ep.shape + 1.0) * log_E - std::exp(ep.log_scale - log_E);
}

namespace detail {

// P(E <= e^{log_E}) for the inverse-gamma posterior, via the regularized upper
// incomplete gamma function: Q(shape, beta / E).
inline double posterior_cdf(const EvidencePosterior& ep, double log_E) {
    return boost::math::gamma_q(ep.shape, std::exp(ep.log_scale - log_E));
}

inline double posterior_log_quantile(const EvidencePosterior& ep, double prob) {
    // Bracket around the MAP, expanding outward, then bisect.  The CDF is
    // strictly increasing in log_E.
    double lo = ep.log_map, hi = ep.log_map;
    double step = std::max(ep.sigma_frac, 1e-3);
    while (posterior_cdf(ep, lo) > prob) { lo -= step; step *= 2.0; }
    step = std::max(ep.sigma_frac, 1e-3);
    while (posterior_cdf(ep, hi) < prob) { hi += step; step *= 2.0; }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (posterior_cdf(ep, mid) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Equal-tailed credible interval on ln E at the given level.
inline std::pair<double, double> credible_interval(const EvidencePosterior& ep, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw ValidationError("credible level must lie in (0,1)");
    const double tail = 0.5 * (1.0 - level);
    return {detail::posterior_log_quantile(ep, tail),
            detail::posterior_log_quantile(ep, 1.0 - tail)};
}

inline ResolutionDiagnostic resolution_diagnostic(std::size_t n_points, int m) {
    if (n_points < 2) throw ValidationError("resolution diagnostic needs N >= 2");
    if (m < 1) throw ValidationError("resolution diagnostic needs m >= 1");
    const double md = static_cast<double>(m);
    const double log_alpha = 0.5 * md * std::log(M_PI) - std::lgamma(1.0 + 0.5 * md);
    ResolutionDiagnostic diag;
    diag.indicator = std::exp(-(log_alpha + std::log(static_cast<double>(n_points))) / md);
    diag.threshold_exceeded = diag.indicator > 0.5;
    return diag;
}

} // namespace mcev
