#pragma once

#include <string>
#include <vector>

#include "mcev/chain.hpp"
#include "mcev/evidence.hpp"
#include "mcev/knn.hpp"
#include "mcev/whiten.hpp"

namespace mcev {

struct EstimateOptions {
    int k = 1;
    bool whiten = true;
    KnnBackend backend = KnnBackend::automatic;
    double credible_level = 0.68;
};

struct EstimateResult {
    EvidencePosterior posterior;
    ResolutionDiagnostic resolution;
    double log_jacobian = 0.0;
    std::size_t n_used = 0;
    Eigen::Index m = 0;
    int k = 1;
    bool whitened = true;
    std::size_t zero_distance_count = 0;
    double credible_level = 0.68;
    double log_low = 0.0, log_high = 0.0;
    std::vector<std::string> warnings;
};

/// whiten (optional) -> k-th neighbour distances -> evidence posterior.
/// Preprocessing (burn-in, thinning, compaction) is the caller's business.
inline EstimateResult estimate_evidence(const Chain& chain, const EstimateOptions& opt = {}) {
    chain.validate();
    EstimateResult res;
    res.m = chain.dim();
    res.k = opt.k;
    res.whitened = opt.whiten;
    res.credible_level = opt.credible_level;

    Eigen::MatrixXd coords;
    if (opt.whiten) {
        const Whitening w = fit_whitening(chain);
        coords = apply_whitening(w, chain);
        res.log_jacobian = w.log_jacobian;
        if (w.conditioning_warning)
            res.warnings.push_back(
                "chain covariance is ill-conditioned; eigenvalues were floored before whitening");
    } else {
        coords = chain.parameters;
        res.log_jacobian = 0.0;
    }

    const NeighborSet neighbors = kth_neighbor_distances(coords, opt.k, opt.backend);
    res.zero_distance_count = neighbors.zero_distance_count;
    if (neighbors.zero_distance_count > 0)
        res.warnings.push_back(
            std::to_string(neighbors.zero_distance_count) +
            " point(s) have a zero k-th neighbour distance (exact duplicates); their terms "
            "drop out and bias the evidence low. Consider full deduplication.");

    res.posterior = build_posterior(chain.log_target, chain.weights, neighbors, res.log_jacobian,
                                    static_cast<int>(chain.dim()));
    res.n_used = res.posterior.n_points;
    res.resolution = resolution_diagnostic(res.n_used, static_cast<int>(chain.dim()));
    if (res.resolution.threshold_exceeded)
        res.warnings.push_back(
            "resolution indicator " + std::to_string(res.resolution.indicator) +
            " exceeds 0.5 (target volume taken as 1 in whitened units, approximate); expect "
            "0.1 dex or larger errors at this N and dimension");

    const auto [lo, hi] = credible_interval(res.posterior, opt.credible_level);
    res.log_low = lo;
    res.log_high = hi;
    return res;
}

} // namespace mcev
