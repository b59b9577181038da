#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "mcev/chain.hpp"
#include "mcev/errors.hpp"
#include "mcev/pipeline.hpp"
#include "mcev/rng.hpp"

namespace mcev {

/// Synthetic Gaussian inference problem with a closed-form evidence:
/// n_data i.i.d. draws x_i ~ N(mu_true, Sigma); the model parameters are the m
/// components of the mean, with a unit (improper-uniform) prior.
struct GaussianBenchmark {
    int m = 0;
    int n_data = 0;
    Eigen::MatrixXd sigma;          // m x m, positive definite
    Eigen::MatrixXd data;           // n_data x m
    Eigen::VectorXd sample_mean;    // column mean of data
    double log_analytic_evidence = 0.0;
    std::uint64_t seed = 0;

    // cached pieces of the likelihood
    Eigen::MatrixXd sigma_factor;   // lower triangular, Sigma = L L^T
    double log_det_2pi_sigma = 0.0; // ln |2 pi Sigma|
    double resid_quad = 0.0;        // sum_i (x_i - xbar)^T Sigma^{-1} (x_i - xbar)
};

namespace detail {

inline Eigen::VectorXd standard_normal_vector(Eigen::Index m, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) z[i] = normal(rng);
    return z;
}

} // namespace detail

/// Sigma = A^T A for a random matrix A with i.i.d. standard-normal entries.
inline Eigen::MatrixXd random_covariance(int m, std::uint64_t seed) {
    if (m < 1) throw ValidationError("dimension must be >= 1");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd a(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) a(i, j) = normal(rng);
    return a.transpose() * a;
}

/// n i.i.d. rows from N(mu_true, sigma), via the lower-triangular factor.
inline Eigen::MatrixXd generate_data(int n, const Eigen::VectorXd& mu_true,
                                     const Eigen::MatrixXd& sigma, std::uint64_t seed) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw NumericError("data covariance is not positive definite");
    const Eigen::MatrixXd factor = llt.matrixL();
    Rng rng = make_rng(seed);
    Eigen::MatrixXd data(n, mu_true.size());
    for (int i = 0; i < n; ++i)
        data.row(i) = (mu_true + factor * detail::standard_normal_vector(mu_true.size(), rng)).transpose();
    return data;
}

/// ln integral of the likelihood over all of mu-space, by Gaussian integration
/// of the completed square:
///   ln E = -((n-1)/2) ln |2 pi Sigma| - (m/2) ln n - resid_quad / 2.
inline double analytic_log_evidence(const GaussianBenchmark& bench) {
    const double n = bench.n_data;
    return -0.5 * (n - 1.0) * bench.log_det_2pi_sigma -
           0.5 * bench.m * std::log(n) - 0.5 * bench.resid_quad;
}

inline GaussianBenchmark make_benchmark(int m, int n_data, std::uint64_t seed) {
    if (n_data < 1) throw ValidationError("need at least one data vector");
    GaussianBenchmark bench;
    bench.m = m;
    bench.n_data = n_data;
    bench.seed = seed;
    bench.sigma = random_covariance(m, derive_seed(seed, 0xc0));
    bench.data = generate_data(n_data, Eigen::VectorXd::Zero(m), bench.sigma,
                               derive_seed(seed, 0xda));
    bench.sample_mean = bench.data.colwise().mean();

    Eigen::LLT<Eigen::MatrixXd> llt(bench.sigma);
    if (llt.info() != Eigen::Success)
        throw NumericError("benchmark covariance is not positive definite");
    bench.sigma_factor = llt.matrixL();
    bench.log_det_2pi_sigma =
        m * std::log(2.0 * M_PI) + 2.0 * bench.sigma_factor.diagonal().array().log().sum();
    Eigen::MatrixXd centered = bench.data.rowwise() - bench.sample_mean.transpose();
    Eigen::MatrixXd solved = bench.sigma_factor.triangularView<Eigen::Lower>().solve(centered.transpose());
    bench.resid_quad = solved.squaredNorm();
    bench.log_analytic_evidence = analytic_log_evidence(bench);
    return bench;
}

/// Log likelihood of the mean vector, via the completed-square form with the
/// cached triangular factor.
inline double log_likelihood(const Eigen::VectorXd& mu, const GaussianBenchmark& bench) {
    if (mu.size() != bench.m) throw ValidationError("mean vector dimension mismatch");
    const Eigen::VectorXd d =
        bench.sigma_factor.triangularView<Eigen::Lower>().solve(mu - bench.sample_mean);
    return -0.5 * bench.n_data * bench.log_det_2pi_sigma -
           0.5 * bench.n_data * d.squaredNorm() - 0.5 * bench.resid_quad;
}

/// N i.i.d. draws from the posterior N(xbar, Sigma/n); log_target records the
/// likelihood itself (unit prior), all weights 1.
inline Chain sample_posterior_direct(std::size_t N, const GaussianBenchmark& bench,
                                     std::uint64_t seed) {
    if (N < 2) throw ValidationError("need at least 2 posterior samples");
    const double root_n = std::sqrt(static_cast<double>(bench.n_data));
    Rng rng = make_rng(seed);
    Chain chain;
    chain.parameters.resize(static_cast<Eigen::Index>(N), bench.m);
    chain.log_target.resize(static_cast<Eigen::Index>(N));
    chain.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(N));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(N); ++i) {
        const Eigen::VectorXd mu =
            bench.sample_mean +
            (bench.sigma_factor * detail::standard_normal_vector(bench.m, rng)) / root_n;
        chain.parameters.row(i) = mu.transpose();
        chain.log_target[i] = log_likelihood(mu, bench);
    }
    return chain;
}

/// Importance sampling from N(xbar, inflation * Sigma/n).  Weights carry the
/// likelihood-to-proposal ratio, so the weighted estimator targets the same E.
inline Chain sample_posterior_importance(std::size_t N, const GaussianBenchmark& bench,
                                         double inflation, std::uint64_t seed) {
    if (N < 2) throw ValidationError("need at least 2 posterior samples");
    if (!(inflation > 0.0)) throw ValidationError("covariance inflation must be positive");
    const double scale = std::sqrt(inflation / static_cast<double>(bench.n_data));
    const double log_det_q = bench.m * std::log(2.0 * M_PI * inflation / bench.n_data) +
                             (bench.log_det_2pi_sigma - bench.m * std::log(2.0 * M_PI));
    Rng rng = make_rng(seed);
    Chain chain;
    chain.parameters.resize(static_cast<Eigen::Index>(N), bench.m);
    chain.log_target.resize(static_cast<Eigen::Index>(N));
    chain.weights.resize(static_cast<Eigen::Index>(N));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(N); ++i) {
        const Eigen::VectorXd z = detail::standard_normal_vector(bench.m, rng);
        const Eigen::VectorXd mu = bench.sample_mean + scale * (bench.sigma_factor * z);
        const double log_q = -0.5 * log_det_q - 0.5 * z.squaredNorm();
        const double log_p = log_likelihood(mu, bench);
        chain.parameters.row(i) = mu.transpose();
        chain.log_target[i] = log_p;
        chain.weights[i] = log_p - log_q;  // log weight for now; rescaled below
    }
    // The raw ratio p/q carries the full-data likelihood scale and underflows
    // double precision; the estimate only sees weight ratios, so centre on the
    // largest log weight before exponentiating.
    const double log_w_max = chain.weights.maxCoeff();
    chain.weights = (chain.weights.array() - log_w_max).exp();
    return chain;
}

struct MhChain {
    Chain chain;
    double acceptance_rate = 0.0;
};

/// Random-walk Metropolis targeting the same posterior, with proposal
/// N(0, (proposal_scale^2) Sigma/n).  Produces the correlated, duplicate-bearing
/// chains that the thinning and compaction stages exist for.
inline MhChain sample_posterior_mh(std::size_t N, const GaussianBenchmark& bench,
                                   double proposal_scale, std::uint64_t seed) {
    if (N < 2) throw ValidationError("need at least 2 posterior samples");
    if (!(proposal_scale > 0.0)) throw ValidationError("proposal scale must be positive");
    const double step = proposal_scale / std::sqrt(static_cast<double>(bench.n_data));
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    MhChain out;
    out.chain.parameters.resize(static_cast<Eigen::Index>(N), bench.m);
    out.chain.log_target.resize(static_cast<Eigen::Index>(N));
    out.chain.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(N));

    Eigen::VectorXd current = bench.sample_mean;
    double current_lp = log_likelihood(current, bench);
    std::size_t accepted = 0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(N); ++i) {
        const Eigen::VectorXd proposal =
            current + step * (bench.sigma_factor * detail::standard_normal_vector(bench.m, rng));
        const double proposal_lp = log_likelihood(proposal, bench);
        if (std::log(unif(rng)) < proposal_lp - current_lp) {
            current = proposal;
            current_lp = proposal_lp;
            ++accepted;
        }
        out.chain.parameters.row(i) = current.transpose();
        out.chain.log_target[i] = current_lp;
    }
    out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(N);
    return out;
}

struct SweepRecord {
    int m = 0;
    std::size_t n_samples = 0;
    int k = 1;
    bool whitened = true;
    int repeat = 0;
    std::uint64_t seed = 0;
    double log_ratio = 0.0;  // log_map - log_analytic_evidence
    double sigma_frac = 0.0;
    double runtime_seconds = 0.0;
};

/// Fresh benchmark + direct posterior samples + full pipeline for every
/// (m, N, k, whitened, repeat) cell.  Each cell's seed derives from the master
/// seed and the cell coordinates, so any cell reproduces in isolation.
inline std::vector<SweepRecord> run_sweep(const std::vector<int>& dims,
                                          const std::vector<std::size_t>& chain_lengths,
                                          const std::vector<int>& ks,
                                          const std::vector<bool>& whiten_flags, int repeats,
                                          std::uint64_t seed, int n_data = 1000,
                                          KnnBackend backend = KnnBackend::automatic) {
    if (dims.empty() || chain_lengths.empty() || ks.empty() || whiten_flags.empty() || repeats < 1)
        throw ValidationError("sweep lists must be non-empty and repeats >= 1");
    std::vector<SweepRecord> records;
    for (int m : dims)
        for (std::size_t n : chain_lengths)
            for (int k : ks)
                for (bool wh : whiten_flags)
                    for (int rep = 0; rep < repeats; ++rep) {
                        SweepRecord rec;
                        rec.m = m;
                        rec.n_samples = n;
                        rec.k = k;
                        rec.whitened = wh;
                        rec.repeat = rep;
                        rec.seed = derive_seed(seed, static_cast<std::uint64_t>(m),
                                               static_cast<std::uint64_t>(n),
                                               static_cast<std::uint64_t>(k), wh ? 1u : 0u,
                                               static_cast<std::uint64_t>(rep));
                        const auto t0 = std::chrono::steady_clock::now();
                        const GaussianBenchmark bench =
                            make_benchmark(m, n_data, derive_seed(rec.seed, 1));
                        const Chain chain = sample_posterior_direct(n, bench, derive_seed(rec.seed, 2));
                        EstimateOptions opt;
                        opt.k = k;
                        opt.whiten = wh;
                        opt.backend = backend;
                        const EstimateResult res = estimate_evidence(chain, opt);
                        rec.log_ratio = res.posterior.log_map - bench.log_analytic_evidence;
                        rec.sigma_frac = res.posterior.sigma_frac;
                        rec.runtime_seconds =
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                        records.push_back(rec);
                    }
    return records;
}

inline void write_sweep_csv(const std::vector<SweepRecord>& records, std::ostream& out) {
    out << "m,N,k,whitened,repeat,seed,log_ratio,sigma_frac,runtime_seconds\n";
    char buf[32];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        out.write(buf, ptr - buf);
    };
    for (const auto& r : records) {
        out << r.m << ',' << r.n_samples << ',' << r.k << ',' << (r.whitened ? 1 : 0) << ','
            << r.repeat << ',' << r.seed << ',';
        put(r.log_ratio);
        out << ',';
        put(r.sigma_frac);
        out << ',';
        put(r.runtime_seconds);
        out << '\n';
    }
}

} // namespace mcev
