#include <catch2/catch_amalgamated.hpp>

#include <boost/math/quadrature/trapezoidal.hpp>
#include <random>

#include "mcev/evidence.hpp"
#include "mcev/pipeline.hpp"
#include "mcev/rng.hpp"

using namespace mcev;

namespace {

NeighborSet neighbors_from(const std::vector<double>& d, int k = 1) {
    NeighborSet ns;
    ns.k = k;
    ns.distances = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    ns.zero_distance_count = static_cast<std::size_t>(
        std::count(d.begin(), d.end(), 0.0));
    return ns;
}

EvidencePosterior random_posterior(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int n = 50 + static_cast<int>(unif(rng) * 200);
    std::vector<double> d(static_cast<std::size_t>(n));
    Eigen::VectorXd lt(n), w(n);
    for (int i = 0; i < n; ++i) {
        d[static_cast<std::size_t>(i)] = 0.01 + unif(rng);
        lt[i] = -5.0 + 10.0 * unif(rng);
        w[i] = 0.5 + unif(rng);
    }
    return build_posterior(lt, w, neighbors_from(d), 0.3, 3);
}

} // namespace

TEST_CASE("build_posterior: direct substitution checks") {
    SECTION("N=2, k=1, V_m(D)=0.5 each -> E_MAP = 2/3") {
        // m=1: V_1(D) = 2D, so D = 0.25 gives V = 0.5.
        Eigen::VectorXd lt = Eigen::VectorXd::Zero(2);   // p-tilde = 1
        Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
        const EvidencePosterior ep = build_posterior(lt, w, neighbors_from({0.25, 0.25}), 0.0, 1);
        CHECK(std::exp(ep.log_map) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(ep.shape == 2.0);
        CHECK(ep.log_map == ep.log_scale - std::log(ep.shape + 1.0));
    }
    SECTION("sigma_frac for N=1e5, k=1") {
        Eigen::VectorXd lt = Eigen::VectorXd::Zero(100000);
        Eigen::VectorXd w = Eigen::VectorXd::Ones(100000);
        std::vector<double> d(100000, 0.1);
        const EvidencePosterior ep = build_posterior(lt, w, neighbors_from(d), 0.0, 2);
        CHECK(ep.sigma_frac == Catch::Approx(1.0 / std::sqrt(100001.0)).epsilon(1e-12));
        CHECK(ep.sigma_frac_conservative == Catch::Approx(std::sqrt(2.0) * ep.sigma_frac));
    }
    SECTION("weight scaling by c=10 leaves log_map unchanged") {
        Rng rng = make_rng(41);
        std::uniform_real_distribution<double> unif(0.1, 2.0);
        const int n = 100;
        std::vector<double> d(n);
        Eigen::VectorXd lt(n), w(n);
        for (int i = 0; i < n; ++i) {
            d[static_cast<std::size_t>(i)] = unif(rng);
            lt[i] = unif(rng);
            w[i] = unif(rng);
        }
        const EvidencePosterior a = build_posterior(lt, w, neighbors_from(d), 0.0, 4);
        const EvidencePosterior b = build_posterior(lt, (10.0 * w).eval(), neighbors_from(d), 0.0, 4);
        CHECK(std::abs(a.log_map - b.log_map) <= 1e-12 * std::abs(a.log_map) + 1e-12);
        CHECK(a.sigma_frac == b.sigma_frac);
    }
    SECTION("all-zero distances are degenerate") {
        Eigen::VectorXd lt = Eigen::VectorXd::Zero(3);
        Eigen::VectorXd w = Eigen::VectorXd::Ones(3);
        CHECK_THROWS_AS(build_posterior(lt, w, neighbors_from({0.0, 0.0, 0.0}), 0.0, 1),
                        ValidationError);
    }
    SECTION("non-finite log_target is a numeric error") {
        Eigen::VectorXd lt(2);
        lt << 0.0, std::numeric_limits<double>::quiet_NaN();
        Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
        CHECK_THROWS_AS(build_posterior(lt, w, neighbors_from({0.1, 0.1}), 0.0, 1), NumericError);
    }
}

TEST_CASE("build_posterior: uniform unit square normalization") {
    // p-tilde == 1 on the unit square integrates to E = 1.
    const int n = 10000;
    Rng rng = make_rng(42);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd pts(n, 2);
    for (int i = 0; i < n; ++i) {
        pts(i, 0) = unif(rng);
        pts(i, 1) = unif(rng);
    }
    const NeighborSet ns = kth_neighbor_distances(pts, 1);
    const EvidencePosterior ep = build_posterior(Eigen::VectorXd::Zero(n),
                                                 Eigen::VectorXd::Ones(n), ns, 0.0, 2);
    CHECK(std::exp(ep.log_map) == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("log_posterior_density") {
    const EvidencePosterior ep = random_posterior(51);
    SECTION("MAP is a local and grid-global maximum") {
        const double at_map = log_posterior_density(ep, ep.log_map);
        CHECK(at_map > log_posterior_density(ep, ep.log_map + 0.5));
        CHECK(at_map > log_posterior_density(ep, ep.log_map - 0.5));
        CHECK(at_map > log_posterior_density(ep, ep.log_map + 0.1));
        CHECK(at_map > log_posterior_density(ep, ep.log_map - 0.1));

        // grid-argmax oracle
        const double half = 10.0 * ep.sigma_frac;
        const int grid = 10000;
        double best_x = 0.0, best_v = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= grid; ++i) {
            const double x = ep.log_map - half + 2.0 * half * i / grid;
            const double v = log_posterior_density(ep, x);
            if (v > best_v) { best_v = v; best_x = x; }
        }
        CHECK(std::abs(best_x - ep.log_map) <= 2.0 * half / grid + 1e-12);
    }
    SECTION("value differences match the closed form") {
        const double x1 = ep.log_map + 0.2, x2 = ep.log_map - 0.3;
        const double expected = -(ep.shape + 1.0) * (x1 - x2) -
                                (std::exp(ep.log_scale - x1) - std::exp(ep.log_scale - x2));
        CHECK(log_posterior_density(ep, x1) - log_posterior_density(ep, x2) ==
              Catch::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("credible_interval") {
    SECTION("Gaussian limit: level 0.68 half-width ~ sigma_frac for Nk=1e5") {
        Eigen::VectorXd lt = Eigen::VectorXd::Zero(100000);
        Eigen::VectorXd w = Eigen::VectorXd::Ones(100000);
        std::vector<double> d(100000, 0.05);
        const EvidencePosterior ep = build_posterior(lt, w, neighbors_from(d), 0.0, 2);
        const auto [lo, hi] = credible_interval(ep, 0.68);
        const double half = 0.5 * (hi - lo);
        const double z = 0.9944578832097532;  // two-sided 68% normal quantile
        CHECK(half == Catch::Approx(z * ep.sigma_frac).epsilon(0.05));
        CHECK(lo < ep.log_map);
        CHECK(hi > ep.log_map);
    }
    SECTION("shrinks toward the median as level -> 0") {
        const EvidencePosterior ep = random_posterior(52);
        const auto [lo1, hi1] = credible_interval(ep, 0.9);
        const auto [lo2, hi2] = credible_interval(ep, 0.3);
        const auto [lo3, hi3] = credible_interval(ep, 0.01);
        CHECK(hi2 - lo2 < hi1 - lo1);
        CHECK(hi3 - lo3 < hi2 - lo2);
        const double median = detail::posterior_log_quantile(ep, 0.5);
        CHECK(std::abs(0.5 * (lo3 + hi3) - median) < 0.01);
    }
    SECTION("quadrature mass check") {
        const EvidencePosterior ep = random_posterior(53);
        for (double level : {0.5, 0.68, 0.95}) {
            const auto [lo, hi] = credible_interval(ep, level);
            const double log_norm = ep.shape * ep.log_scale - std::lgamma(ep.shape);
            auto density = [&](double u) {
                return std::exp(log_norm - ep.shape * u - std::exp(ep.log_scale - u));
            };
            const double mass = boost::math::quadrature::trapezoidal(density, lo, hi, 1e-10);
            CHECK(mass == Catch::Approx(level).margin(1e-3));
        }
    }
    SECTION("invalid levels rejected") {
        const EvidencePosterior ep = random_posterior(54);
        CHECK_THROWS_AS(credible_interval(ep, 0.0), ValidationError);
        CHECK_THROWS_AS(credible_interval(ep, 1.0), ValidationError);
        CHECK_THROWS_AS(credible_interval(ep, -3.0), ValidationError);
    }
}

TEST_CASE("resolution_diagnostic") {
    SECTION("m=1, N=100") {
        const ResolutionDiagnostic d = resolution_diagnostic(100, 1);
        CHECK(d.indicator == Catch::Approx(1.0 / 200.0).epsilon(1e-12));
        CHECK_FALSE(d.threshold_exceeded);
    }
    SECTION("m=20, N=1e5 is flagged") {
        const ResolutionDiagnostic d = resolution_diagnostic(100000, 20);
        CHECK(d.indicator == Catch::Approx(0.675).epsilon(0.005));
        CHECK(d.threshold_exceeded);
    }
    SECTION("strictly decreasing in N") {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t n : {10, 100, 1000, 10000}) {
            const double ind = resolution_diagnostic(n, 6).indicator;
            CHECK(ind < prev);
            prev = ind;
        }
    }
}

TEST_CASE("affine consistency of the whitened pipeline") {
    // theta -> A theta + b with ln p-tilde -> ln p-tilde - ln|det A| is a change
    // of variables that must leave the evidence untouched when whitening is on.
    Rng rng = make_rng(61);
    std::normal_distribution<double> normal;
    const int n = 1500, m = 3;
    Chain c;
    c.parameters.resize(n, m);
    c.log_target.resize(n);
    c.weights = Eigen::VectorXd::Ones(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) c.parameters(i, j) = normal(rng);
        c.log_target[i] = -0.5 * c.parameters.row(i).squaredNorm();
    }
    Eigen::MatrixXd a(m, m);
    a << 3, 0.5, 0, -1, 2, 0.2, 0, 0.7, 0.4;
    Chain tc = c;
    tc.parameters = c.parameters * a.transpose();
    tc.parameters.rowwise() += Eigen::RowVector3d(1.0, -2.0, 3.0);
    tc.log_target.array() -= std::log(std::abs(a.determinant()));

    EstimateOptions opt;
    opt.whiten = true;
    const EstimateResult r0 = estimate_evidence(c, opt);
    const EstimateResult r1 = estimate_evidence(tc, opt);
    CHECK(r0.posterior.log_map == Catch::Approx(r1.posterior.log_map).margin(1e-8));
}
