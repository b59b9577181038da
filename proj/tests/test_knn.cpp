#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "mcev/knn.hpp"
#include "mcev/rng.hpp"

using namespace mcev;

namespace {

Eigen::MatrixXd random_points(int n, int m, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd pts(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) pts(i, j) = normal(rng);
    return pts;
}

// Independent oracle: all pairwise distances, k-th order statistic per point.
Eigen::VectorXd knn_oracle(const Eigen::MatrixXd& pts, int k) {
    const Eigen::Index n = pts.rows();
    Eigen::VectorXd out(n);
    std::vector<double> d2(static_cast<std::size_t>(n) - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) d2[c++] = (pts.row(i) - pts.row(j)).squaredNorm();
        std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
        out[i] = std::sqrt(d2[static_cast<std::size_t>(k - 1)]);
    }
    return out;
}

} // namespace

TEST_CASE("log_ball_volume") {
    CHECK(log_ball_volume(2, 0.0) == Catch::Approx(std::log(M_PI)));
    CHECK(log_ball_volume(1, std::log(2.0)) == Catch::Approx(std::log(4.0)));
    CHECK(log_ball_volume(3, 0.0) == Catch::Approx(std::log(4.0 * M_PI / 3.0)));
    CHECK(log_ball_volume(5, -std::numeric_limits<double>::infinity()) ==
          -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(log_ball_volume(0, 0.0), ValidationError);
}

TEST_CASE("kth_neighbor_distances: hand-computable 1-D sets") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0.0, 1.0, 3.0;
    SECTION("k=1 -> {1,1,2}") {
        for (auto backend : {KnnBackend::brute, KnnBackend::tree}) {
            const NeighborSet ns = kth_neighbor_distances(pts, 1, backend);
            CHECK(ns.distances[0] == 1.0);
            CHECK(ns.distances[1] == 1.0);
            CHECK(ns.distances[2] == 2.0);
            CHECK(ns.zero_distance_count == 0);
        }
    }
    SECTION("k=2 -> {3,2,3}") {
        const NeighborSet ns = kth_neighbor_distances(pts, 2, KnnBackend::brute);
        CHECK(ns.distances[0] == 3.0);
        CHECK(ns.distances[1] == 2.0);
        CHECK(ns.distances[2] == 3.0);
    }
    SECTION("N <= k rejected") {
        CHECK_THROWS_AS(kth_neighbor_distances(pts, 3), ValidationError);
    }
}

TEST_CASE("kth_neighbor_distances: backends agree bitwise with the oracle") {
    for (int m : {2, 8, 15}) {
        for (int k : {1, 4}) {
            const Eigen::MatrixXd pts = random_points(2000, m, 100 + m * 10 + k);
            const NeighborSet brute = kth_neighbor_distances(pts, k, KnnBackend::brute);
            const NeighborSet tree = kth_neighbor_distances(pts, k, KnnBackend::tree);
            const Eigen::VectorXd oracle = knn_oracle(pts, k);
            REQUIRE(brute.distances.size() == 2000);
            CHECK(brute.distances == tree.distances);  // bitwise
            CHECK((brute.distances - oracle).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("kth_neighbor_distances: monotone in k") {
    const Eigen::MatrixXd pts = random_points(500, 3, 17);
    const NeighborSet k1 = kth_neighbor_distances(pts, 1);
    const NeighborSet k2 = kth_neighbor_distances(pts, 2);
    const NeighborSet k3 = kth_neighbor_distances(pts, 3);
    for (int i = 0; i < 500; ++i) {
        CHECK(k1.distances[i] <= k2.distances[i]);
        CHECK(k2.distances[i] <= k3.distances[i]);
    }
}

TEST_CASE("kth_neighbor_distances: permutation equivariance") {
    const Eigen::MatrixXd pts = random_points(300, 4, 23);
    std::vector<int> perm(300);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(24);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(300, 4);
    for (int i = 0; i < 300; ++i) shuffled.row(i) = pts.row(perm[i]);
    const NeighborSet a = kth_neighbor_distances(pts, 2);
    const NeighborSet b = kth_neighbor_distances(shuffled, 2);
    for (int i = 0; i < 300; ++i) CHECK(b.distances[i] == a.distances[perm[i]]);
}

TEST_CASE("kth_neighbor_distances: translation and rotation invariance") {
    const Eigen::MatrixXd pts = random_points(200, 2, 29);
    const double angle = 0.7;
    Eigen::Matrix2d rot;
    rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Eigen::MatrixXd moved = (pts * rot.transpose()).rowwise() + Eigen::RowVector2d(5.0, -3.0);
    const NeighborSet a = kth_neighbor_distances(pts, 1);
    const NeighborSet b = kth_neighbor_distances(moved, 1);
    std::vector<double> da(a.distances.data(), a.distances.data() + 200);
    std::vector<double> db(b.distances.data(), b.distances.data() + 200);
    std::sort(da.begin(), da.end());
    std::sort(db.begin(), db.end());
    for (int i = 0; i < 200; ++i) CHECK(da[i] == Catch::Approx(db[i]).epsilon(1e-12));
}

TEST_CASE("kth_neighbor_distances: exact duplicates reported") {
    Eigen::MatrixXd pts(4, 2);
    pts << 0, 0, 0, 0, 1, 1, 2, 2;
    for (auto backend : {KnnBackend::brute, KnnBackend::tree}) {
        const NeighborSet ns = kth_neighbor_distances(pts, 1, backend);
        CHECK(ns.distances[0] == 0.0);
        CHECK(ns.distances[1] == 0.0);
        CHECK(ns.zero_distance_count == 2);
    }
}

TEST_CASE("kth_neighbor_distances: ties give the same value either way") {
    // Point 0 has two neighbours at exactly distance 1.
    Eigen::MatrixXd pts(4, 2);
    pts << 0, 0, 1, 0, 0, 1, 5, 5;
    for (auto backend : {KnnBackend::brute, KnnBackend::tree}) {
        const NeighborSet ns = kth_neighbor_distances(pts, 1, backend);
        CHECK(ns.distances[0] == 1.0);
        const NeighborSet ns2 = kth_neighbor_distances(pts, 2, backend);
        CHECK(ns2.distances[0] == 1.0);
    }
}
