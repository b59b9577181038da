#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mcev/errors.hpp"

namespace mcev {

/// Per-point k-th nearest-neighbour distances (self excluded), Euclidean metric.
struct NeighborSet {
    int k = 1;
    Eigen::VectorXd distances;  // length N, all >= 0
    std::size_t zero_distance_count = 0;
};

enum class KnnBackend { automatic, brute, tree };

/// ln V_m(r) for the Euclidean m-ball: (m/2) ln pi + m ln r - ln Gamma(1 + m/2).
inline double log_ball_volume(int m, double log_radius) {
    if (m < 1) throw ValidationError("ball dimension must be >= 1");
    if (log_radius == -std::numeric_limits<double>::infinity())
        return -std::numeric_limits<double>::infinity();
    const double md = static_cast<double>(m);
    return 0.5 * md * std::log(M_PI) + md * log_radius - std::lgamma(1.0 + 0.5 * md);
}

namespace detail {

// Bounded max-heap over the k smallest squared distances seen so far.
struct KBest {
    explicit KBest(int k) : k_(static_cast<std::size_t>(k)) { heap_.reserve(k_); }

    double bound() const {
        return heap_.size() == k_ ? heap_.front() : std::numeric_limits<double>::infinity();
    }
    bool full() const { return heap_.size() == k_; }

    void offer(double d2) {
        if (heap_.size() < k_) {
            heap_.push_back(d2);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (d2 < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = d2;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    double kth() const { return heap_.front(); }

    void reset() { heap_.clear(); }

  private:
    std::size_t k_;
    std::vector<double> heap_;
};

// Squared distance accumulated in fixed dimension order, abandoning once the
// partial sum provably exceeds `bound`.  Rejected candidates cannot hold the
// k-th smallest value, so both backends return identical doubles.
inline bool accumulate_sqdist(const double* a, const double* b, std::size_t m, double bound,
                              double& out) {
    double s = 0.0;
    std::size_t d = 0;
    // check the bound every 4 dimensions; the summation order never changes
    for (; d + 4 <= m; d += 4) {
        const double d0 = a[d] - b[d];
        const double d1 = a[d + 1] - b[d + 1];
        const double d2 = a[d + 2] - b[d + 2];
        const double d3 = a[d + 3] - b[d + 3];
        s += d0 * d0;
        s += d1 * d1;
        s += d2 * d2;
        s += d3 * d3;
        if (s > bound) return false;
    }
    for (; d < m; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
        if (s > bound) return false;
    }
    out = s;
    return true;
}

class KdTree {
  public:
    KdTree(const double* pts, std::size_t n, std::size_t m, std::size_t leaf_size = 24)
        : pts_(pts), n_(n), m_(m), leaf_size_(leaf_size) {
        index_.resize(n);
        std::iota(index_.begin(), index_.end(), std::size_t{0});
        nodes_.reserve(2 * n / leaf_size + 2);
        build(0, n);
        // Reorder the points into tree order so leaf scans are sequential.
        reordered_.resize(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < m; ++d) reordered_[i * m + d] = pts_[index_[i] * m + d];
    }

    // Original index of the point stored at tree position `pos`.
    std::size_t original_index(std::size_t pos) const { return index_[pos]; }

    // k-th smallest squared distance from the point at tree position `pos`
    // to the other points.
    double query_kth_sq(std::size_t pos, KBest& best) const {
        best.reset();
        search(0, pos, reordered_.data() + pos * m_, best);
        return best.kth();
    }

  private:
    struct Node {
        std::size_t split_dim = 0;
        double split_val = 0.0;
        int left = -1, right = -1;  // leaf when left < 0
        std::size_t begin = 0, end = 0;
    };

    int build(std::size_t begin, std::size_t end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        if (end - begin <= leaf_size_) return id;

        // Split the widest dimension at the median.
        std::size_t dim = 0;
        double widest = -1.0;
        for (std::size_t d = 0; d < m_; ++d) {
            double lo = pts_[index_[begin] * m_ + d], hi = lo;
            for (std::size_t i = begin + 1; i < end; ++i) {
                const double v = pts_[index_[i] * m_ + d];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                dim = d;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             return pts_[a * m_ + dim] < pts_[b * m_ + dim];
                         });
        nodes_[id].split_dim = dim;
        nodes_[id].split_val = pts_[index_[mid] * m_ + dim];
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(int node_id, std::size_t query_pos, const double* q, KBest& best) const {
        const Node& node = nodes_[node_id];
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                if (i == query_pos) continue;
                double d2;
                if (accumulate_sqdist(q, reordered_.data() + i * m_, m_, best.bound(), d2))
                    best.offer(d2);
            }
            return;
        }
        const double diff = q[node.split_dim] - node.split_val;
        const int near = diff < 0.0 ? node.left : node.right;
        const int far = diff < 0.0 ? node.right : node.left;
        search(near, query_pos, q, best);
        if (!best.full() || diff * diff < best.bound()) search(far, query_pos, q, best);
    }

    const double* pts_;
    std::size_t n_, m_, leaf_size_;
    std::vector<std::size_t> index_;
    std::vector<double> reordered_;
    std::vector<Node> nodes_;
};

// O(N^2) pass over candidates ordered by the first coordinate, with window and
// per-dimension early exit.  Exact; serves as the reference backend.
inline void brute_kth_sq(const double* pts, std::size_t n, std::size_t m, int k,
                         std::vector<double>& out_sq) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pts[a * m] < pts[b * m]; });
    // Contiguous copy in sorted order; candidate scans then walk memory linearly.
    std::vector<double> sorted(n * m);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t d = 0; d < m; ++d) sorted[p * m + d] = pts[order[p] * m + d];

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 64)
#endif
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(n); ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        const double* q = sorted.data() + p * m;
        KBest best(k);
        std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(p) - 1;
        std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(p) + 1;
        const auto gap_sq = [&](std::ptrdiff_t c) {
            const double g = sorted[static_cast<std::size_t>(c) * m] - q[0];
            return g * g;
        };
        while (true) {
            const bool lo_ok = lo >= 0;
            const bool hi_ok = hi < static_cast<std::ptrdiff_t>(n);
            if (!lo_ok && !hi_ok) break;
            std::ptrdiff_t pick;
            if (lo_ok && hi_ok) pick = gap_sq(lo) <= gap_sq(hi) ? lo : hi;
            else pick = lo_ok ? lo : hi;
            // The picked side has the smaller coordinate-0 gap, and gaps grow
            // monotonically outward, so once it exceeds the bound no remaining
            // candidate on either side can improve the k-th distance.
            if (best.full() && gap_sq(pick) > best.bound()) break;
            double d2;
            if (accumulate_sqdist(q, sorted.data() + static_cast<std::size_t>(pick) * m, m,
                                  best.bound(), d2))
                best.offer(d2);
            if (pick == lo) --lo; else ++hi;
        }
        out_sq[order[p]] = best.kth();
    }
}

inline void tree_kth_sq(const double* pts, std::size_t n, std::size_t m, int k,
                        std::vector<double>& out_sq) {
    KdTree tree(pts, n, m);
#ifdef _OPENMP
#pragma omp parallel
#endif
    {
        KBest best(k);
#ifdef _OPENMP
#pragma omp for schedule(dynamic, 64)
#endif
        for (std::ptrdiff_t pos = 0; pos < static_cast<std::ptrdiff_t>(n); ++pos)
            out_sq[tree.original_index(static_cast<std::size_t>(pos))] =
                tree.query_kth_sq(static_cast<std::size_t>(pos), best);
    }
}

} // namespace detail

/// Exact k-th nearest-neighbour distance of every point to the rest of the set.
/// Both backends return bitwise-identical distances; `automatic` picks the tree
/// except in high dimensions where its pruning degrades.
inline NeighborSet kth_neighbor_distances(const Eigen::MatrixXd& points, int k,
                                          KnnBackend backend = KnnBackend::automatic) {
    const auto n = static_cast<std::size_t>(points.rows());
    const auto m = static_cast<std::size_t>(points.cols());
    if (k < 1) throw ValidationError("k must be >= 1");
    if (points.rows() <= k)
        throw ValidationError("need at least k+1 = " + std::to_string(k + 1) + " points, got " +
                              std::to_string(points.rows()));

    std::vector<double> pts(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < m; ++d) pts[i * m + d] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));

    if (backend == KnnBackend::automatic)
        backend = (m <= 15) ? KnnBackend::tree : KnnBackend::brute;

    std::vector<double> sq(n);
    if (backend == KnnBackend::brute) detail::brute_kth_sq(pts.data(), n, m, k, sq);
    else detail::tree_kth_sq(pts.data(), n, m, k, sq);

    NeighborSet result;
    result.k = k;
    result.distances.resize(static_cast<Eigen::Index>(n));
    result.zero_distance_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        result.distances[static_cast<Eigen::Index>(i)] = std::sqrt(sq[i]);
        if (sq[i] == 0.0) ++result.zero_distance_count;
    }
    return result;
}

} // namespace mcev
