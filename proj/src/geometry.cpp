#include "icc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "icc/error.hpp"
#include "icc/numeric.hpp"

namespace icc::geometry {

std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (m <= cap) return idx;
    // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + rng.index(m - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

constexpr double kParallelTolerance = 1e-14;

double distance_from_parts(double dot, double norm2_a, double norm2_b) {
    if (norm2_a == 0.0 || norm2_b == 0.0) return 1.0;
    const double d = 1.0 - dot / std::sqrt(norm2_a * norm2_b);
    // Parallel vectors come out a few ulps off zero; treat that as an exact tie
    // so silhouettes of degenerate clusters do not hinge on rounding.
    if (d < kParallelTolerance) return 0.0;
    return std::min(d, 2.0);
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    return distance_from_parts(exact_dot(a, b), exact_dot(a, a), exact_dot(b, b));
}

DistanceMatrix cosine_distance_matrix(const Matrix& points, std::span<const std::size_t> rows, std::size_t cap,
                                      std::uint64_t seed) {
    if (points.cols() == 0) throw ComputationError("cosine_distance_matrix: points have no dimensions");
    std::vector<std::size_t> all_rows;
    if (rows.empty()) {
        all_rows.resize(points.rows());
        std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
        rows = all_rows;
    }
    const auto picked = subsample_indices(rows.size(), cap, seed);
    const std::size_t n = picked.size();
    if (n < 2) throw ComputationError("cosine_distance_matrix: fewer than 2 usable points");

    DistanceMatrix out;
    out.n = n;
    out.point_ids.reserve(n);
    for (std::size_t i : picked) out.point_ids.push_back(rows[i]);
    out.d.assign(n * n, 0.0);

    std::vector<double> norm2(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = points.row(out.point_ids[i]);
        norm2[i] = exact_dot(x, x);
    }
    ExactSum acc;
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = points.row(out.point_ids[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto xj = points.row(out.point_ids[j]);
            acc.clear();
            for (std::size_t k = 0; k < xi.size(); ++k) acc.add(xi[k] * xj[k]);
            const double d = distance_from_parts(acc.value(), norm2[i], norm2[j]);
            out.d[i * n + j] = d;
            out.d[j * n + i] = d;
        }
    }
    return out;
}

DistanceMatrix cosine_distance_matrix(const Matrix& points, std::size_t cap, std::uint64_t seed) {
    return cosine_distance_matrix(points, {}, cap, seed);
}

double silhouette_mean(const DistanceMatrix& dist, std::span<const int> cluster_of, int target) {
    if (cluster_of.size() != dist.n) throw ComputationError("silhouette_mean: cluster_of size mismatch");

    // Dense relabelling of the clusters present among the points.
    std::map<int, std::size_t> slot;
    for (int c : cluster_of) slot.emplace(c, 0);
    std::size_t next = 0;
    for (auto& [c, s] : slot) s = next++;
    if (slot.size() < 2) throw ComputationError("silhouette_mean: need at least 2 clusters");
    const auto target_it = slot.find(target);
    if (target_it == slot.end()) throw ComputationError("silhouette_mean: target cluster is empty");
    const std::size_t target_slot = target_it->second;

    std::vector<std::size_t> cluster(dist.n);
    std::vector<std::size_t> size(slot.size(), 0);
    for (std::size_t i = 0; i < dist.n; ++i) {
        cluster[i] = slot.at(cluster_of[i]);
        ++size[cluster[i]];
    }

    std::vector<ExactSum> per_cluster(slot.size());
    ExactSum total;
    std::size_t count = 0;
    for (std::size_t i = 0; i < dist.n; ++i) {
        if (cluster[i] != target_slot) continue;
        ++count;
        if (size[cluster[i]] <= 1) continue;  // singleton: s = 0
        for (auto& acc : per_cluster) acc.clear();
        for (std::size_t j = 0; j < dist.n; ++j) {
            if (j != i) per_cluster[cluster[j]].add(dist(i, j));
        }
        const double a = per_cluster[cluster[i]].value() / static_cast<double>(size[cluster[i]] - 1);
        double b = INFINITY;
        for (std::size_t c = 0; c < per_cluster.size(); ++c) {
            if (c == cluster[i]) continue;
            b = std::min(b, per_cluster[c].value() / static_cast<double>(size[c]));
        }
        const double m = std::max(a, b);
        total.add(m == 0.0 ? 0.0 : (b - a) / m);
    }
    return total.value() / static_cast<double>(count);
}

double pairwise_distance_std(const DistanceMatrix& dist) {
    if (dist.n < 2) throw ComputationError("pairwise_distance_std: need at least 2 points");
    std::vector<double> upper;
    upper.reserve(dist.n * (dist.n - 1) / 2);
    for (std::size_t i = 0; i < dist.n; ++i)
        for (std::size_t j = i + 1; j < dist.n; ++j) upper.push_back(dist(i, j));
    return mean_std(upper).stddev;
}

}  // namespace icc::geometry
