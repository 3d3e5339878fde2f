#pragma once

// Cosine-distance primitives shared by the layer-level measures.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "icc/matrix.hpp"

namespace icc::geometry {

inline constexpr std::size_t kDefaultDistanceCap = 256;

struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> d;               // n x n, row-major
    std::vector<std::size_t> point_ids;  // row index in the source matrix, ascending

    double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
};

/// Seeded uniform subsample of `cap` indices out of [0, m), returned sorted.
/// Returns all indices when m <= cap.
std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t cap, std::uint64_t seed);

/// Cosine distance of two vectors; a zero-norm vector is at distance 1 from everything.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Pairwise cosine distances over the given rows of `points` (all rows when
/// `rows` is empty), subsampled to at most `cap` points.
DistanceMatrix cosine_distance_matrix(const Matrix& points, std::span<const std::size_t> rows, std::size_t cap,
                                      std::uint64_t seed);
DistanceMatrix cosine_distance_matrix(const Matrix& points, std::size_t cap, std::uint64_t seed);

/// Mean silhouette score of the points assigned to `target`. `cluster_of` is
/// indexed by DistanceMatrix position.
double silhouette_mean(const DistanceMatrix& dist, std::span<const int> cluster_of, int target);

/// Population standard deviation of the n(n-1)/2 off-diagonal distances.
double pairwise_distance_std(const DistanceMatrix& dist);

}  // namespace icc::geometry
