#pragma once

#include <vector>

#include "c2c/rng.hpp"
#include "c2c/tensor.hpp"

namespace c2c {

// Result of per-bag k-means. k is the effective cluster count, which may be
// smaller than requested when the bag has fewer distinct embeddings.
struct ClusterAssignment {
    int k = 0;
    std::vector<int> assignment; // length N, values in [0, k)
    Tensor centroids;            // [k, l]
    double inertia = 0.0;        // within-cluster sum of squared distances
    // Inertia after each assignment step of the winning restart; checked to
    // be non-increasing by the test suite.
    std::vector<double> inertia_trace;
};

struct SamplingPlan {
    std::vector<int> selected; // ascending instance indices, no duplicates
    int k_prime = 0;
    int cap = 0;
    // Instances drawn per cluster before the cap subsample (cluster
    // strategy only); always min(|cluster|, k_prime).
    std::vector<int> pre_cap_per_cluster;
};

// Scales every row with norm > 1e-12 to unit norm; near-zero rows pass
// through unchanged.
Tensor l2_normalize(const Tensor& H);

// Lloyd's algorithm with k-means++ seeding. Runs `restarts` independent
// initializations and returns the lowest-inertia result. Assignment ties
// break to the lowest centroid index; empty clusters are reseeded to the
// point farthest from its current centroid.
ClusterAssignment kmeans(const Tensor& H_norm, int k, int max_iter, double tol, int restarts,
                         Rng& rng);

// Draws min(|c|, k_prime) members uniformly without replacement from each
// cluster; if the union exceeds cap, keeps a uniform subsample of size cap.
SamplingPlan cluster_sample(const ClusterAssignment& assign, int k_prime, int cap, Rng& rng);

// Indices of the cap largest scores, ties to the lower index.
SamplingPlan topk_sample(const std::vector<double>& scores, int cap);

// min(n, cap) indices uniformly without replacement.
SamplingPlan random_sample(int n, int cap, Rng& rng);

} // namespace c2c
