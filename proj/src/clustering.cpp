#include "c2c/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "c2c/errors.hpp"

namespace c2c {

Tensor l2_normalize(const Tensor& H) {
    if (H.ndim() != 2) throw ShapeError("l2_normalize: expected [N,l], got " + shape_str(H.shape));
    const int N = H.dim(0), L = H.dim(1);
    Tensor out = H;
    for (int n = 0; n < N; ++n) {
        double* row = out.v.data() + static_cast<std::size_t>(n) * L;
        double sq = 0.0;
        for (int i = 0; i < L; ++i) sq += row[i] * row[i];
        const double norm = std::sqrt(sq);
        if (norm > 1e-12)
            for (int i = 0; i < L; ++i) row[i] /= norm;
    }
    return out;
}

namespace {

double sqdist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

int count_distinct_rows(const Tensor& H) {
    const int N = H.dim(0), L = H.dim(1);
    std::vector<int> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    auto row = [&](int r) { return H.v.data() + static_cast<std::size_t>(r) * L; };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::lexicographical_compare(row(a), row(a) + L, row(b), row(b) + L);
    });
    int distinct = 1;
    for (int i = 1; i < N; ++i)
        if (!std::equal(row(order[i - 1]), row(order[i - 1]) + L, row(order[i]))) ++distinct;
    return distinct;
}

struct LloydResult {
    std::vector<int> assignment;
    Tensor centroids;
    double inertia = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
};

// Greedy k-means++: each new seed is drawn from a handful of D^2-weighted
// candidates and the one that lowers the potential most is kept.
Tensor kmeanspp_init(const Tensor& H, int k, Rng& rng) {
    const int N = H.dim(0), L = H.dim(1);
    auto row = [&](int r) { return H.v.data() + static_cast<std::size_t>(r) * L; };
    Tensor centroids = Tensor::zeros({k, L});
    std::vector<double> d2(static_cast<std::size_t>(N), std::numeric_limits<double>::infinity());
    const int n_candidates = 2 + static_cast<int>(std::log(static_cast<double>(k)));

    int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
    std::copy_n(row(first), L, centroids.v.data());
    for (int n = 0; n < N; ++n) d2[static_cast<std::size_t>(n)] = sqdist(row(n), row(first), L);

    std::vector<double> cand_d2(static_cast<std::size_t>(N));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int n = 0; n < N; ++n) total += d2[static_cast<std::size_t>(n)];
        int best_pick = -1;
        double best_potential = std::numeric_limits<double>::infinity();
        std::vector<double> best_d2;
        for (int t = 0; t < n_candidates; ++t) {
            int pick;
            if (total > 0.0) {
                const double r = rng.uniform() * total;
                double acc = 0.0;
                pick = N - 1; // fallback when acc < r from rounding
                for (int n = 0; n < N; ++n) {
                    acc += d2[static_cast<std::size_t>(n)];
                    if (acc >= r) {
                        pick = n;
                        break;
                    }
                }
            } else {
                // All points coincide with chosen centroids; effective k
                // should prevent this, but fall back to a uniform pick.
                pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
            }
            double potential = 0.0;
            for (int n = 0; n < N; ++n) {
                cand_d2[static_cast<std::size_t>(n)] =
                    std::min(d2[static_cast<std::size_t>(n)], sqdist(row(n), row(pick), L));
                potential += cand_d2[static_cast<std::size_t>(n)];
            }
            if (potential < best_potential) {
                best_potential = potential;
                best_pick = pick;
                best_d2 = cand_d2;
            }
        }
        std::copy_n(row(best_pick), L, centroids.v.data() + static_cast<std::size_t>(c) * L);
        d2 = best_d2;
    }
    return centroids;
}

// One pass of single-point moves (Hartigan improvement): relocate a point
// when the exact SSE change of moving it -- including both centroid shifts --
// is negative. Escapes Lloyd fixed points that single reassignments cannot.
// Expects centroids to be the exact means of the assignment; keeps them so.
bool hartigan_pass(const Tensor& H, std::vector<int>& assignment, Tensor& centroids, int k) {
    const int N = H.dim(0), L = H.dim(1);
    auto row = [&](int r) { return H.v.data() + static_cast<std::size_t>(r) * L; };
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int c : assignment) counts[static_cast<std::size_t>(c)] += 1;

    bool moved = false;
    for (int n = 0; n < N; ++n) {
        const int a = assignment[static_cast<std::size_t>(n)];
        const int na = counts[static_cast<std::size_t>(a)];
        if (na <= 1) continue; // moving would empty the cluster
        const double remove_gain =
            static_cast<double>(na) / (na - 1) *
            sqdist(row(n), centroids.v.data() + static_cast<std::size_t>(a) * L, L);
        int best = -1;
        double best_cost = remove_gain * (1.0 - 1e-12);
        for (int b = 0; b < k; ++b) {
            if (b == a) continue;
            const int nb = counts[static_cast<std::size_t>(b)];
            const double cost =
                static_cast<double>(nb) / (nb + 1) *
                sqdist(row(n), centroids.v.data() + static_cast<std::size_t>(b) * L, L);
            if (cost < best_cost) {
                best_cost = cost;
                best = b;
            }
        }
        if (best < 0) continue;
        const int nb = counts[static_cast<std::size_t>(best)];
        double* ca = centroids.v.data() + static_cast<std::size_t>(a) * L;
        double* cb = centroids.v.data() + static_cast<std::size_t>(best) * L;
        const double* x = row(n);
        for (int i = 0; i < L; ++i) {
            ca[i] = (na * ca[i] - x[i]) / (na - 1);
            cb[i] = (nb * cb[i] + x[i]) / (nb + 1);
        }
        counts[static_cast<std::size_t>(a)] -= 1;
        counts[static_cast<std::size_t>(best)] += 1;
        assignment[static_cast<std::size_t>(n)] = best;
        moved = true;
    }
    return moved;
}

LloydResult lloyd(const Tensor& H, int k, int max_iter, double tol, Rng& rng) {
    const int N = H.dim(0), L = H.dim(1);
    auto row = [&](int r) { return H.v.data() + static_cast<std::size_t>(r) * L; };

    LloydResult res;
    res.centroids = kmeanspp_init(H, k, rng);
    res.assignment.assign(static_cast<std::size_t>(N), 0);

    // Assignment step; ties go to the lowest centroid index.
    auto assign_step = [&]() {
        double inertia = 0.0;
        for (int n = 0; n < N; ++n) {
            int best = 0;
            double bd = sqdist(row(n), res.centroids.v.data(), L);
            for (int c = 1; c < k; ++c) {
                const double d =
                    sqdist(row(n), res.centroids.v.data() + static_cast<std::size_t>(c) * L, L);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            res.assignment[static_cast<std::size_t>(n)] = best;
            inertia += bd;
        }
        return inertia;
    };

    // Update step: centroids become cluster means; empty clusters reseed at
    // the point farthest from its assigned centroid (marking used points
    // keeps multiple empties distinct). Returns the max centroid movement.
    auto update_step = [&]() {
        Tensor next = Tensor::zeros({k, L});
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int n = 0; n < N; ++n) {
            const int c = res.assignment[static_cast<std::size_t>(n)];
            counts[static_cast<std::size_t>(c)] += 1;
            double* cr = next.v.data() + static_cast<std::size_t>(c) * L;
            const double* xr = row(n);
            for (int i = 0; i < L; ++i) cr[i] += xr[i];
        }
        for (int c = 0; c < k; ++c) {
            double* cr = next.v.data() + static_cast<std::size_t>(c) * L;
            if (counts[static_cast<std::size_t>(c)] > 0)
                for (int i = 0; i < L; ++i) cr[i] /= counts[static_cast<std::size_t>(c)];
            else
                std::copy_n(res.centroids.v.data() + static_cast<std::size_t>(c) * L, L, cr);
        }
        std::vector<bool> reseeded(static_cast<std::size_t>(N), false);
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            int far = -1;
            double fd = -1.0;
            for (int n = 0; n < N; ++n) {
                if (reseeded[static_cast<std::size_t>(n)]) continue;
                const int a = res.assignment[static_cast<std::size_t>(n)];
                const double d =
                    sqdist(row(n), next.v.data() + static_cast<std::size_t>(a) * L, L);
                if (d > fd) {
                    fd = d;
                    far = n;
                }
            }
            if (far >= 0) {
                std::copy_n(row(far), L, next.v.data() + static_cast<std::size_t>(c) * L);
                reseeded[static_cast<std::size_t>(far)] = true;
            }
        }
        double max_move = 0.0;
        for (int c = 0; c < k; ++c)
            max_move = std::max(
                max_move, std::sqrt(sqdist(res.centroids.v.data() + static_cast<std::size_t>(c) * L,
                                           next.v.data() + static_cast<std::size_t>(c) * L, L)));
        res.centroids = std::move(next);
        return max_move;
    };

    auto converge = [&]() {
        for (int iter = 0; iter < max_iter; ++iter) {
            res.trace.push_back(assign_step());
            if (update_step() < tol) break;
        }
    };

    converge();
    // Single-point polish rounds; each improving pass is followed by a fresh
    // Lloyd convergence so every invariant of the plain algorithm holds.
    for (int round = 0; round < 50; ++round) {
        if (!hartigan_pass(H, res.assignment, res.centroids, k)) break;
        converge();
    }

    // Final assignment against the final centroids, so the returned
    // assignment is a nearest-centroid fixed point.
    res.inertia = assign_step();
    res.trace.push_back(res.inertia);
    return res;
}

} // namespace

ClusterAssignment kmeans(const Tensor& H, int k, int max_iter, double tol, int restarts, Rng& rng) {
    if (k <= 0) throw ArgumentError("kmeans: k must be positive, got " + std::to_string(k));
    if (H.ndim() != 2 || H.dim(0) < 1)
        throw ShapeError("kmeans: expected non-empty [N,l], got " + shape_str(H.shape));
    if (max_iter < 1) throw ArgumentError("kmeans: max_iter must be >= 1");
    if (restarts < 1) throw ArgumentError("kmeans: restarts must be >= 1");

    const int N = H.dim(0);
    const int eff_k = std::min({k, N, count_distinct_rows(H)});

    LloydResult best;
    for (int r = 0; r < restarts; ++r) {
        LloydResult run = lloyd(H, eff_k, max_iter, tol, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }

    ClusterAssignment out;
    out.k = eff_k;
    out.assignment = std::move(best.assignment);
    out.centroids = std::move(best.centroids);
    out.inertia = best.inertia;
    out.inertia_trace = std::move(best.trace);
    return out;
}

SamplingPlan cluster_sample(const ClusterAssignment& assign, int k_prime, int cap, Rng& rng) {
    if (k_prime < 1) throw ArgumentError("cluster_sample: k_prime must be >= 1");
    if (cap < 1) throw ArgumentError("cluster_sample: cap must be >= 1");

    std::vector<std::vector<int>> members(static_cast<std::size_t>(assign.k));
    for (std::size_t i = 0; i < assign.assignment.size(); ++i)
        members[static_cast<std::size_t>(assign.assignment[i])].push_back(static_cast<int>(i));

    SamplingPlan plan;
    plan.k_prime = k_prime;
    plan.cap = cap;
    plan.pre_cap_per_cluster.resize(static_cast<std::size_t>(assign.k), 0);
    std::vector<int> pool;
    for (int c = 0; c < assign.k; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        const int take = std::min<int>(static_cast<int>(m.size()), k_prime);
        for (int i = 0; i < take; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(m.size() - i)));
            std::swap(m[static_cast<std::size_t>(i)], m[j]);
            pool.push_back(m[static_cast<std::size_t>(i)]);
        }
        plan.pre_cap_per_cluster[static_cast<std::size_t>(c)] = take;
    }
    if (static_cast<int>(pool.size()) > cap) {
        for (int i = 0; i < cap; ++i) {
            const std::size_t j =
                static_cast<std::size_t>(i) +
                static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(pool.size() - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(cap));
    }
    std::sort(pool.begin(), pool.end());
    plan.selected = std::move(pool);
    return plan;
}

SamplingPlan topk_sample(const std::vector<double>& scores, int cap) {
    if (cap < 1) throw ArgumentError("topk_sample: cap must be >= 1");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError("topk_sample: non-finite score");

    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return a < b;
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(cap)));
    std::sort(order.begin(), order.end());

    SamplingPlan plan;
    plan.k_prime = 0;
    plan.cap = cap;
    plan.selected = std::move(order);
    return plan;
}

SamplingPlan random_sample(int n, int cap, Rng& rng) {
    if (n < 0) throw ArgumentError("random_sample: n must be non-negative");
    if (cap < 1) throw ArgumentError("random_sample: cap must be >= 1");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int take = std::min(n, cap);
    for (int i = 0; i < take; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    order.resize(static_cast<std::size_t>(take));
    std::sort(order.begin(), order.end());

    SamplingPlan plan;
    plan.k_prime = 0;
    plan.cap = cap;
    plan.selected = std::move(order);
    return plan;
}

} // namespace c2c
