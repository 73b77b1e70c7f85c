#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "c2c/bags.hpp"
#include "c2c/clustering.hpp"
#include "c2c/gradcheck.hpp"
#include "c2c/graph.hpp"
#include "c2c/loss.hpp"
#include "c2c/metrics.hpp"
#include "c2c/model.hpp"

namespace c2c {

enum class SamplingStrategy { kCluster, kTopk, kRandom };
enum class Pooling { kAttention, kMean };

std::string to_string(SamplingStrategy s);
std::string to_string(Pooling p);
SamplingStrategy sampling_from_string(const std::string& s); // throws ArgumentError
Pooling pooling_from_string(const std::string& s);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int k = 8;            // clusters per bag
    int k_prime = 8;      // instances sampled per cluster
    int n_prime_cap = 64; // cap on instances sampled per bag
    LossWeights weights;  // (1, 0.01, 0.1)
    double learning_rate = 1e-4;
    int epochs = 30;
    std::uint64_t seed = 0;
    SamplingStrategy sampling = SamplingStrategy::kCluster;
    Pooling pooling = Pooling::kAttention;
    AdamConfig adam;
    double val_fraction = 0.0; // opt-in held-out share of train bags (0 = off)
    int kmeans_restarts = 5;
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-6;
    ModelConfig model;
    int threads = 0; // phase-1/eval worker cap; 0 = hardware concurrency

    void validate() const; // throws ArgumentError
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown mean_loss;        // averaged over update steps
    MetricsReport train_metrics;    // from the sampled-instance training passes
    std::optional<MetricsReport> val_metrics; // all-instance eval on the val split
    double seconds = 0.0;
};

// Per-run instrumentation of the sampling contract: no step may touch more
// than cap instances, and the cluster strategy must draw exactly
// min(|cluster|, k') per cluster before the cap.
struct SamplingAudit {
    std::int64_t steps = 0;
    int max_step_instances = 0;
    bool quota_exact = true;
};

struct AttentionRecord {
    int bag_id = 0;
    int instance_id = 0;
    int digit = 0;
    int cluster_id = -1; // -1 when no clustering was run (inference)
    double attention = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> epochs;
    SamplingAudit audit;
    std::vector<int> val_bag_ids; // bags held out from training
};

struct AdamState {
    std::int64_t t = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

// Standard bias-corrected Adam update, applied in place.
void adam_step(std::vector<std::pair<std::string, Tensor*>> params, const GradientMap& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps);

// One C2C epoch over `bags`:
//   phase 1 (frozen params): encode all instances per bag, l2-normalize,
//     per-bag k-means, build a sampling plan per config.sampling;
//   phase 2: bag-at-a-time updates in seeded shuffled order -- encode the
//     sampled instances, pool (attention or mean), heads, composite loss,
//     backward, Adam on every parameter group.
// Throws NumericError (naming epoch and bag) if the loss goes non-finite.
EpochRecord run_epoch(const std::vector<Bag>& bags, ModelParams& params, AdamState& opt,
                      const TrainConfig& config, int epoch, SamplingAudit* audit);

// Full training loop: seeded validation split, config.epochs epochs,
// returns final parameters and the per-epoch records. The optional callback
// fires after every epoch (for progress logging).
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train(const BagDataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// All-instance inference (no sampling): attention weights are recorded for
// every instance, prediction is argmax of the bag head (tie -> negative).
std::pair<MetricsReport, std::vector<AttentionRecord>> evaluate(const std::vector<Bag>& bags,
                                                                const ModelParams& params,
                                                                Pooling pooling, int threads = 0);

// One train+evaluate per value of the swept axis, shared seed.
struct AblationRow {
    std::string value;
    MetricsReport metrics;
};
std::vector<AblationRow> ablate(const BagDataset& dataset, const TrainConfig& base,
                                const std::string& axis, const std::vector<std::string>& values);

// Attention dispersion for the KL-uniformization property: per positive bag,
// the coefficient of variation (population std / mean) of attention weights
// over positive-digit instances; bags with fewer than two such instances are
// excluded.
struct AttentionDispersion {
    std::vector<std::pair<int, double>> per_bag; // (bag_id, cv)
    double median = 0.0;
};
AttentionDispersion attention_uniformity_stats(const std::vector<AttentionRecord>& records,
                                               const std::vector<int>& positive_digits);

// Finite-difference check of the full composite loss (bag CE + instance CE +
// attention KL, default weights) on a seeded two-bag toy dataset, covering
// every parameter group. Throws nothing on failure; inspect report.pass.
GradCheckReport composite_loss_gradient_check(std::uint64_t seed, double epsilon,
                                              double tolerance, int min_coords_per_tensor);

} // namespace c2c
