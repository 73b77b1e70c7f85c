#pragma once

#include <array>
#include <vector>

namespace c2c {

// Weights of the composite objective: alpha * bag CE + beta * instance CE +
// gamma * attention KL.
struct LossWeights {
    double alpha = 1.0;
    double beta = 0.01;
    double gamma = 0.1;
};

struct LossBreakdown {
    double l_wsi = 0.0;
    double l_patch = 0.0;
    double l_kld = 0.0;
    double total = 0.0;
};

// -log(probs[label]) with probabilities clamped at 1e-12.
double bag_ce(const std::array<double, 2>& probs, int label);

// Mean over instances of -log(probs[bag_label]); every instance inherits the
// bag label (weak supervision).
double instance_ce(const std::vector<std::array<double, 2>>& probs, int bag_label);

// Per cluster with >= 2 members: renormalize the attention mass within the
// cluster and take KL against the uniform distribution; returns the mean
// over those clusters (singletons contribute nothing). Always >= 0, in nats.
double kld_uniform(const std::vector<double>& attention, const std::vector<int>& cluster_of);

LossBreakdown total_loss(double l_wsi, double l_patch, double l_kld, const LossWeights& w);

} // namespace c2c
