#include "c2c/loss.hpp"

#include <algorithm>
#include <cmath>

#include "c2c/errors.hpp"
#include "c2c/graph.hpp" // kProbFloor

namespace c2c {

double bag_ce(const std::array<double, 2>& probs, int label) {
    if (label != 0 && label != 1)
        throw ArgumentError("bag_ce: label must be 0 or 1, got " + std::to_string(label));
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));
}

double instance_ce(const std::vector<std::array<double, 2>>& probs, int bag_label) {
    if (probs.empty()) throw ArgumentError("instance_ce: need at least one instance");
    double acc = 0.0;
    for (const auto& p : probs) acc += bag_ce(p, bag_label);
    return acc / static_cast<double>(probs.size());
}

double kld_uniform(const std::vector<double>& attention, const std::vector<int>& cluster_of) {
    if (attention.size() != cluster_of.size())
        throw ArgumentError("kld_uniform: attention and cluster ids differ in length");
    int max_c = -1;
    for (int c : cluster_of) {
        if (c < 0) throw ArgumentError("kld_uniform: negative cluster id");
        max_c = std::max(max_c, c);
    }
    if (max_c < 0) return 0.0;

    std::vector<double> mass(static_cast<std::size_t>(max_c) + 1, 0.0);
    std::vector<int> count(static_cast<std::size_t>(max_c) + 1, 0);
    for (std::size_t i = 0; i < attention.size(); ++i) {
        mass[static_cast<std::size_t>(cluster_of[i])] += attention[i];
        count[static_cast<std::size_t>(cluster_of[i])] += 1;
    }
    std::vector<double> kl(mass.size(), 0.0);
    int multi = 0;
    for (std::size_t c = 0; c < count.size(); ++c)
        if (count[c] >= 2) ++multi;
    if (multi == 0) return 0.0;
    for (std::size_t i = 0; i < attention.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(cluster_of[i]);
        if (count[c] < 2) continue;
        const double p = attention[i] / mass[c];
        if (p > 0.0) kl[c] += p * std::log(p * count[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < kl.size(); ++c)
        if (count[c] >= 2) total += kl[c];
    return total / multi;
}

LossBreakdown total_loss(double l_wsi, double l_patch, double l_kld, const LossWeights& w) {
    LossBreakdown b;
    b.l_wsi = l_wsi;
    b.l_patch = l_patch;
    b.l_kld = l_kld;
    b.total = w.alpha * l_wsi + w.beta * l_patch + w.gamma * l_kld;
    return b;
}

} // namespace c2c
