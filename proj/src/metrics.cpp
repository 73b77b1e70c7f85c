#include "c2c/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "c2c/errors.hpp"

namespace c2c {

double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size())
        throw ArgumentError("roc_auc: labels and scores differ in length");
    std::int64_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) return 0.5;

    std::vector<int> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    });

    // Average ranks across ties, then the Mann-Whitney statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() &&
               scores[static_cast<std::size_t>(order[j + 1])] ==
                   scores[static_cast<std::size_t>(order[i])])
            ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[static_cast<std::size_t>(order[t])] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds,
                              const std::vector<double>& scores) {
    if (labels.size() != preds.size() || labels.size() != scores.size())
        throw ArgumentError("compute_metrics: input lengths differ");
    if (labels.empty()) throw ArgumentError("compute_metrics: no samples");

    MetricsReport m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool y = labels[i] == 1, p = preds[i] == 1;
        if (y && p) ++m.tp;
        else if (!y && p) ++m.fp;
        else if (!y && !p) ++m.tn;
        else ++m.fn;
    }
    const double n = static_cast<double>(labels.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    m.roc_auc = roc_auc(labels, scores);
    return m;
}

std::string MetricsReport::text_table() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "accuracy   %.6f\n"
                  "precision  %.6f\n"
                  "recall     %.6f\n"
                  "f1         %.6f\n"
                  "roc_auc    %.6f\n"
                  "confusion  tp=%lld fp=%lld tn=%lld fn=%lld\n",
                  accuracy, precision, recall, f1, roc_auc, static_cast<long long>(tp),
                  static_cast<long long>(fp), static_cast<long long>(tn),
                  static_cast<long long>(fn));
    return buf;
}

} // namespace c2c
