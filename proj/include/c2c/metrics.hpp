#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace c2c {

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::string text_table() const;
};

// Rank-based ROC-AUC with tie handling (average ranks). Returns 0.5 when
// either class is absent.
double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);

// labels/preds in {0,1}; scores are positive-class probabilities used for
// the AUC. Precision/recall/f1 follow the 0-when-undefined convention.
MetricsReport compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds,
                              const std::vector<double>& scores);

} // namespace c2c
