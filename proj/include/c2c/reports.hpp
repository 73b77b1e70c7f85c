#pragma once

#include <string>
#include <vector>

#include "c2c/metrics.hpp"
#include "c2c/trainer.hpp"

namespace c2c {

// Output files are deterministic: identical inputs produce identical bytes.

// metrics.json + metrics.txt under `dir`.
void write_metrics_files(const std::string& dir, const MetricsReport& m);

// CSV with header bag_id,instance_id,digit,cluster_id,attention_weight.
void write_attention_csv(const std::string& path, const std::vector<AttentionRecord>& records);

// One JSON object per line, one line per epoch.
void write_epoch_log(const std::string& path, const std::vector<EpochRecord>& epochs);
std::string epoch_log_line(const EpochRecord& epoch); // without trailing newline

// ablation.json + ablation.txt under `dir`.
void write_ablation_files(const std::string& dir, const std::string& axis,
                          const std::vector<AblationRow>& rows);

} // namespace c2c
