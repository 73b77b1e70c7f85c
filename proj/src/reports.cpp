#include "c2c/reports.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "c2c/errors.hpp"

namespace c2c {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << content;
    if (!f) throw IoError("write failed for '" + path + "'");
}

ordered_json metrics_json(const MetricsReport& m) {
    ordered_json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["roc_auc"] = m.roc_auc;
    j["confusion"] = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
    return j;
}

} // namespace

void write_metrics_files(const std::string& dir, const MetricsReport& m) {
    write_text(dir + "/metrics.json", metrics_json(m).dump(2) + "\n");
    write_text(dir + "/metrics.txt", m.text_table());
}

void write_attention_csv(const std::string& path, const std::vector<AttentionRecord>& records) {
    std::string out = "bag_id,instance_id,digit,cluster_id,attention_weight\n";
    char line[160];
    for (const AttentionRecord& r : records) {
        std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.17g\n", r.bag_id, r.instance_id, r.digit,
                      r.cluster_id, r.attention);
        out += line;
    }
    write_text(path, out);
}

std::string epoch_log_line(const EpochRecord& e) {
    ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = {{"l_wsi", e.mean_loss.l_wsi},
                 {"l_patch", e.mean_loss.l_patch},
                 {"l_kld", e.mean_loss.l_kld},
                 {"total", e.mean_loss.total}};
    j["train"] = metrics_json(e.train_metrics);
    if (e.val_metrics) j["val"] = metrics_json(*e.val_metrics);
    j["seconds"] = e.seconds;
    return j.dump();
}

void write_epoch_log(const std::string& path, const std::vector<EpochRecord>& epochs) {
    std::string out;
    for (const EpochRecord& e : epochs) out += epoch_log_line(e) + "\n";
    write_text(path, out);
}

void write_ablation_files(const std::string& dir, const std::string& axis,
                          const std::vector<AblationRow>& rows) {
    ordered_json j;
    j["axis"] = axis;
    j["rows"] = ordered_json::array();
    std::string table = axis + "        accuracy  precision recall    f1        roc_auc\n";
    for (const AblationRow& r : rows) {
        ordered_json row;
        row["value"] = r.value;
        row["metrics"] = metrics_json(r.metrics);
        j["rows"].push_back(row);
        char line[256];
        std::snprintf(line, sizeof(line), "%-9s %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f\n",
                      r.value.c_str(), r.metrics.accuracy, r.metrics.precision, r.metrics.recall,
                      r.metrics.f1, r.metrics.roc_auc);
        table += line;
    }
    write_text(dir + "/ablation.json", j.dump(2) + "\n");
    write_text(dir + "/ablation.txt", table);
}

} // namespace c2c
