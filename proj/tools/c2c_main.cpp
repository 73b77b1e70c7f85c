// c2c: cluster-sampled attention MIL on bag datasets.
//
// Subcommands: gen-data, train, eval, ablate, gradcheck. Every run writes a
// run manifest next to its outputs; re-running with `--config <manifest>`
// reproduces the outputs byte-for-byte.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "c2c/bags.hpp"
#include "c2c/errors.hpp"
#include "c2c/model.hpp"
#include "c2c/reports.hpp"
#include "c2c/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// One configurable value: a CLI option plus its JSON config-file binding.
struct Binding {
    std::string key;
    CLI::Option* opt = nullptr;
    std::function<void(const json&)> set;
    std::function<ordered_json()> get;
};

class ConfigurableCommand {
  public:
    ConfigurableCommand(CLI::App* cmd, std::string name) : cmd_(cmd), name_(std::move(name)) {
        cmd->add_option("--config", config_path_,
                        "JSON config file; keys mirror flags, flags take precedence");
    }

    template <class T>
    CLI::Option* bind(const std::string& flag, T& value, const std::string& help) {
        CLI::Option* opt = cmd_->add_option("--" + flag, value, help);
        bindings_.push_back(Binding{
            flag, opt, [&value](const json& j) { value = j.get<T>(); },
            [&value]() { return ordered_json(value); }});
        return opt;
    }

    CLI::Option* bind_flag(const std::string& flag, bool& value, const std::string& help) {
        CLI::Option* opt = cmd_->add_flag("--" + flag + ",!--no-" + flag, value, help);
        bindings_.push_back(Binding{
            flag, opt, [&value](const json& j) { value = j.get<bool>(); },
            [&value]() { return ordered_json(value); }});
        return opt;
    }

    // Config-file values fill in everything the command line left unset.
    void apply_config_file() {
        if (config_path_.empty()) return;
        std::ifstream f(config_path_);
        if (!f) throw c2c::IoError("cannot open config file '" + config_path_ + "'");
        json doc;
        try {
            f >> doc;
        } catch (const json::parse_error& e) {
            throw c2c::ArgumentError("config file '" + config_path_ + "': " + e.what());
        }
        if (doc.contains("config")) doc = doc["config"]; // run manifests embed the config
        if (!doc.is_object())
            throw c2c::ArgumentError("config file '" + config_path_ + "' must hold a JSON object");
        for (const auto& [key, value] : doc.items()) {
            const Binding* binding = nullptr;
            for (const Binding& b : bindings_)
                if (b.key == key) binding = &b;
            if (!binding)
                throw c2c::ArgumentError("config file '" + config_path_ + "': unknown key '" +
                                         key + "' for " + name_);
            if (binding->opt->count() > 0) continue; // flags win
            try {
                binding->set(value);
            } catch (const json::exception& e) {
                throw c2c::ArgumentError("config file '" + config_path_ + "', key '" + key +
                                         "': " + e.what());
            }
        }
    }

    ordered_json resolved_config() const {
        ordered_json out;
        for (const Binding& b : bindings_) out[b.key] = b.get();
        return out;
    }

    void require(const std::string& flag_key, const std::string& value) const {
        if (value.empty())
            throw c2c::ArgumentError(name_ + ": missing required --" + flag_key +
                                     " (flag or config key)");
    }

  private:
    CLI::App* cmd_;
    std::string name_;
    std::string config_path_;
    std::vector<Binding> bindings_;
};

void write_run_manifest(const std::string& path, const std::string& command,
                        const ordered_json& config, const ordered_json& outputs,
                        double seconds) {
    ordered_json m;
    m["command"] = command;
    m["tool_version"] = kToolVersion;
    m["config"] = config;
    m["outputs"] = outputs;
    m["duration_seconds"] = seconds;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw c2c::IoError("cannot write '" + path + "'");
    f << m.dump(2) << "\n";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw c2c::IoError("cannot create directory '" + dir + "': " + ec.message());
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// --- gen-data -------------------------------------------------------------

struct GenDataArgs {
    std::string images, labels, out = "dataset.c2cb";
    c2c::BagDatasetConfig cfg;
};

void run_gen_data(const ConfigurableCommand& cc, GenDataArgs& a) {
    cc.require("mnist-images", a.images);
    cc.require("mnist-labels", a.labels);
    a.cfg.validate();
    Timer timer;
    const c2c::DigitPool pool = c2c::load_pool(a.images, a.labels);
    const c2c::BagDataset ds = c2c::generate_bags(pool, a.cfg);
    c2c::save_manifest(ds, a.out);

    int train_pos = 0, test_pos = 0;
    for (const c2c::Bag& b : ds.train) train_pos += b.label;
    for (const c2c::Bag& b : ds.test) test_pos += b.label;
    std::printf("wrote %s: %zu train bags (%d positive), %zu test bags (%d positive)\n",
                a.out.c_str(), ds.train.size(), train_pos, ds.test.size(), test_pos);

    ordered_json outputs;
    outputs["dataset"] = a.out;
    write_run_manifest(a.out + ".run.json", "gen-data", cc.resolved_config(), outputs,
                       timer.seconds());
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data, out = "run";
    c2c::TrainConfig cfg;
    std::string sampling = "cluster";
    std::string pooling = "attention";
};

c2c::TrainConfig resolve_train_config(TrainArgs& a) {
    a.cfg.sampling = c2c::sampling_from_string(a.sampling);
    a.cfg.pooling = c2c::pooling_from_string(a.pooling);
    a.cfg.validate();
    return a.cfg;
}

void run_train(const ConfigurableCommand& cc, TrainArgs& a) {
    cc.require("data", a.data);
    const c2c::TrainConfig cfg = resolve_train_config(a);
    Timer timer;
    const c2c::BagDataset ds = c2c::load_manifest(a.data);
    ensure_dir(a.out);
    const std::string log_path = a.out + "/epochs.jsonl";
    std::ofstream epoch_log(log_path, std::ios::trunc);
    if (!epoch_log) throw c2c::IoError("cannot write '" + log_path + "'");
    const c2c::TrainResult result = c2c::train(ds, cfg, [&](const c2c::EpochRecord& e) {
        epoch_log << c2c::epoch_log_line(e) << "\n";
        epoch_log.flush();
        char val[48] = "";
        if (e.val_metrics)
            std::snprintf(val, sizeof(val), "  val_acc %.4f", e.val_metrics->accuracy);
        std::printf("epoch %3d  loss %.6f  train_acc %.4f%s  %.1fs\n", e.epoch,
                    e.mean_loss.total, e.train_metrics.accuracy, val, e.seconds);
        std::fflush(stdout);
    });

    const std::string ckpt = a.out + "/checkpoint.c2cc";
    c2c::save_checkpoint(result.params, ckpt);

    const c2c::EpochRecord& last = result.epochs.back();
    std::printf("trained %d epochs; final mean loss %.6f, train accuracy %.4f\n",
                cfg.epochs, last.mean_loss.total, last.train_metrics.accuracy);
    if (last.val_metrics)
        std::printf("validation accuracy %.4f over %zu held-out bags\n",
                    last.val_metrics->accuracy, result.val_bag_ids.size());

    ordered_json outputs;
    outputs["checkpoint"] = ckpt;
    outputs["epoch_log"] = a.out + "/epochs.jsonl";
    write_run_manifest(a.out + "/run_manifest.json", "train", cc.resolved_config(), outputs,
                       timer.seconds());
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string data, checkpoint, out = "eval";
    std::string split = "test";
    std::string pooling = "attention";
    int threads = 0;
};

void run_eval(const ConfigurableCommand& cc, EvalArgs& a) {
    cc.require("data", a.data);
    cc.require("checkpoint", a.checkpoint);
    if (a.split != "train" && a.split != "test")
        throw c2c::ArgumentError("--split must be train or test, got '" + a.split + "'");
    const c2c::Pooling pooling = c2c::pooling_from_string(a.pooling);
    Timer timer;
    const c2c::BagDataset ds = c2c::load_manifest(a.data);
    const c2c::ModelParams params = c2c::load_checkpoint(a.checkpoint);
    const auto& bags = a.split == "train" ? ds.train : ds.test;
    if (bags.empty()) throw c2c::ConfigError("split '" + a.split + "' has no bags");

    const auto [metrics, records] = c2c::evaluate(bags, params, pooling, a.threads);
    ensure_dir(a.out);
    c2c::write_metrics_files(a.out, metrics);
    c2c::write_attention_csv(a.out + "/attention.csv", records);
    std::printf("%s", metrics.text_table().c_str());

    ordered_json outputs;
    outputs["metrics_json"] = a.out + "/metrics.json";
    outputs["metrics_txt"] = a.out + "/metrics.txt";
    outputs["attention_csv"] = a.out + "/attention.csv";
    write_run_manifest(a.out + "/run_manifest.json", "eval", cc.resolved_config(), outputs,
                       timer.seconds());
}

// --- ablate ---------------------------------------------------------------

struct AblateArgs {
    TrainArgs train;
    std::string axis;
    std::vector<std::string> values;
};

void run_ablate(const ConfigurableCommand& cc, AblateArgs& a) {
    cc.require("data", a.train.data);
    cc.require("axis", a.axis);
    if (a.values.empty()) throw c2c::ArgumentError("ablate: missing --values");
    const c2c::TrainConfig base = resolve_train_config(a.train);
    Timer timer;
    const c2c::BagDataset ds = c2c::load_manifest(a.train.data);
    const std::vector<c2c::AblationRow> rows = c2c::ablate(ds, base, a.axis, a.values);

    ensure_dir(a.train.out);
    c2c::write_ablation_files(a.train.out, a.axis, rows);
    for (const c2c::AblationRow& row : rows)
        std::printf("%s=%s  accuracy %.4f  f1 %.4f  roc_auc %.4f\n", a.axis.c_str(),
                    row.value.c_str(), row.metrics.accuracy, row.metrics.f1,
                    row.metrics.roc_auc);

    ordered_json outputs;
    outputs["ablation_json"] = a.train.out + "/ablation.json";
    outputs["ablation_txt"] = a.train.out + "/ablation.txt";
    write_run_manifest(a.train.out + "/run_manifest.json", "ablate", cc.resolved_config(),
                       outputs, timer.seconds());
}

// --- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
    double tolerance = 1e-4;
    double epsilon = 1e-5;
    std::uint64_t seed = 1;
    int coords = 100;
    std::string out;
};

void run_gradcheck(const ConfigurableCommand& cc, GradcheckArgs& a) {
    Timer timer;
    const c2c::GradCheckReport rep =
        c2c::composite_loss_gradient_check(a.seed, a.epsilon, a.tolerance, a.coords);
    std::printf("%s\n", rep.summary().c_str());
    for (const auto& [name, err] : rep.per_param)
        std::printf("  %-22s max_rel_error %.3e\n", name.c_str(), err);

    if (!a.out.empty()) {
        ensure_dir(a.out);
        ordered_json j;
        j["pass"] = rep.pass;
        j["tolerance"] = rep.tolerance;
        j["epsilon"] = rep.epsilon;
        j["max_rel_error"] = rep.max_rel_error;
        j["worst_param"] = rep.worst_param;
        j["worst_index"] = rep.worst_index;
        j["per_param"] = rep.per_param;
        std::ofstream f(a.out + "/gradcheck.json", std::ios::trunc);
        f << j.dump(2) << "\n";
        ordered_json outputs;
        outputs["report"] = a.out + "/gradcheck.json";
        write_run_manifest(a.out + "/run_manifest.json", "gradcheck", cc.resolved_config(),
                           outputs, timer.seconds());
    }
    if (!rep.pass)
        throw c2c::NumericError("gradient check failed: " + rep.summary());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cluster-sampled attention MIL trainer"};
    app.set_version_flag("--version", std::string("c2c ") + kToolVersion);
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a bag dataset from MNIST files");
    ConfigurableCommand gen_cc(gen_cmd, "gen-data");
    gen_cc.bind("mnist-images", gen.images, "IDX image file (magic 2051)");
    gen_cc.bind("mnist-labels", gen.labels, "IDX label file (magic 2049)");
    gen_cc.bind("train-bags", gen.cfg.n_train_bags, "number of training bags");
    gen_cc.bind("test-bags", gen.cfg.n_test_bags, "number of test bags");
    gen_cc.bind("mean-size", gen.cfg.mean_bag_size, "mean bag size (Gaussian)");
    gen_cc.bind("size-std", gen.cfg.bag_size_std, "bag size standard deviation");
    gen_cc.bind("positive-digits", gen.cfg.positive_digits, "digits that make a bag positive");
    gen_cc.bind("seed", gen.cfg.seed, "dataset seed");
    gen_cc.bind_flag("balance", gen.cfg.balance, "force ~50/50 positive/negative bags");
    gen_cc.bind("out", gen.out, "output manifest path");

    // train
    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "train on a bag dataset");
    ConfigurableCommand train_cc(train_cmd, "train");
    auto bind_train = [](ConfigurableCommand& cc, TrainArgs& a) {
        cc.bind("data", a.data, "dataset manifest");
        cc.bind("k", a.cfg.k, "clusters per bag");
        cc.bind("k-prime", a.cfg.k_prime, "instances sampled per cluster");
        cc.bind("cap", a.cfg.n_prime_cap, "max instances sampled per bag");
        cc.bind("alpha", a.cfg.weights.alpha, "bag cross-entropy weight");
        cc.bind("beta", a.cfg.weights.beta, "instance cross-entropy weight");
        cc.bind("gamma", a.cfg.weights.gamma, "attention KL weight");
        cc.bind("lr", a.cfg.learning_rate, "Adam learning rate");
        cc.bind("epochs", a.cfg.epochs, "training epochs");
        cc.bind("seed", a.cfg.seed, "run seed");
        cc.bind("sampling", a.sampling, "sampling strategy: cluster|topk|random");
        cc.bind("pooling", a.pooling, "pooling: attention|mean");
        cc.bind("val-fraction", a.cfg.val_fraction, "held-out fraction of train bags (0 = off)");
        cc.bind("embed-dim", a.cfg.model.embed_dim, "embedding dimension l");
        cc.bind("attn-dim", a.cfg.model.attn_dim, "attention hidden dimension");
        cc.bind("restarts", a.cfg.kmeans_restarts, "k-means restarts");
        cc.bind("threads", a.cfg.threads, "worker threads for embedding/eval (0 = auto)");
        cc.bind("out", a.out, "output directory");
    };
    bind_train(train_cc, tr);

    // eval
    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    ConfigurableCommand eval_cc(eval_cmd, "eval");
    eval_cc.bind("data", ev.data, "dataset manifest");
    eval_cc.bind("checkpoint", ev.checkpoint, "model checkpoint");
    eval_cc.bind("split", ev.split, "train|test");
    eval_cc.bind("pooling", ev.pooling, "pooling: attention|mean");
    eval_cc.bind("threads", ev.threads, "worker threads (0 = auto)");
    eval_cc.bind("out", ev.out, "output directory");

    // ablate
    AblateArgs ab;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep one axis, train+eval per value");
    ConfigurableCommand ablate_cc(ablate_cmd, "ablate");
    bind_train(ablate_cc, ab.train);
    ablate_cc.bind("axis", ab.axis, "k|gamma|sampling|pooling");
    ablate_cc.bind("values", ab.values, "values to sweep");

    // gradcheck
    GradcheckArgs gc;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
    ConfigurableCommand gc_cc(gc_cmd, "gradcheck");
    gc_cc.bind("tolerance", gc.tolerance, "max relative error allowed");
    gc_cc.bind("epsilon", gc.epsilon, "finite-difference step");
    gc_cc.bind("seed", gc.seed, "toy model/dataset seed");
    gc_cc.bind("coords", gc.coords, "coordinates checked per tensor");
    gc_cc.bind("out", gc.out, "optional report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // help/version exit 0, anything else is usage
    }

    try {
        if (gen_cmd->parsed()) {
            gen_cc.apply_config_file();
            run_gen_data(gen_cc, gen);
        } else if (train_cmd->parsed()) {
            train_cc.apply_config_file();
            run_train(train_cc, tr);
        } else if (eval_cmd->parsed()) {
            eval_cc.apply_config_file();
            run_eval(eval_cc, ev);
        } else if (ablate_cmd->parsed()) {
            ablate_cc.apply_config_file();
            run_ablate(ablate_cc, ab);
        } else if (gc_cmd->parsed()) {
            gc_cc.apply_config_file();
            run_gradcheck(gc_cc, gc);
        }
    } catch (const c2c::ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const c2c::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const c2c::Error& e) { // data/config/container problems
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
