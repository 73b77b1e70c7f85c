// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.
//
//  C1  desk-scale MNIST-bags convergence (median of 3 seeds >= 0.95)
//  C2  KL term lowers positive-instance attention dispersion (each seed)
//  C3  composite-loss gradient check at 1e-4, all four parameter groups
//  C4  k-means matches the exhaustive 2-partition optimum; monotone inertia
//  C5  permutation invariance of evaluation-path bag probabilities
//  C6  loss-term unit values
//  C7  byte-identical gen-data -> train -> eval pipelines (CLI)
//  C8  official MNIST test files parse; truncation/magic failures
//  C9  ablation harness emits one row per value (CLI)
//  C10 sampling cap and per-cluster quota audit over C1's training

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "c2c/bags.hpp"
#include "c2c/clustering.hpp"
#include "c2c/errors.hpp"
#include "c2c/idx.hpp"
#include "c2c/reports.hpp"
#include "c2c/rng.hpp"
#include "c2c/trainer.hpp"

#ifndef C2C_CLI_PATH
#error "C2C_CLI_PATH must be defined"
#endif
#ifndef C2C_MNIST_DIR
#error "C2C_MNIST_DIR must be defined"
#endif

namespace fs = std::filesystem;
using namespace c2c;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string mnist_dir() {
    if (const char* env = std::getenv("C2C_MNIST_DIR")) return env;
    return C2C_MNIST_DIR;
}

int run_cli(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = std::string(C2C_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<unsigned char>{std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>()};
}

// Desk-scale experiment: 100/40 bags, mean size 50 (std 10), digits {8,9},
// balanced; k=4, k'=8, cap=32, defaults otherwise, 15 epochs.
BagDataset desk_dataset(const DigitPool& pool, std::uint64_t seed) {
    BagDatasetConfig cfg;
    cfg.n_train_bags = 100;
    cfg.n_test_bags = 40;
    cfg.mean_bag_size = 50.0;
    cfg.bag_size_std = 10.0;
    cfg.seed = seed;
    return generate_bags(pool, cfg);
}

TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.k = 4;
    cfg.k_prime = 8;
    cfg.n_prime_cap = 32;
    cfg.epochs = 15;
    cfg.seed = seed;
    return cfg;
}

struct DeskRun {
    double test_accuracy = 0.0;
    double cv_median = 0.0;
    std::size_t cv_bags = 0;
    SamplingAudit audit;
};

DeskRun run_desk(const DigitPool& pool, std::uint64_t seed, double gamma) {
    const BagDataset ds = desk_dataset(pool, seed);
    TrainConfig cfg = desk_config(seed);
    cfg.weights.gamma = gamma;
    const TrainResult result = train(ds, cfg);
    const auto [metrics, records] = evaluate(ds.test, result.params, cfg.pooling, cfg.threads);
    const AttentionDispersion disp =
        attention_uniformity_stats(records, ds.config.positive_digits);
    DeskRun run;
    run.test_accuracy = metrics.accuracy;
    run.cv_median = disp.median;
    run.cv_bags = disp.per_bag.size();
    run.audit = result.audit;
    return run;
}

double median3(double a, double b, double c) {
    std::vector<double> v = {a, b, c};
    std::sort(v.begin(), v.end());
    return v[1];
}

// ---------------------------------------------------------------------------

void criterion_1_2_10(const DigitPool& pool) {
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<DeskRun> kl_runs, nokl_runs;
    for (std::uint64_t s : seeds) {
        kl_runs.push_back(run_desk(pool, s, 0.1));
        nokl_runs.push_back(run_desk(pool, s, 0.0));
    }

    {
        const double med = median3(kl_runs[0].test_accuracy, kl_runs[1].test_accuracy,
                                   kl_runs[2].test_accuracy);
        char detail[256];
        std::snprintf(detail, sizeof(detail),
                      "test accuracy per seed {%.4f, %.4f, %.4f}, median %.4f (need >= 0.95)",
                      kl_runs[0].test_accuracy, kl_runs[1].test_accuracy,
                      kl_runs[2].test_accuracy, med);
        report("C1 desk-scale convergence", med >= 0.95, detail);
    }
    {
        bool all_lower = true;
        std::string detail;
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            const bool lower = kl_runs[i].cv_median < nokl_runs[i].cv_median;
            all_lower = all_lower && lower;
            char buf[128];
            std::snprintf(buf, sizeof(buf), "seed %llu: %.4f %s %.4f (%zu bags); ",
                          static_cast<unsigned long long>(seeds[i]), kl_runs[i].cv_median,
                          lower ? "<" : ">=", nokl_runs[i].cv_median, kl_runs[i].cv_bags);
            detail += buf;
        }
        report("C2 KL uniformizes positive-instance attention", all_lower, detail);
    }
    {
        bool ok = true;
        int max_step = 0;
        std::int64_t steps = 0;
        for (const auto* runs : {&kl_runs, &nokl_runs}) {
            for (const DeskRun& r : *runs) {
                ok = ok && r.audit.quota_exact && r.audit.max_step_instances <= 32;
                max_step = std::max(max_step, r.audit.max_step_instances);
                steps += r.audit.steps;
            }
        }
        char detail[160];
        std::snprintf(detail, sizeof(detail),
                      "%lld steps audited, max instances per step %d (cap 32), quotas exact",
                      static_cast<long long>(steps), max_step);
        report("C10 sampling cap and per-cluster quota", ok, detail);
    }
}

void criterion_3() {
    const GradCheckReport rep = composite_loss_gradient_check(1, 1e-5, 1e-4, 100);
    bool groups = true;
    for (const char* prefix : {"encoder.", "attention.", "bag_head.", "instance_head."}) {
        bool found = false;
        for (const auto& [name, err] : rep.per_param) found = found || name.rfind(prefix, 0) == 0;
        groups = groups && found;
    }
    report("C3 composite-loss gradient check",
           rep.pass && groups,
           rep.summary() + (groups ? "; all four parameter groups covered"
                                   : "; MISSING parameter group"));
}

void criterion_4() {
    Rng rng(2024);
    bool optimum_ok = true, monotone_ok = true;
    double worst_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(6)); // 3..8 points
        const int d = 1 + static_cast<int>(rng.below(4)); // 1..4 dims
        Tensor H = Tensor::zeros({n, d});
        for (auto& x : H.v) x = 2.0 * rng.uniform() - 1.0;

        Rng krng = derive_rng(77, Stream::kTest, static_cast<std::uint64_t>(trial));
        const ClusterAssignment a = kmeans(H, 2, 100, 1e-9, 10, krng);

        for (std::size_t i = 1; i < a.inertia_trace.size(); ++i)
            monotone_ok = monotone_ok &&
                          a.inertia_trace[i] <= a.inertia_trace[i - 1] + 1e-12;

        // exhaustive 2-partition optimum
        double best = std::numeric_limits<double>::infinity();
        for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
            std::vector<double> ma(static_cast<std::size_t>(d), 0.0),
                mb(static_cast<std::size_t>(d), 0.0);
            int na = 0, nb = 0;
            for (int i = 0; i < n; ++i) {
                auto& m = (mask >> i) & 1u ? ma : mb;
                ((mask >> i) & 1u ? na : nb) += 1;
                for (int j = 0; j < d; ++j) m[static_cast<std::size_t>(j)] += H.at2(i, j);
            }
            for (int j = 0; j < d; ++j) {
                ma[static_cast<std::size_t>(j)] /= na;
                mb[static_cast<std::size_t>(j)] /= nb;
            }
            double sse = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto& m = (mask >> i) & 1u ? ma : mb;
                for (int j = 0; j < d; ++j) {
                    const double diff = H.at2(i, j) - m[static_cast<std::size_t>(j)];
                    sse += diff * diff;
                }
            }
            best = std::min(best, sse);
        }
        const double rel = std::abs(a.inertia - best) / std::max(best, 1e-30);
        worst_gap = std::max(worst_gap, rel);
        optimum_ok = optimum_ok && rel <= 1e-9;
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "50 instances, worst relative gap to brute force %.2e; inertia traces %s",
                  worst_gap, monotone_ok ? "non-increasing" : "NOT monotone");
    report("C4 k-means oracle equivalence", optimum_ok && monotone_ok, detail);
}

void criterion_5() {
    Rng rng(31337);
    const ModelParams params = init_params(ModelConfig{}, 99);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(15));
        Bag bag;
        bag.bag_id = trial;
        for (int i = 0; i < n; ++i) {
            Instance inst;
            inst.instance_id = i;
            inst.pixels.resize(784);
            for (auto& p : inst.pixels) p = rng.uniform();
            bag.instances.push_back(std::move(inst));
        }
        // evaluation path: encode all, attention pool, bag head
        const Tensor H = encode_bag(bag, params);
        const auto probs = bag_predict(aggregate(H, attention_weights(H, params)), params);

        Bag shuffled = bag;
        Rng prng(5000 + static_cast<std::uint64_t>(trial));
        prng.shuffle(shuffled.instances);
        const Tensor Hs = encode_bag(shuffled, params);
        const auto probs_s = bag_predict(aggregate(Hs, attention_weights(Hs, params)), params);

        worst = std::max({worst, std::abs(probs[0] - probs_s[0]), std::abs(probs[1] - probs_s[1])});
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail), "20 bags, worst probability shift %.2e (need <= 1e-9)",
                  worst);
    report("C5 permutation invariance", worst <= 1e-9, detail);
}

void criterion_6() {
    const double kl_zero = kld_uniform({0.25, 0.25, 0.25, 0.25}, {0, 0, 1, 1});
    const double kl_pair = kld_uniform({0.9, 0.1}, {0, 0});
    const double kl_expect = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
    const LossBreakdown total = total_loss(0.7, 0.6, 0.3, LossWeights{});
    const bool ok = kl_zero <= 1e-12 && std::abs(kl_pair - kl_expect) <= 1e-4 &&
                    std::abs(kl_pair - 0.3681) <= 1e-3 && std::abs(total.total - 0.736) <= 1e-12;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "uniform KL %.1e, (0.9,0.1) KL %.6f (expect %.6f), total %.15f",
                  kl_zero, kl_pair, kl_expect, total.total);
    report("C6 loss-term unit values", ok, detail);
}

void criterion_7(const std::string& work) {
    const std::string d1 = work + "/pipe_a", d2 = work + "/pipe_b";
    fs::create_directories(d1);
    fs::create_directories(d2);
    bool ok = true;
    std::string detail;
    for (const std::string& dir : {d1, d2}) {
        const std::string gen = "gen-data --mnist-images " + mnist_dir() +
                                "/t10k-images-idx3-ubyte --mnist-labels " + mnist_dir() +
                                "/t10k-labels-idx1-ubyte --train-bags 20 --test-bags 8 "
                                "--mean-size 12 --size-std 3 --seed 11 --out " +
                                dir + "/ds.c2cb";
        const std::string tr = "train --data " + dir + "/ds.c2cb --k 2 --k-prime 4 --cap 8 " +
                               "--epochs 3 --seed 11 --out " + dir + "/run";
        const std::string ev = "eval --data " + dir + "/ds.c2cb --checkpoint " + dir +
                               "/run/checkpoint.c2cc --split test --out " + dir + "/eval";
        ok = ok && run_cli(gen) == 0 && run_cli(tr) == 0 && run_cli(ev) == 0;
    }
    if (!ok) {
        detail = "pipeline commands failed";
    } else {
        const std::vector<std::string> files = {"ds.c2cb", "run/checkpoint.c2cc",
                                                "eval/metrics.json", "eval/metrics.txt",
                                                "eval/attention.csv"};
        for (const std::string& f : files) {
            const bool same = read_bytes(d1 + "/" + f) == read_bytes(d2 + "/" + f);
            ok = ok && same;
            if (!same) detail += f + " differs; ";
        }
        if (ok) detail = "dataset, checkpoint, metrics and attention CSV byte-identical";
    }
    report("C7 pipeline determinism", ok, detail);
}

void criterion_8(const std::string& work) {
    const std::string images = mnist_dir() + "/t10k-images-idx3-ubyte";
    const std::string labels = mnist_dir() + "/t10k-labels-idx1-ubyte";
    bool ok = true;
    std::string detail;
    try {
        const IdxImages imgs = load_idx_images(images);
        const std::vector<int> labs = load_idx_labels(labels);
        if (imgs.images.size() != 10000 || labs.size() != 10000) {
            ok = false;
            detail = "official files parse to " + std::to_string(imgs.images.size()) + "/" +
                     std::to_string(labs.size()) + " items, expected 10000/10000";
        } else {
            detail = "10000 images and labels";
        }
    } catch (const Error& e) {
        ok = false;
        detail = std::string("official files failed to parse: ") + e.what();
    }

    // truncated copy -> length error
    {
        auto bytes = read_bytes(images);
        bytes.resize(bytes.size() - 1000);
        const std::string path = work + "/truncated-images";
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        f.close();
        try {
            load_idx_images(path);
            ok = false;
            detail += "; truncated file parsed (should fail)";
        } catch (const LengthError&) {
            detail += "; truncation -> length error";
        } catch (const Error&) {
            ok = false;
            detail += "; truncated file raised the wrong error";
        }
    }
    // wrong magic -> format error
    {
        auto bytes = read_bytes(images);
        bytes[3] = 0x01; // image magic 2051 -> label magic 2049
        const std::string path = work + "/wrong-magic";
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        f.close();
        try {
            load_idx_images(path);
            ok = false;
            detail += "; wrong-magic file parsed (should fail)";
        } catch (const FormatError&) {
            detail += "; wrong magic -> format error";
        } catch (const Error&) {
            ok = false;
            detail += "; wrong-magic file raised the wrong error";
        }
    }
    report("C8 IDX ingestion", ok, detail);
}

void criterion_9(const std::string& work, const std::string& desk_manifest) {
    // Harness behavior and schema only; 3 epochs keeps the sweep tractable.
    const std::string base = " --data " + desk_manifest +
                             " --epochs 3 --k-prime 8 --cap 32 --seed 1 --out ";
    bool ok = true;
    std::string detail;
    struct Sweep {
        std::string axis, values;
        int rows;
    };
    const std::vector<Sweep> sweeps = {{"k", "4 6 8 10", 4}, {"gamma", "1 0.1 0.01", 3}};
    for (const Sweep& s : sweeps) {
        const std::string out = work + "/ablate_" + s.axis;
        const int code =
            run_cli("ablate" + base + out + " --axis " + s.axis + " --values " + s.values);
        if (code != 0) {
            ok = false;
            detail += s.axis + " sweep exited " + std::to_string(code) + "; ";
            continue;
        }
        std::ifstream f(out + "/ablation.json");
        const std::string doc{std::istreambuf_iterator<char>(f),
                              std::istreambuf_iterator<char>()};
        int rows = 0;
        for (std::size_t pos = 0; (pos = doc.find("\"value\"", pos)) != std::string::npos; ++pos)
            ++rows;
        const bool schema = doc.find("\"accuracy\"") != std::string::npos &&
                            doc.find("\"roc_auc\"") != std::string::npos;
        if (rows != s.rows || !schema) {
            ok = false;
            detail += s.axis + " sweep: " + std::to_string(rows) + " rows; ";
        } else {
            detail += s.axis + ": " + std::to_string(rows) + " rows; ";
        }
    }
    report("C9 ablation harness", ok, detail);
}

} // namespace

int main(int argc, char** argv) {
    // optional filter: run only the named criteria, e.g. "./acceptance 1 4"
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    auto wanted = [&](std::initializer_list<int> ids) {
        if (only.empty()) return true;
        for (int id : ids)
            for (int o : only)
                if (o == id) return true;
        return false;
    };

    const std::string work = fs::temp_directory_path() /
                             ("c2c_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(work);

    try {
        DigitPool pool;
        if (wanted({1, 2, 9, 10})) {
            pool = load_pool(mnist_dir() + "/t10k-images-idx3-ubyte",
                             mnist_dir() + "/t10k-labels-idx1-ubyte");
        }
        if (wanted({1, 2, 10})) criterion_1_2_10(pool);
        if (wanted({3})) criterion_3();
        if (wanted({4})) criterion_4();
        if (wanted({5})) criterion_5();
        if (wanted({6})) criterion_6();
        if (wanted({7})) criterion_7(work);
        if (wanted({8})) criterion_8(work);
        if (wanted({9})) {
            const std::string manifest = work + "/desk.c2cb";
            save_manifest(desk_dataset(pool, 1), manifest);
            criterion_9(work, manifest);
        }
    } catch (const std::exception& e) {
        std::printf("[FAIL] acceptance suite aborted: %s\n", e.what());
        ++failures;
    }

    fs::remove_all(work);
    std::printf("%s (%d criterion failure%s)\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
                failures, failures == 1 ? "" : "s");
    return failures == 0 ? 0 : 1;
}
