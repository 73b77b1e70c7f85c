#include "c2c/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "c2c/errors.hpp"

namespace c2c {

std::string to_string(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::kCluster: return "cluster";
        case SamplingStrategy::kTopk: return "topk";
        case SamplingStrategy::kRandom: return "random";
    }
    return "?";
}

std::string to_string(Pooling p) {
    return p == Pooling::kAttention ? "attention" : "mean";
}

SamplingStrategy sampling_from_string(const std::string& s) {
    if (s == "cluster") return SamplingStrategy::kCluster;
    if (s == "topk") return SamplingStrategy::kTopk;
    if (s == "random") return SamplingStrategy::kRandom;
    throw ArgumentError("unknown sampling strategy '" + s + "' (cluster|topk|random)");
}

Pooling pooling_from_string(const std::string& s) {
    if (s == "attention") return Pooling::kAttention;
    if (s == "mean") return Pooling::kMean;
    throw ArgumentError("unknown pooling '" + s + "' (attention|mean)");
}

void TrainConfig::validate() const {
    if (k < 1) throw ArgumentError("k must be >= 1");
    if (k_prime < 1) throw ArgumentError("k_prime must be >= 1");
    if (n_prime_cap < 1) throw ArgumentError("n_prime_cap must be >= 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0)
        throw ArgumentError("loss weights must be non-negative");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ArgumentError("val_fraction must be in [0, 1)");
    if (kmeans_restarts < 1 || kmeans_max_iter < 1)
        throw ArgumentError("k-means restarts and max_iter must be >= 1");
    if (model.embed_dim < 1 || model.attn_dim < 1)
        throw ArgumentError("model dimensions must be positive");
    if (threads < 0) throw ArgumentError("threads must be >= 0");
}

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must be
// independent; results keyed by i keep the outcome order-deterministic.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct BagPlan {
    SamplingPlan plan;
    std::vector<int> cluster_of_selected;
};

// Phase 1: frozen-parameter embedding, per-bag k-means and sampling plans.
std::vector<BagPlan> plan_epoch(const std::vector<Bag>& bags, const ModelParams& params,
                                const TrainConfig& cfg, int epoch) {
    std::vector<BagPlan> plans(bags.size());
    parallel_for(static_cast<int>(bags.size()), resolve_threads(cfg.threads), [&](int i) {
        const Bag& bag = bags[static_cast<std::size_t>(i)];
        const Tensor H = encode_bag(bag, params);
        const Tensor Hn = l2_normalize(H);
        Rng crng = derive_rng(cfg.seed, Stream::kCluster, static_cast<std::uint64_t>(bag.bag_id),
                              static_cast<std::uint64_t>(epoch));
        const ClusterAssignment assign =
            kmeans(Hn, cfg.k, cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.kmeans_restarts, crng);

        Rng srng = derive_rng(cfg.seed, Stream::kSample, static_cast<std::uint64_t>(bag.bag_id),
                              static_cast<std::uint64_t>(epoch));
        BagPlan bp;
        switch (cfg.sampling) {
            case SamplingStrategy::kCluster:
                bp.plan = cluster_sample(assign, cfg.k_prime, cfg.n_prime_cap, srng);
                break;
            case SamplingStrategy::kTopk: {
                // Score = instance head's positive-class probability under
                // the frozen parameters.
                const auto probs = instance_predict(H, params);
                std::vector<double> scores(probs.size());
                for (std::size_t n = 0; n < probs.size(); ++n) scores[n] = probs[n][1];
                bp.plan = topk_sample(scores, cfg.n_prime_cap);
                break;
            }
            case SamplingStrategy::kRandom:
                bp.plan = random_sample(static_cast<int>(bag.instances.size()), cfg.n_prime_cap,
                                        srng);
                break;
        }
        bp.cluster_of_selected.reserve(bp.plan.selected.size());
        for (int idx : bp.plan.selected)
            bp.cluster_of_selected.push_back(assign.assignment[static_cast<std::size_t>(idx)]);

        // Sampling-contract audit (cluster strategy): exactly min(|c|, k')
        // drawn from each cluster before the cap subsample.
        if (cfg.sampling == SamplingStrategy::kCluster) {
            std::vector<int> sizes(static_cast<std::size_t>(assign.k), 0);
            for (int c : assign.assignment) sizes[static_cast<std::size_t>(c)] += 1;
            for (int c = 0; c < assign.k; ++c) {
                const int expect = std::min(sizes[static_cast<std::size_t>(c)], cfg.k_prime);
                if (bp.plan.pre_cap_per_cluster[static_cast<std::size_t>(c)] != expect)
                    throw NumericError("sampling audit: cluster " + std::to_string(c) + " of bag " +
                                       std::to_string(bag.bag_id) + " drew " +
                                       std::to_string(
                                           bp.plan.pre_cap_per_cluster[static_cast<std::size_t>(c)]) +
                                       " instead of " + std::to_string(expect));
            }
        }
        plans[static_cast<std::size_t>(i)] = std::move(bp);
    });
    return plans;
}

struct StepOutcome {
    LossBreakdown loss;
    double positive_prob = 0.0;
};

// Phase 2, one bag: build the loss graph on the sampled instances, backward,
// Adam. Returns the loss breakdown and the bag's positive probability.
StepOutcome train_step(const Bag& bag, const BagPlan& bp, ModelParams& params, AdamState& opt,
                       const TrainConfig& cfg) {
    Graph g;
    const ModelVars m = register_params(g, params);
    const Graph::Var batch = g.input(pack_instances(bag, &bp.plan.selected));
    const Graph::Var H = encode_graph(g, m, batch);
    const Graph::Var attn = attention_graph(g, m, H);
    const Graph::Var z =
        cfg.pooling == Pooling::kAttention ? g.weighted_sum_rows(H, attn) : g.mean_rows(H);
    const Graph::Var bag_probs = g.softmax(g.affine(z, m.bag_w, m.bag_b));
    const Graph::Var inst_probs = g.softmax(g.affine(H, m.inst_w, m.inst_b));

    const Graph::Var l_wsi = g.ce_pick(bag_probs, bag.label);
    const Graph::Var l_patch = g.ce_pick_mean(inst_probs, bag.label);
    const Graph::Var l_kld = g.kld_uniform(attn, bp.cluster_of_selected);
    const Graph::Var total = g.add(g.add(g.scale(l_wsi, cfg.weights.alpha),
                                         g.scale(l_patch, cfg.weights.beta)),
                                   g.scale(l_kld, cfg.weights.gamma));

    StepOutcome out;
    out.loss.l_wsi = g.value(l_wsi).v[0];
    out.loss.l_patch = g.value(l_patch).v[0];
    out.loss.l_kld = g.value(l_kld).v[0];
    out.loss.total = g.value(total).v[0];
    out.positive_prob = g.value(bag_probs).v[1];

    g.backward(total);
    adam_step(params.named(), g.grads(), opt, cfg.learning_rate, cfg.adam.beta1, cfg.adam.beta2,
              cfg.adam.eps);
    return out;
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

} // namespace

void adam_step(std::vector<std::pair<std::string, Tensor*>> params, const GradientMap& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (auto& [name, tensor] : params) {
        const auto it = grads.find(name);
        if (it == grads.end())
            throw ArgumentError("adam_step: no gradient for parameter '" + name + "'");
        const Tensor& g = it->second;
        if (!g.same_shape(*tensor))
            throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) +
                             " does not match parameter '" + name + "' " +
                             shape_str(tensor->shape));
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(tensor->shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(tensor->shape)).first->second;
        for (std::size_t i = 0; i < tensor->v.size(); ++i) {
            m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
            v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            tensor->v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

EpochRecord run_epoch(const std::vector<Bag>& bags, ModelParams& params, AdamState& opt,
                      const TrainConfig& cfg, int epoch, SamplingAudit* audit) {
    if (bags.empty()) throw ArgumentError("run_epoch: no bags");
    const auto t0 = std::chrono::steady_clock::now();

    // Phase 1 against a frozen snapshot of the encoder.
    const std::vector<BagPlan> plans = plan_epoch(bags, params, cfg, epoch);

    // Phase 2: sequential updates, batch size 1, reshuffled order per epoch.
    std::vector<int> order(bags.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(cfg.seed, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<int> labels, preds;
    std::vector<double> scores;
    for (int i : order) {
        const Bag& bag = bags[static_cast<std::size_t>(i)];
        const BagPlan& bp = plans[static_cast<std::size_t>(i)];
        if (static_cast<int>(bp.plan.selected.size()) > cfg.n_prime_cap)
            throw NumericError("sampling audit: bag " + std::to_string(bag.bag_id) +
                               " contributes " + std::to_string(bp.plan.selected.size()) +
                               " instances, cap is " + std::to_string(cfg.n_prime_cap));
        StepOutcome out;
        try {
            out = train_step(bag, bp, params, opt, cfg);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ", bag " +
                               std::to_string(bag.bag_id) + ": " + e.what());
        }
        if (!std::isfinite(out.loss.total))
            throw NumericError("epoch " + std::to_string(epoch) + ", bag " +
                               std::to_string(bag.bag_id) + ": non-finite loss");
        if (audit) {
            audit->steps += 1;
            audit->max_step_instances =
                std::max(audit->max_step_instances, static_cast<int>(bp.plan.selected.size()));
        }
        rec.mean_loss.l_wsi += out.loss.l_wsi;
        rec.mean_loss.l_patch += out.loss.l_patch;
        rec.mean_loss.l_kld += out.loss.l_kld;
        rec.mean_loss.total += out.loss.total;
        labels.push_back(bag.label);
        preds.push_back(out.positive_prob > 0.5 ? 1 : 0);
        scores.push_back(out.positive_prob);
    }
    const double n = static_cast<double>(bags.size());
    rec.mean_loss.l_wsi /= n;
    rec.mean_loss.l_patch /= n;
    rec.mean_loss.l_kld /= n;
    rec.mean_loss.total /= n;
    rec.train_metrics = compute_metrics(labels, preds, scores);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

TrainResult train(const BagDataset& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (dataset.train.empty()) throw ArgumentError("train: dataset has no training bags");

    // Seeded validation split.
    std::vector<int> idx(dataset.train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng = derive_rng(cfg.seed, Stream::kValSplit);
    split_rng.shuffle(idx);
    const int n_val = std::min<int>(static_cast<int>(dataset.train.size()) - 1,
                                    static_cast<int>(std::llround(
                                        cfg.val_fraction * static_cast<double>(idx.size()))));
    std::vector<Bag> val_bags, fit_bags;
    TrainResult result;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Bag& bag = dataset.train[static_cast<std::size_t>(idx[i])];
        if (static_cast<int>(i) < n_val) {
            val_bags.push_back(bag);
            result.val_bag_ids.push_back(bag.bag_id);
        } else {
            fit_bags.push_back(bag);
        }
    }
    std::sort(result.val_bag_ids.begin(), result.val_bag_ids.end());

    result.params = init_params(cfg.model, cfg.seed);
    AdamState opt;
    for (int e = 0; e < cfg.epochs; ++e) {
        EpochRecord rec = run_epoch(fit_bags, result.params, opt, cfg, e, &result.audit);
        if (!val_bags.empty())
            rec.val_metrics = evaluate(val_bags, result.params, cfg.pooling, cfg.threads).first;
        if (on_epoch) on_epoch(rec);
        result.epochs.push_back(std::move(rec));
    }
    return result;
}

std::pair<MetricsReport, std::vector<AttentionRecord>> evaluate(const std::vector<Bag>& bags,
                                                                const ModelParams& params,
                                                                Pooling pooling, int threads) {
    if (bags.empty()) throw ArgumentError("evaluate: no bags");

    struct BagEval {
        int label = 0;
        int pred = 0;
        double score = 0.0;
        std::vector<AttentionRecord> records;
    };
    std::vector<BagEval> evals(bags.size());
    parallel_for(static_cast<int>(bags.size()), resolve_threads(threads), [&](int i) {
        const Bag& bag = bags[static_cast<std::size_t>(i)];
        const Tensor H = encode_bag(bag, params);
        const std::vector<double> attn = attention_weights(H, params);
        const Tensor z = pooling == Pooling::kAttention ? aggregate(H, attn) : mean_aggregate(H);
        const auto probs = bag_predict(z, params);

        BagEval ev;
        ev.label = bag.label;
        ev.score = probs[1];
        ev.pred = probs[1] > probs[0] ? 1 : 0; // tie -> negative
        ev.records.reserve(bag.instances.size());
        for (std::size_t n = 0; n < bag.instances.size(); ++n) {
            AttentionRecord r;
            r.bag_id = bag.bag_id;
            r.instance_id = bag.instances[n].instance_id;
            r.digit = bag.instances[n].source_label;
            r.cluster_id = -1;
            r.attention = attn[n];
            ev.records.push_back(r);
        }
        evals[static_cast<std::size_t>(i)] = std::move(ev);
    });

    std::vector<int> labels, preds;
    std::vector<double> scores;
    std::vector<AttentionRecord> records;
    for (const BagEval& ev : evals) {
        labels.push_back(ev.label);
        preds.push_back(ev.pred);
        scores.push_back(ev.score);
        records.insert(records.end(), ev.records.begin(), ev.records.end());
    }
    return {compute_metrics(labels, preds, scores), std::move(records)};
}

std::vector<AblationRow> ablate(const BagDataset& dataset, const TrainConfig& base,
                                const std::string& axis, const std::vector<std::string>& values) {
    if (values.empty()) throw ArgumentError("ablate: no values given");
    std::vector<AblationRow> rows;
    for (const std::string& value : values) {
        TrainConfig cfg = base; // shared seed across values
        if (axis == "k") {
            cfg.k = std::stoi(value);
        } else if (axis == "gamma") {
            cfg.weights.gamma = std::stod(value);
        } else if (axis == "sampling") {
            cfg.sampling = sampling_from_string(value);
        } else if (axis == "pooling") {
            cfg.pooling = pooling_from_string(value);
        } else {
            throw ArgumentError("unknown ablation axis '" + axis + "' (k|gamma|sampling|pooling)");
        }
        const TrainResult result = train(dataset, cfg);
        AblationRow row;
        row.value = value;
        row.metrics = evaluate(dataset.test, result.params, cfg.pooling, cfg.threads).first;
        rows.push_back(std::move(row));
    }
    return rows;
}

GradCheckReport composite_loss_gradient_check(std::uint64_t seed, double epsilon,
                                              double tolerance, int min_coords_per_tensor) {
    Rng rng = derive_rng(seed, Stream::kGradCheck, 1);
    ModelConfig mc{.embed_dim = 16, .attn_dim = 8};
    ModelParams params = init_params(mc, seed);

    // two-bag toy dataset: random pixels, one bag per class
    std::vector<Bag> bags(2);
    for (int b = 0; b < 2; ++b) {
        bags[static_cast<std::size_t>(b)].bag_id = b;
        bags[static_cast<std::size_t>(b)].label = b;
        for (int i = 0; i < 3; ++i) {
            Instance inst;
            inst.instance_id = i;
            inst.pixels.resize(784);
            for (auto& px : inst.pixels) px = rng.uniform();
            bags[static_cast<std::size_t>(b)].instances.push_back(std::move(inst));
        }
    }
    const std::vector<std::vector<int>> clusters = {{0, 0, 1}, {0, 1, 1}};
    const LossWeights w;

    auto build = [&](Graph& g) {
        Graph::Var total{};
        const ModelVars m = register_params(g, params);
        for (int b = 0; b < 2; ++b) {
            const Bag& bag = bags[static_cast<std::size_t>(b)];
            const Graph::Var H = encode_graph(g, m, g.input(pack_instances(bag, nullptr)));
            const Graph::Var attn = attention_graph(g, m, H);
            const Graph::Var z = g.weighted_sum_rows(H, attn);
            const Graph::Var l_wsi =
                g.ce_pick(g.softmax(g.affine(z, m.bag_w, m.bag_b)), bag.label);
            const Graph::Var l_patch =
                g.ce_pick_mean(g.softmax(g.affine(H, m.inst_w, m.inst_b)), bag.label);
            const Graph::Var l_kld = g.kld_uniform(attn, clusters[static_cast<std::size_t>(b)]);
            const Graph::Var bag_total = g.add(
                g.add(g.scale(l_wsi, w.alpha), g.scale(l_patch, w.beta)), g.scale(l_kld, w.gamma));
            total = b == 0 ? bag_total : g.add(total, bag_total);
        }
        return g.scale(total, 0.5);
    };

    auto loss_value = [&]() {
        Graph g;
        return g.value(build(g)).v[0];
    };
    Graph g;
    g.backward(build(g));
    return gradient_check(loss_value, params.named(), g.grads(), epsilon, tolerance, seed,
                          min_coords_per_tensor);
}

AttentionDispersion attention_uniformity_stats(const std::vector<AttentionRecord>& records,
                                               const std::vector<int>& positive_digits) {
    auto positive = [&](int digit) {
        return std::find(positive_digits.begin(), positive_digits.end(), digit) !=
               positive_digits.end();
    };
    std::map<int, std::vector<double>> by_bag; // positive-digit weights per bag
    for (const AttentionRecord& r : records)
        if (positive(r.digit)) by_bag[r.bag_id].push_back(r.attention);

    AttentionDispersion out;
    std::vector<double> cvs;
    for (const auto& [bag_id, ws] : by_bag) {
        if (ws.size() < 2) continue; // CV undefined for a single instance
        double mean = 0.0;
        for (double w : ws) mean += w;
        mean /= static_cast<double>(ws.size());
        double var = 0.0;
        for (double w : ws) var += (w - mean) * (w - mean);
        var /= static_cast<double>(ws.size()); // population variance
        const double cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
        out.per_bag.emplace_back(bag_id, cv);
        cvs.push_back(cv);
    }
    out.median = median_of(std::move(cvs));
    return out;
}

} // namespace c2c
