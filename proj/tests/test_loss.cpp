#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "c2c/graph.hpp"
#include "c2c/loss.hpp"
#include "c2c/rng.hpp"

using namespace c2c;

TEST_CASE("bag cross-entropy") {
    CHECK(bag_ce({0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bag_ce({0.5, 0.5}, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bag_ce({1.0, 0.0}, 0) == 0.0);
    CHECK(bag_ce({0.2, 0.8}, 1) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    // clamped at 1e-12 instead of diverging
    CHECK(bag_ce({0.0, 1.0}, 0) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(bag_ce({0.5, 0.5}, 2), ArgumentError);
}

TEST_CASE("instance cross-entropy inherits the bag label") {
    SUBCASE("uniform predictions give ln 2") {
        std::vector<std::array<double, 2>> probs(7, {0.5, 0.5});
        CHECK(instance_ce(probs, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("perfect predictions give 0") {
        std::vector<std::array<double, 2>> probs(3, {0.0, 1.0});
        CHECK(instance_ce(probs, 1) == 0.0);
    }
    SUBCASE("two-instance hand value") {
        const std::vector<std::array<double, 2>> probs = {{0.9, 0.1}, {0.6, 0.4}};
        const double expected = (-std::log(0.9) - std::log(0.6)) / 2.0;
        CHECK(instance_ce(probs, 0) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(instance_ce(probs, 0) == doctest::Approx(0.3081).epsilon(1e-4));
    }
    SUBCASE("single instance equals its bag-label cross-entropy exactly") {
        const std::array<double, 2> p = {0.37, 0.63};
        CHECK(instance_ce({p}, 1) == bag_ce(p, 1));
    }
}

TEST_CASE("KL against the within-cluster uniform distribution") {
    SUBCASE("uniform attention inside every cluster gives 0") {
        CHECK(kld_uniform({0.25, 0.25, 0.25, 0.25}, {0, 0, 1, 1}) <= 1e-12);
        CHECK(kld_uniform({0.1, 0.1, 0.4, 0.4}, {0, 0, 1, 1}) <= 1e-12);
    }
    SUBCASE("two-member cluster with renormalized (0.9, 0.1)") {
        const double expected = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
        CHECK(kld_uniform({0.9, 0.1}, {0, 0}) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(kld_uniform({0.9, 0.1}, {0, 0}) == doctest::Approx(0.3681).epsilon(1e-3));
        // renormalization: same result when the cluster holds 0.5 of the mass
        CHECK(kld_uniform({0.45, 0.05, 0.5}, {0, 0, 1}) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("all-singleton clusters give 0") {
        CHECK(kld_uniform({0.2, 0.3, 0.5}, {0, 1, 2}) == 0.0);
    }
    SUBCASE("mean over multi-member clusters") {
        // cluster 0 contributes KL((0.9,0.1)||u), cluster 1 is uniform
        const double kl0 = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
        const double got = kld_uniform({0.45, 0.05, 0.25, 0.25}, {0, 0, 1, 1});
        CHECK(got == doctest::Approx(kl0 / 2.0).epsilon(1e-12));
    }
    SUBCASE("non-negative on random simplex inputs") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(10));
            std::vector<double> a(static_cast<std::size_t>(n));
            double sum = 0.0;
            for (auto& x : a) {
                x = rng.uniform() + 1e-6;
                sum += x;
            }
            for (auto& x : a) x /= sum;
            std::vector<int> clusters(static_cast<std::size_t>(n));
            for (auto& c : clusters) c = static_cast<int>(rng.below(3));
            CHECK(kld_uniform(a, clusters) >= 0.0);
        }
    }
}

TEST_CASE("weighted total loss") {
    const LossWeights defaults;
    SUBCASE("hand value with default weights") {
        const LossBreakdown b = total_loss(0.7, 0.6, 0.3, defaults);
        CHECK(std::abs(b.total - 0.736) <= 1e-12);
        CHECK(b.l_wsi == 0.7);
        CHECK(b.l_patch == 0.6);
        CHECK(b.l_kld == 0.3);
    }
    SUBCASE("gamma = 0 ignores the KL term") {
        LossWeights w = defaults;
        w.gamma = 0.0;
        CHECK(total_loss(0.7, 0.6, 123.0, w).total == total_loss(0.7, 0.6, 0.0, w).total);
    }
    SUBCASE("all terms zero") { CHECK(total_loss(0.0, 0.0, 0.0, defaults).total == 0.0); }
    SUBCASE("breakdown identity holds") {
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            LossWeights w{rng.uniform(), rng.uniform(), rng.uniform()};
            const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
            const LossBreakdown bd = total_loss(a, b, c, w);
            CHECK(std::abs(bd.total - (w.alpha * bd.l_wsi + w.beta * bd.l_patch +
                                       w.gamma * bd.l_kld)) <= 1e-12);
        }
    }
    SUBCASE("doubling gamma doubles the KL contribution exactly") {
        LossWeights w1 = defaults, w2 = defaults;
        w2.gamma = 2.0 * w1.gamma;
        const double base = total_loss(0.7, 0.6, 0.0, w1).total;
        const double c1 = total_loss(0.7, 0.6, 0.3, w1).total - base;
        const double c2 = total_loss(0.7, 0.6, 0.3, w2).total - base;
        CHECK(c2 == 2.0 * c1);
    }
}

TEST_CASE("graph loss heads agree with the plain functions") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        // random simplex rows
        const int n = 2 + static_cast<int>(rng.below(6));
        Tensor probs = Tensor::zeros({n, 2});
        std::vector<std::array<double, 2>> rows(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double p = 0.01 + 0.98 * rng.uniform();
            probs.at2(i, 0) = p;
            probs.at2(i, 1) = 1.0 - p;
            rows[static_cast<std::size_t>(i)] = {p, 1.0 - p};
        }
        std::vector<double> attn(static_cast<std::size_t>(n));
        double sum = 0.0;
        for (auto& x : attn) {
            x = rng.uniform() + 1e-3;
            sum += x;
        }
        for (auto& x : attn) x /= sum;
        std::vector<int> clusters(static_cast<std::size_t>(n));
        for (auto& c : clusters) c = static_cast<int>(rng.below(2));

        const int label = static_cast<int>(rng.below(2));
        Graph g;
        auto probs_v = g.input(probs);
        auto row0 = g.reshape(g.input(Tensor({1, 2}, {rows[0][0], rows[0][1]})), {2});
        auto attn_v = g.input(Tensor({n}, std::vector<double>(attn)));
        CHECK(g.value(g.ce_pick(row0, label)).v[0] ==
              doctest::Approx(bag_ce(rows[0], label)).epsilon(1e-12));
        CHECK(g.value(g.ce_pick_mean(probs_v, label)).v[0] ==
              doctest::Approx(instance_ce(rows, label)).epsilon(1e-12));
        CHECK(g.value(g.kld_uniform(attn_v, clusters)).v[0] ==
              doctest::Approx(kld_uniform(attn, clusters)).epsilon(1e-12));
    }
}

TEST_CASE("the KL term alone trains the attention parameters") {
    // alpha = beta = 0, gamma > 0: gradients must still reach v1 and v2.
    Rng rng(23);
    Tensor H = Tensor::zeros({5, 4});
    for (auto& x : H.v) x = 2.0 * rng.uniform() - 1.0;
    Tensor v1 = Tensor::zeros({3, 4});
    for (auto& x : v1.v) x = 2.0 * rng.uniform() - 1.0;
    Tensor v2 = Tensor::zeros({3});
    for (auto& x : v2.v) x = 2.0 * rng.uniform() - 1.0;
    const std::vector<int> clusters = {0, 0, 1, 1, 1};

    Graph g;
    auto h = g.input(H);
    auto pv1 = g.param("v1", v1);
    auto pv2 = g.param("v2", v2);
    auto scores = g.reshape(g.linear(g.tanh(g.linear(h, pv1)), g.reshape(pv2, {1, 3})), {5});
    auto attn = g.softmax(scores);
    auto loss = g.scale(g.kld_uniform(attn, clusters), 0.1);
    g.backward(loss);

    const GradientMap grads = g.grads();
    double v1_norm = 0.0, v2_norm = 0.0;
    for (double x : grads.at("v1").v) v1_norm += x * x;
    for (double x : grads.at("v2").v) v2_norm += x * x;
    CHECK(v1_norm > 0.0);
    CHECK(v2_norm > 0.0);
}
