#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "c2c/bags.hpp"
#include "c2c/graph.hpp"
#include "c2c/tensor.hpp"

namespace c2c {

struct ModelConfig {
    int embed_dim = 64; // l: dimension of the instance embedding
    int attn_dim = 64;  // d: hidden dimension of the attention scorer

    bool operator==(const ModelConfig&) const = default;
};

// Fixed input standardization applied by the encoder (the usual MNIST
// statistics). Part of G_e, not of the data model: stored pixels stay in
// [0,1].
inline constexpr double kInputMean = 0.1307;
inline constexpr double kInputStd = 0.3081;

// LeNet squashing constants: f(x) = A * tanh(S * x) keeps unit variance
// through the stack instead of damping it the way plain tanh does.
inline constexpr double kSquashA = 1.7159;
inline constexpr double kSquashS = 2.0 / 3.0;

// All trainable parameters. The encoder is a LeNet5-style stack
// (conv 6@5x5 -> pool -> conv 16@5x5 -> pool -> fc 120 -> fc 84) with the
// scaled-tanh squashing after each stage and a linear projection to the
// embedding dimension. The attention scorer is v2^T tanh(v1 h); both
// classifier heads are affine maps from the embedding to 2 logits.
struct ModelParams {
    ModelConfig config;
    // encoder
    Tensor conv1_w, conv1_b; // [6,1,5,5], [6]
    Tensor conv2_w, conv2_b; // [16,6,5,5], [16]
    Tensor fc1_w, fc1_b;     // [120,256], [120]
    Tensor fc2_w, fc2_b;     // [84,120], [84]
    Tensor proj_w, proj_b;   // [l,84], [l]
    // attention
    Tensor v1; // [d,l]
    Tensor v2; // [d]
    // heads
    Tensor bag_w, bag_b;   // [2,l], [2]
    Tensor inst_w, inst_b; // [2,l], [2]

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, drawn
// from the seeded stream so runs are reproducible.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Stacks instances into an encoder input batch [N,1,28,28]. subset selects
// instance positions; pass nullptr for all instances in order.
Tensor pack_instances(const Bag& bag, const std::vector<int>* subset);

// --- evaluation path (no gradients) ---

Tensor encode(const Tensor& batch, const ModelParams& p);          // [N,l]
Tensor encode_bag(const Bag& bag, const ModelParams& p);           // [N,l]
std::vector<double> attention_weights(const Tensor& H, const ModelParams& p); // simplex
Tensor aggregate(const Tensor& H, const std::vector<double>& a);   // [l]
Tensor mean_aggregate(const Tensor& H);                            // [l]
std::array<double, 2> bag_predict(const Tensor& z, const ModelParams& p);
std::vector<std::array<double, 2>> instance_predict(const Tensor& H, const ModelParams& p);

// --- autodiff path ---

// Parameter leaves registered in a graph, same names as ModelParams::named().
struct ModelVars {
    Graph::Var conv1_w, conv1_b, conv2_w, conv2_b;
    Graph::Var fc1_w, fc1_b, fc2_w, fc2_b, proj_w, proj_b;
    Graph::Var v1, v2;
    Graph::Var bag_w, bag_b, inst_w, inst_b;
};

ModelVars register_params(Graph& g, const ModelParams& p);
Graph::Var encode_graph(Graph& g, const ModelVars& m, Graph::Var batch); // [N,l]
Graph::Var attention_graph(Graph& g, const ModelVars& m, Graph::Var H);  // [N]

// --- checkpoints ---

// Self-describing container (version, config echo, named tensors, checksum);
// save/load round-trips bit-identically.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace c2c
