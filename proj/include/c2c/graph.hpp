#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "c2c/tensor.hpp"

namespace c2c {

// Gradient of a scalar loss with respect to every registered parameter,
// keyed by parameter name. Parameters not on the loss path map to zeros.
using GradientMap = std::map<std::string, Tensor>;

// Probabilities below this are clamped before taking logs, which bounds the
// cross-entropy terms and avoids -inf on saturated predictions.
inline constexpr double kProbFloor = 1e-12;

namespace ops {

// Forward kernels. The autodiff graph and the no-gradient evaluation path
// share these so both routes compute bit-identical values.

// x: [in] or [N,in]; W: [out,in]; b: [out] or null -> [out] / [N,out]
Tensor affine(const Tensor& x, const Tensor& W, const Tensor* b);
// x: [N,C,H,W]; k: [F,C,kh,kw]; b: [F] -> [N,F,H-kh+1,W-kw+1], stride 1, no padding
Tensor conv2d_valid(const Tensor& x, const Tensor& k, const Tensor& b);
// 2x2/stride-2 max pooling; H and W must be even. Ties break to the first
// element in row-major order. argmax (flat input indices) is optional.
Tensor maxpool2(const Tensor& x, std::vector<std::int64_t>* argmax);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
// Softmax / log-softmax over the last dimension, max-subtracted for stability.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// z = sum_n a[n] * H[n,:]  (H: [N,l], a: [N] -> [l])
Tensor weighted_sum_rows(const Tensor& H, const Tensor& a);

} // namespace ops

// Reverse-mode autodiff over a dynamic tape. A Graph is built per evaluation:
// register parameter leaves, apply operators, then call backward() on the
// scalar loss node and collect grads().
class Graph {
  public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves.
    Var input(Tensor t);                                // constant, no gradient
    Var param(const std::string& name, const Tensor& t); // trainable leaf

    // Operators (shapes as in c2c::ops).
    Var affine(Var x, Var W, Var b);
    Var linear(Var x, Var W); // affine without bias
    Var conv2d_valid(Var x, Var k, Var b);
    Var maxpool2(Var x);
    Var relu(Var x);
    Var tanh(Var x);
    Var reshape(Var x, Shape s);
    Var softmax(Var x);
    Var log_softmax(Var x);
    Var weighted_sum_rows(Var H, Var a);
    Var mean_rows(Var H);
    Var add(Var a, Var b);       // scalar + scalar
    Var scale(Var a, double c);  // scalar * constant

    // Loss heads.
    // -log(max(probs[label], kProbFloor)); probs: [C]
    Var ce_pick(Var probs, int label);
    // mean over rows of -log(max(probs[n,label], kProbFloor)); probs: [N,C]
    Var ce_pick_mean(Var probs, int label);
    // Mean over clusters with >= 2 members of KL(within-cluster renormalized
    // attention || uniform). cluster_of[i] is the cluster id of attention[i].
    Var kld_uniform(Var attention, const std::vector<int>& cluster_of);

    // Reverse pass from a scalar loss node. Throws ArgumentError for a
    // non-scalar loss and NumericError when a non-finite value shows up,
    // naming the operator it was seen at.
    void backward(Var loss);

    // Gradients of every registered parameter after backward(); zeros for
    // parameters the loss does not depend on.
    GradientMap grads() const;

    const Tensor& value(Var x) const;
    const Tensor& grad(Var x) const; // zeros-shaped if untouched

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;               // allocated lazily during backward
        bool requires_grad = false;
        const char* op = "leaf";
        std::function<void()> back; // accumulates into input grads
    };

    Var make(Tensor value, bool requires_grad, const char* op);
    Tensor& gbuf(int id); // grad buffer, zero-allocated on first touch
    const Node& node(Var x) const;
    void check_valid(Var x, const char* who) const;

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> params_;
    friend struct GraphDetail;
};

} // namespace c2c
