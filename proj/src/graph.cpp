#include "c2c/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace c2c {
namespace ops {

Tensor affine(const Tensor& x, const Tensor& W, const Tensor* b) {
    if (W.ndim() != 2)
        throw ShapeError("affine: weight must be 2-D, got " + shape_str(W.shape));
    const int out = W.dim(0);
    const int in = W.dim(1);
    if (b && (b->ndim() != 1 || b->dim(0) != out))
        throw ShapeError("affine: bias shape " + shape_str(b->shape) + " does not match weight " +
                         shape_str(W.shape));

    const bool batched = x.ndim() == 2;
    if (!batched && x.ndim() != 1)
        throw ShapeError("affine: input must be 1-D or 2-D, got " + shape_str(x.shape));
    const int cols = batched ? x.dim(1) : x.dim(0);
    if (cols != in)
        throw ShapeError("affine: input shape " + shape_str(x.shape) + " incompatible with weight " +
                         shape_str(W.shape));
    const int rows = batched ? x.dim(0) : 1;

    Tensor y = Tensor::zeros(batched ? Shape{rows, out} : Shape{out});
    for (int n = 0; n < rows; ++n) {
        const double* xr = x.v.data() + static_cast<std::size_t>(n) * in;
        double* yr = y.v.data() + static_cast<std::size_t>(n) * out;
        for (int o = 0; o < out; ++o) {
            const double* wr = W.v.data() + static_cast<std::size_t>(o) * in;
            double acc = b ? b->v[static_cast<std::size_t>(o)] : 0.0;
            for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
    return y;
}

Tensor conv2d_valid(const Tensor& x, const Tensor& k, const Tensor& b) {
    if (x.ndim() != 4)
        throw ShapeError("conv2d_valid: input must be [N,C,H,W], got " + shape_str(x.shape));
    if (k.ndim() != 4)
        throw ShapeError("conv2d_valid: kernels must be [F,C,kh,kw], got " + shape_str(k.shape));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int F = k.dim(0), kc = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (kc != C)
        throw ShapeError("conv2d_valid: input channels " + shape_str(x.shape) +
                         " do not match kernel " + shape_str(k.shape));
    if (b.ndim() != 1 || b.dim(0) != F)
        throw ShapeError("conv2d_valid: bias shape " + shape_str(b.shape) + " does not match kernel " +
                         shape_str(k.shape));
    if (kh > H || kw > W)
        throw ShapeError("conv2d_valid: kernel " + shape_str(k.shape) + " larger than input " +
                         shape_str(x.shape));
    const int OH = H - kh + 1, OW = W - kw + 1;

    Tensor y = Tensor::zeros({N, F, OH, OW});
    for (int n = 0; n < N; ++n) {
        for (int f = 0; f < F; ++f) {
            double* ymap = y.v.data() + ((static_cast<std::size_t>(n) * F + f) * OH) * OW;
            const double bias = b.v[static_cast<std::size_t>(f)];
            for (int i = 0; i < OH * OW; ++i) ymap[i] = bias;
            for (int c = 0; c < C; ++c) {
                const double* xmap = x.v.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
                const double* kmap = k.v.data() + ((static_cast<std::size_t>(f) * C + c) * kh) * kw;
                for (int i = 0; i < kh; ++i) {
                    for (int j = 0; j < kw; ++j) {
                        const double w = kmap[i * kw + j];
                        for (int oh = 0; oh < OH; ++oh) {
                            const double* xrow = xmap + (oh + i) * W + j;
                            double* yrow = ymap + oh * OW;
                            for (int ow = 0; ow < OW; ++ow) yrow[ow] += w * xrow[ow];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor maxpool2(const Tensor& x, std::vector<std::int64_t>* argmax) {
    if (x.ndim() != 4)
        throw ShapeError("maxpool2: input must be [N,C,H,W], got " + shape_str(x.shape));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("maxpool2: H and W must be even, got " + shape_str(x.shape));
    const int OH = H / 2, OW = W / 2;

    Tensor y = Tensor::zeros({N, C, OH, OW});
    if (argmax) argmax->assign(y.v.size(), 0);
    std::int64_t o = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* xmap = x.v.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            const std::int64_t base = ((static_cast<std::int64_t>(n) * C + c) * H) * W;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow, ++o) {
                    // First element in row-major order wins ties.
                    std::int64_t best = 2 * oh * W + 2 * ow;
                    double bv = xmap[best];
                    const std::int64_t cands[3] = {best + 1, best + W, best + W + 1};
                    for (std::int64_t cand : cands) {
                        if (xmap[cand] > bv) {
                            bv = xmap[cand];
                            best = cand;
                        }
                    }
                    y.v[static_cast<std::size_t>(o)] = bv;
                    if (argmax) (*argmax)[static_cast<std::size_t>(o)] = base + best;
                }
            }
        }
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& e : y.v) e = e > 0.0 ? e : 0.0;
    return y;
}

Tensor tanh(const Tensor& x) {
    Tensor y = x;
    for (auto& e : y.v) e = std::tanh(e);
    return y;
}

static int lastdim(const Tensor& x, const char* who) {
    if (x.ndim() < 1 || x.dim(x.ndim() - 1) < 1)
        throw ShapeError(std::string(who) + ": needs a non-empty last dimension, got " +
                         shape_str(x.shape));
    return x.dim(x.ndim() - 1);
}

Tensor softmax(const Tensor& x) {
    const int C = lastdim(x, "softmax");
    Tensor y = x;
    const std::int64_t rows = x.numel() / C;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* p = y.v.data() + r * C;
        double mx = p[0];
        for (int i = 1; i < C; ++i) mx = std::max(mx, p[i]);
        double sum = 0.0;
        for (int i = 0; i < C; ++i) {
            p[i] = std::exp(p[i] - mx);
            sum += p[i];
        }
        for (int i = 0; i < C; ++i) p[i] /= sum;
    }
    return y;
}

Tensor log_softmax(const Tensor& x) {
    const int C = lastdim(x, "log_softmax");
    Tensor y = x;
    const std::int64_t rows = x.numel() / C;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* p = y.v.data() + r * C;
        double mx = p[0];
        for (int i = 1; i < C; ++i) mx = std::max(mx, p[i]);
        double sum = 0.0;
        for (int i = 0; i < C; ++i) sum += std::exp(p[i] - mx);
        const double lse = mx + std::log(sum);
        for (int i = 0; i < C; ++i) p[i] -= lse;
    }
    return y;
}

Tensor weighted_sum_rows(const Tensor& H, const Tensor& a) {
    if (H.ndim() != 2)
        throw ShapeError("weighted_sum_rows: H must be [N,l], got " + shape_str(H.shape));
    if (a.ndim() != 1 || a.dim(0) != H.dim(0))
        throw ShapeError("weighted_sum_rows: weights " + shape_str(a.shape) + " do not match rows of " +
                         shape_str(H.shape));
    const int N = H.dim(0), L = H.dim(1);
    Tensor z = Tensor::zeros({L});
    for (int n = 0; n < N; ++n) {
        const double w = a.v[static_cast<std::size_t>(n)];
        const double* hr = H.v.data() + static_cast<std::size_t>(n) * L;
        for (int i = 0; i < L; ++i) z.v[static_cast<std::size_t>(i)] += w * hr[i];
    }
    return z;
}

} // namespace ops

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph::Var Graph::make(Tensor value, bool requires_grad, const char* op) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::check_valid(Var x, const char* who) const {
    if (!x.valid() || x.id >= static_cast<int>(nodes_.size()))
        throw ArgumentError(std::string(who) + ": invalid graph variable");
}

const Graph::Node& Graph::node(Var x) const { return nodes_[static_cast<std::size_t>(x.id)]; }

Tensor& Graph::gbuf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.v.empty() && n.value.numel() > 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

const Tensor& Graph::value(Var x) const {
    check_valid(x, "value");
    return node(x).value;
}

const Tensor& Graph::grad(Var x) const {
    check_valid(x, "grad");
    Node& n = const_cast<Graph*>(this)->nodes_[static_cast<std::size_t>(x.id)];
    if (n.grad.v.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Graph::Var Graph::input(Tensor t) { return make(std::move(t), false, "input"); }

Graph::Var Graph::param(const std::string& name, const Tensor& t) {
    for (const auto& [existing, id] : params_)
        if (existing == name)
            throw ArgumentError("param: duplicate parameter name '" + name + "'");
    Var v = make(t, true, "param");
    params_.emplace_back(name, v.id);
    return v;
}

Graph::Var Graph::affine(Var x, Var W, Var b) {
    check_valid(x, "affine");
    check_valid(W, "affine");
    const bool has_b = b.valid();
    if (has_b) check_valid(b, "affine");
    Tensor y = ops::affine(node(x).value, node(W).value, has_b ? &node(b).value : nullptr);
    const bool rg = node(x).requires_grad || node(W).requires_grad ||
                    (has_b && node(b).requires_grad);
    Var out = make(std::move(y), rg, "affine");
    if (!rg) return out;
    const int xi = x.id, wi = W.id, bi = has_b ? b.id : -1, oi = out.id;
    nodes_.back().back = [this, xi, wi, bi, oi]() {
        const Tensor& xv = nodes_[xi].value;
        const Tensor& wv = nodes_[wi].value;
        const Tensor& gy = nodes_[oi].grad;
        const int in = wv.dim(1), out_dim = wv.dim(0);
        const int rows = xv.ndim() == 2 ? xv.dim(0) : 1;
        if (nodes_[xi].requires_grad) {
            Tensor& gx = gbuf(xi);
            for (int n = 0; n < rows; ++n) {
                double* gxr = gx.v.data() + static_cast<std::size_t>(n) * in;
                const double* gyr = gy.v.data() + static_cast<std::size_t>(n) * out_dim;
                for (int o = 0; o < out_dim; ++o) {
                    const double g = gyr[o];
                    if (g == 0.0) continue;
                    const double* wr = wv.v.data() + static_cast<std::size_t>(o) * in;
                    for (int i = 0; i < in; ++i) gxr[i] += g * wr[i];
                }
            }
        }
        if (nodes_[wi].requires_grad) {
            Tensor& gw = gbuf(wi);
            for (int n = 0; n < rows; ++n) {
                const double* xr = xv.v.data() + static_cast<std::size_t>(n) * in;
                const double* gyr = gy.v.data() + static_cast<std::size_t>(n) * out_dim;
                for (int o = 0; o < out_dim; ++o) {
                    const double g = gyr[o];
                    if (g == 0.0) continue;
                    double* gwr = gw.v.data() + static_cast<std::size_t>(o) * in;
                    for (int i = 0; i < in; ++i) gwr[i] += g * xr[i];
                }
            }
        }
        if (bi >= 0 && nodes_[bi].requires_grad) {
            Tensor& gb = gbuf(bi);
            for (int n = 0; n < rows; ++n) {
                const double* gyr = gy.v.data() + static_cast<std::size_t>(n) * out_dim;
                for (int o = 0; o < out_dim; ++o) gb.v[static_cast<std::size_t>(o)] += gyr[o];
            }
        }
    };
    return out;
}

Graph::Var Graph::linear(Var x, Var W) { return affine(x, W, Var{}); }

Graph::Var Graph::conv2d_valid(Var x, Var k, Var b) {
    check_valid(x, "conv2d_valid");
    check_valid(k, "conv2d_valid");
    check_valid(b, "conv2d_valid");
    Tensor y = ops::conv2d_valid(node(x).value, node(k).value, node(b).value);
    const bool rg =
        node(x).requires_grad || node(k).requires_grad || node(b).requires_grad;
    Var out = make(std::move(y), rg, "conv2d_valid");
    if (!rg) return out;
    const int xi = x.id, ki = k.id, bi = b.id, oi = out.id;
    nodes_.back().back = [this, xi, ki, bi, oi]() {
        const Tensor& xv = nodes_[xi].value;
        const Tensor& kv = nodes_[ki].value;
        const Tensor& gy = nodes_[oi].grad;
        const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int F = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
        const int OH = H - kh + 1, OW = W - kw + 1;
        const bool want_x = nodes_[xi].requires_grad;
        const bool want_k = nodes_[ki].requires_grad;
        const bool want_b = nodes_[bi].requires_grad;
        Tensor* gx = want_x ? &gbuf(xi) : nullptr;
        Tensor* gk = want_k ? &gbuf(ki) : nullptr;
        Tensor* gb = want_b ? &gbuf(bi) : nullptr;
        for (int n = 0; n < N; ++n) {
            for (int f = 0; f < F; ++f) {
                const double* gymap = gy.v.data() + ((static_cast<std::size_t>(n) * F + f) * OH) * OW;
                if (want_b) {
                    double acc = 0.0;
                    for (int i = 0; i < OH * OW; ++i) acc += gymap[i];
                    gb->v[static_cast<std::size_t>(f)] += acc;
                }
                for (int c = 0; c < C; ++c) {
                    const double* xmap =
                        xv.v.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
                    const double* kmap =
                        kv.v.data() + ((static_cast<std::size_t>(f) * C + c) * kh) * kw;
                    double* gxmap =
                        want_x ? gx->v.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W
                               : nullptr;
                    double* gkmap =
                        want_k ? gk->v.data() + ((static_cast<std::size_t>(f) * C + c) * kh) * kw
                               : nullptr;
                    for (int i = 0; i < kh; ++i) {
                        for (int j = 0; j < kw; ++j) {
                            const double w = kmap[i * kw + j];
                            double kacc = 0.0;
                            for (int oh = 0; oh < OH; ++oh) {
                                const double* gyrow = gymap + oh * OW;
                                const double* xrow = xmap + (oh + i) * W + j;
                                if (want_x) {
                                    double* gxrow = gxmap + (oh + i) * W + j;
                                    for (int ow = 0; ow < OW; ++ow) gxrow[ow] += w * gyrow[ow];
                                }
                                if (want_k)
                                    for (int ow = 0; ow < OW; ++ow) kacc += xrow[ow] * gyrow[ow];
                            }
                            if (want_k) gkmap[i * kw + j] += kacc;
                        }
                    }
                }
            }
        }
    };
    return out;
}

Graph::Var Graph::maxpool2(Var x) {
    check_valid(x, "maxpool2");
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor y = ops::maxpool2(node(x).value, argmax.get());
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "maxpool2");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi, argmax]() {
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        for (std::size_t i = 0; i < gy.v.size(); ++i)
            gx.v[static_cast<std::size_t>((*argmax)[i])] += gy.v[i];
    };
    return out;
}

Graph::Var Graph::relu(Var x) {
    check_valid(x, "relu");
    Tensor y = ops::relu(node(x).value);
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "relu");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi]() {
        const Tensor& xv = nodes_[xi].value;
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        for (std::size_t i = 0; i < gy.v.size(); ++i)
            if (xv.v[i] > 0.0) gx.v[i] += gy.v[i];
    };
    return out;
}

Graph::Var Graph::tanh(Var x) {
    check_valid(x, "tanh");
    Tensor y = ops::tanh(node(x).value);
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "tanh");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi]() {
        const Tensor& yv = nodes_[oi].value;
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        for (std::size_t i = 0; i < gy.v.size(); ++i)
            gx.v[i] += gy.v[i] * (1.0 - yv.v[i] * yv.v[i]);
    };
    return out;
}

Graph::Var Graph::reshape(Var x, Shape s) {
    check_valid(x, "reshape");
    if (shape_numel(s) != node(x).value.numel())
        throw ShapeError("reshape: cannot view " + shape_str(node(x).value.shape) + " as " +
                         shape_str(s));
    Tensor y = node(x).value;
    y.shape = std::move(s);
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "reshape");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi]() {
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[i] += gy.v[i];
    };
    return out;
}

Graph::Var Graph::softmax(Var x) {
    check_valid(x, "softmax");
    Tensor y = ops::softmax(node(x).value);
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "softmax");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi]() {
        const Tensor& yv = nodes_[oi].value;
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        const int C = yv.dim(yv.ndim() - 1);
        const std::int64_t rows = yv.numel() / C;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = yv.v.data() + r * C;
            const double* gyr = gy.v.data() + r * C;
            double dot = 0.0;
            for (int i = 0; i < C; ++i) dot += gyr[i] * yr[i];
            double* gxr = gx.v.data() + r * C;
            for (int i = 0; i < C; ++i) gxr[i] += yr[i] * (gyr[i] - dot);
        }
    };
    return out;
}

Graph::Var Graph::log_softmax(Var x) {
    check_valid(x, "log_softmax");
    Tensor y = ops::log_softmax(node(x).value);
    const bool rg = node(x).requires_grad;
    Var out = make(std::move(y), rg, "log_softmax");
    if (!rg) return out;
    const int xi = x.id, oi = out.id;
    nodes_.back().back = [this, xi, oi]() {
        const Tensor& yv = nodes_[oi].value;
        const Tensor& gy = nodes_[oi].grad;
        Tensor& gx = gbuf(xi);
        const int C = yv.dim(yv.ndim() - 1);
        const std::int64_t rows = yv.numel() / C;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = yv.v.data() + r * C;
            const double* gyr = gy.v.data() + r * C;
            double sum = 0.0;
            for (int i = 0; i < C; ++i) sum += gyr[i];
            double* gxr = gx.v.data() + r * C;
            for (int i = 0; i < C; ++i) gxr[i] += gyr[i] - std::exp(yr[i]) * sum;
        }
    };
    return out;
}

Graph::Var Graph::weighted_sum_rows(Var H, Var a) {
    check_valid(H, "weighted_sum_rows");
    check_valid(a, "weighted_sum_rows");
    Tensor z = ops::weighted_sum_rows(node(H).value, node(a).value);
    const bool rg = node(H).requires_grad || node(a).requires_grad;
    Var out = make(std::move(z), rg, "weighted_sum_rows");
    if (!rg) return out;
    const int hi = H.id, ai = a.id, oi = out.id;
    nodes_.back().back = [this, hi, ai, oi]() {
        const Tensor& hv = nodes_[hi].value;
        const Tensor& av = nodes_[ai].value;
        const Tensor& gz = nodes_[oi].grad;
        const int N = hv.dim(0), L = hv.dim(1);
        if (nodes_[hi].requires_grad) {
            Tensor& gh = gbuf(hi);
            for (int n = 0; n < N; ++n) {
                const double w = av.v[static_cast<std::size_t>(n)];
                double* ghr = gh.v.data() + static_cast<std::size_t>(n) * L;
                for (int i = 0; i < L; ++i) ghr[i] += w * gz.v[static_cast<std::size_t>(i)];
            }
        }
        if (nodes_[ai].requires_grad) {
            Tensor& ga = gbuf(ai);
            for (int n = 0; n < N; ++n) {
                const double* hr = hv.v.data() + static_cast<std::size_t>(n) * L;
                double dot = 0.0;
                for (int i = 0; i < L; ++i) dot += hr[i] * gz.v[static_cast<std::size_t>(i)];
                ga.v[static_cast<std::size_t>(n)] += dot;
            }
        }
    };
    return out;
}

Graph::Var Graph::mean_rows(Var H) {
    check_valid(H, "mean_rows");
    const Tensor& hv = node(H).value;
    if (hv.ndim() != 2)
        throw ShapeError("mean_rows: H must be [N,l], got " + shape_str(hv.shape));
    const int N = hv.dim(0);
    Var uniform = input(Tensor::full({N}, 1.0 / N));
    return weighted_sum_rows(H, uniform);
}

Graph::Var Graph::add(Var a, Var b) {
    check_valid(a, "add");
    check_valid(b, "add");
    if (!node(a).value.same_shape(node(b).value))
        throw ShapeError("add: shapes " + shape_str(node(a).value.shape) + " and " +
                         shape_str(node(b).value.shape) + " differ");
    Tensor y = node(a).value;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += node(b).value.v[i];
    const bool rg = node(a).requires_grad || node(b).requires_grad;
    Var out = make(std::move(y), rg, "add");
    if (!rg) return out;
    const int ai = a.id, bi = b.id, oi = out.id;
    nodes_.back().back = [this, ai, bi, oi]() {
        const Tensor& gy = nodes_[oi].grad;
        if (nodes_[ai].requires_grad) {
            Tensor& ga = gbuf(ai);
            for (std::size_t i = 0; i < gy.v.size(); ++i) ga.v[i] += gy.v[i];
        }
        if (nodes_[bi].requires_grad) {
            Tensor& gb = gbuf(bi);
            for (std::size_t i = 0; i < gy.v.size(); ++i) gb.v[i] += gy.v[i];
        }
    };
    return out;
}

Graph::Var Graph::scale(Var a, double c) {
    check_valid(a, "scale");
    Tensor y = node(a).value;
    for (auto& e : y.v) e *= c;
    const bool rg = node(a).requires_grad;
    Var out = make(std::move(y), rg, "scale");
    if (!rg) return out;
    const int ai = a.id, oi = out.id;
    nodes_.back().back = [this, ai, oi, c]() {
        const Tensor& gy = nodes_[oi].grad;
        Tensor& ga = gbuf(ai);
        for (std::size_t i = 0; i < gy.v.size(); ++i) ga.v[i] += c * gy.v[i];
    };
    return out;
}

Graph::Var Graph::ce_pick(Var probs, int label) {
    check_valid(probs, "ce_pick");
    const Tensor& pv = node(probs).value;
    if (pv.ndim() != 1 || label < 0 || label >= pv.dim(0))
        throw ShapeError("ce_pick: label " + std::to_string(label) + " out of range for " +
                         shape_str(pv.shape));
    const double p = std::max(pv.v[static_cast<std::size_t>(label)], kProbFloor);
    Tensor y({}, {-std::log(p)});
    const bool rg = node(probs).requires_grad;
    Var out = make(std::move(y), rg, "ce_pick");
    if (!rg) return out;
    const int pi = probs.id, oi = out.id;
    nodes_.back().back = [this, pi, oi, label]() {
        const double p = nodes_[pi].value.v[static_cast<std::size_t>(label)];
        if (p <= kProbFloor) return; // clamped region, flat
        gbuf(pi).v[static_cast<std::size_t>(label)] += -nodes_[oi].grad.v[0] / p;
    };
    return out;
}

Graph::Var Graph::ce_pick_mean(Var probs, int label) {
    check_valid(probs, "ce_pick_mean");
    const Tensor& pv = node(probs).value;
    if (pv.ndim() != 2 || label < 0 || label >= pv.dim(1))
        throw ShapeError("ce_pick_mean: label " + std::to_string(label) + " out of range for " +
                         shape_str(pv.shape));
    const int N = pv.dim(0), C = pv.dim(1);
    double acc = 0.0;
    for (int n = 0; n < N; ++n)
        acc += -std::log(std::max(pv.v[static_cast<std::size_t>(n) * C + label], kProbFloor));
    Tensor y({}, {acc / N});
    const bool rg = node(probs).requires_grad;
    Var out = make(std::move(y), rg, "ce_pick_mean");
    if (!rg) return out;
    const int pi = probs.id, oi = out.id;
    nodes_.back().back = [this, pi, oi, label, N, C]() {
        const double g = nodes_[oi].grad.v[0];
        Tensor& gp = gbuf(pi);
        for (int n = 0; n < N; ++n) {
            const double p = nodes_[pi].value.v[static_cast<std::size_t>(n) * C + label];
            if (p <= kProbFloor) continue;
            gp.v[static_cast<std::size_t>(n) * C + label] += -g / (p * N);
        }
    };
    return out;
}

Graph::Var Graph::kld_uniform(Var attention, const std::vector<int>& cluster_of) {
    check_valid(attention, "kld_uniform");
    const Tensor& av = node(attention).value;
    if (av.ndim() != 1)
        throw ShapeError("kld_uniform: attention must be 1-D, got " + shape_str(av.shape));
    const int N = av.dim(0);
    if (static_cast<int>(cluster_of.size()) != N)
        throw ShapeError("kld_uniform: cluster ids (" + std::to_string(cluster_of.size()) +
                         ") do not match attention length " + std::to_string(N));

    int max_c = -1;
    for (int c : cluster_of) {
        if (c < 0) throw ArgumentError("kld_uniform: negative cluster id");
        max_c = std::max(max_c, c);
    }
    const int K = max_c + 1;
    std::vector<double> mass(static_cast<std::size_t>(K), 0.0);
    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (int i = 0; i < N; ++i) {
        mass[static_cast<std::size_t>(cluster_of[i])] += av.v[static_cast<std::size_t>(i)];
        count[static_cast<std::size_t>(cluster_of[i])] += 1;
    }
    // KL(p || uniform) per cluster, then mean over clusters with >= 2 members.
    auto kls = std::make_shared<std::vector<double>>(static_cast<std::size_t>(K), 0.0);
    int multi = 0;
    for (int c = 0; c < K; ++c)
        if (count[static_cast<std::size_t>(c)] >= 2) ++multi;
    for (int i = 0; i < N; ++i) {
        const int c = cluster_of[i];
        const int m = count[static_cast<std::size_t>(c)];
        if (m < 2) continue;
        const double p = av.v[static_cast<std::size_t>(i)] / mass[static_cast<std::size_t>(c)];
        if (p > 0.0) (*kls)[static_cast<std::size_t>(c)] += p * std::log(p * m);
    }
    double total = 0.0;
    for (int c = 0; c < K; ++c)
        if (count[static_cast<std::size_t>(c)] >= 2) total += (*kls)[static_cast<std::size_t>(c)];
    Tensor y({}, {multi > 0 ? total / multi : 0.0});

    const bool rg = node(attention).requires_grad;
    Var out = make(std::move(y), rg, "kld_uniform");
    if (!rg) return out;
    const int ai = attention.id, oi = out.id;
    auto ids = std::make_shared<std::vector<int>>(cluster_of);
    auto mass_p = std::make_shared<std::vector<double>>(std::move(mass));
    auto count_p = std::make_shared<std::vector<int>>(std::move(count));
    nodes_.back().back = [this, ai, oi, ids, mass_p, count_p, kls, multi]() {
        if (multi == 0) return;
        const double g = nodes_[oi].grad.v[0] / multi;
        const Tensor& a = nodes_[ai].value;
        Tensor& ga = gbuf(ai);
        for (std::size_t i = 0; i < ids->size(); ++i) {
            const int c = (*ids)[i];
            const int m = (*count_p)[static_cast<std::size_t>(c)];
            if (m < 2) continue;
            const double A = (*mass_p)[static_cast<std::size_t>(c)];
            const double p = a.v[i] / A;
            if (p <= 0.0) continue;
            // d KL_c / d a_i = (ln(p_i * m) - KL_c) / A
            ga.v[i] += g * (std::log(p * m) - (*kls)[static_cast<std::size_t>(c)]) / A;
        }
    };
    return out;
}

void Graph::backward(Var loss) {
    check_valid(loss, "backward");
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.numel() != 1)
        throw ArgumentError("backward: loss must be a scalar, got shape " +
                            shape_str(ln.value.shape));
    if (!std::isfinite(ln.value.v[0]))
        throw NumericError(std::string("backward: loss is non-finite (produced by op '") +
                           ln.op + "')");
    gbuf(loss.id).v[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.v.empty() || !n.back) continue;
        for (double gx : n.grad.v)
            if (!std::isfinite(gx))
                throw NumericError(std::string("backward: non-finite gradient at op '") + n.op +
                                   "'");
        n.back();
    }
}

GradientMap Graph::grads() const {
    GradientMap out;
    for (const auto& [name, id] : params_) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        out[name] = n.grad.v.empty() ? Tensor::zeros(n.value.shape) : n.grad;
    }
    return out;
}

} // namespace c2c
