#include "c2c/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "c2c/errors.hpp"
#include "c2c/rng.hpp"

namespace c2c {

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return {
        {"encoder.conv1_w", &conv1_w}, {"encoder.conv1_b", &conv1_b},
        {"encoder.conv2_w", &conv2_w}, {"encoder.conv2_b", &conv2_b},
        {"encoder.fc1_w", &fc1_w},     {"encoder.fc1_b", &fc1_b},
        {"encoder.fc2_w", &fc2_w},     {"encoder.fc2_b", &fc2_b},
        {"encoder.proj_w", &proj_w},   {"encoder.proj_b", &proj_b},
        {"attention.v1", &v1},         {"attention.v2", &v2},
        {"bag_head.w", &bag_w},        {"bag_head.b", &bag_b},
        {"instance_head.w", &inst_w},  {"instance_head.b", &inst_b},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named()) out.emplace_back(name, t);
    return out;
}

namespace {

// fan_in/fan_out for Xavier bounds: affine [out,in] -> (in, out); conv
// [F,C,kh,kw] -> (C*kh*kw, F*kh*kw); vectors are treated as [1,d].
Tensor xavier(Shape shape, Rng& rng) {
    std::int64_t fan_in = 0, fan_out = 0;
    if (shape.size() == 4) {
        fan_in = static_cast<std::int64_t>(shape[1]) * shape[2] * shape[3];
        fan_out = static_cast<std::int64_t>(shape[0]) * shape[2] * shape[3];
    } else if (shape.size() == 2) {
        fan_in = shape[1];
        fan_out = shape[0];
    } else {
        fan_in = shape.empty() ? 1 : shape[0];
        fan_out = 1;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.v) x = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}

} // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    if (config.embed_dim < 1 || config.attn_dim < 1)
        throw ArgumentError("model dimensions must be positive");
    const int l = config.embed_dim, d = config.attn_dim;
    Rng rng = derive_rng(seed, Stream::kParamInit);

    ModelParams p;
    p.config = config;
    p.conv1_w = xavier({6, 1, 5, 5}, rng);
    p.conv1_b = Tensor::zeros({6});
    p.conv2_w = xavier({16, 6, 5, 5}, rng);
    p.conv2_b = Tensor::zeros({16});
    p.fc1_w = xavier({120, 256}, rng);
    p.fc1_b = Tensor::zeros({120});
    p.fc2_w = xavier({84, 120}, rng);
    p.fc2_b = Tensor::zeros({84});
    p.proj_w = xavier({l, 84}, rng);
    p.proj_b = Tensor::zeros({l});
    p.v1 = xavier({d, l}, rng);
    p.v2 = xavier({d}, rng);
    p.bag_w = xavier({2, l}, rng);
    p.bag_b = Tensor::zeros({2});
    p.inst_w = xavier({2, l}, rng);
    p.inst_b = Tensor::zeros({2});
    return p;
}

Tensor pack_instances(const Bag& bag, const std::vector<int>* subset) {
    if (bag.instances.empty()) throw ArgumentError("pack_instances: empty bag");
    std::vector<int> all;
    if (!subset) {
        all.resize(bag.instances.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        subset = &all;
    }
    const int rows = bag.instances[0].rows, cols = bag.instances[0].cols;
    Tensor batch = Tensor::zeros({static_cast<int>(subset->size()), 1, rows, cols});
    double* out = batch.v.data();
    for (int idx : *subset) {
        if (idx < 0 || idx >= static_cast<int>(bag.instances.size()))
            throw ArgumentError("pack_instances: instance index " + std::to_string(idx) +
                                " out of range");
        const Instance& inst = bag.instances[static_cast<std::size_t>(idx)];
        if (inst.rows != rows || inst.cols != cols)
            throw ShapeError("pack_instances: mixed instance sizes in bag " +
                             std::to_string(bag.bag_id));
        std::memcpy(out, inst.pixels.data(), inst.pixels.size() * sizeof(double));
        out += inst.pixels.size();
    }
    return batch;
}

Tensor standardize_input(Tensor batch) {
    for (auto& px : batch.v) px = (px - kInputMean) / kInputStd;
    return batch;
}

// LeNet-style squashing nonlinearity: kSquashA * tanh(kSquashS * x).
Tensor squash(Tensor x) {
    for (auto& e : x.v) e = kSquashA * std::tanh(kSquashS * e);
    return x;
}

Tensor encode(const Tensor& batch, const ModelParams& p) {
    Tensor x = ops::conv2d_valid(standardize_input(batch), p.conv1_w, p.conv1_b);
    x = ops::maxpool2(squash(std::move(x)), nullptr);
    x = ops::conv2d_valid(x, p.conv2_w, p.conv2_b);
    x = ops::maxpool2(squash(std::move(x)), nullptr);
    x.shape = {x.dim(0), static_cast<int>(x.numel() / x.dim(0))};
    x = squash(ops::affine(x, p.fc1_w, &p.fc1_b));
    x = squash(ops::affine(x, p.fc2_w, &p.fc2_b));
    return ops::affine(x, p.proj_w, &p.proj_b);
}

Tensor encode_bag(const Bag& bag, const ModelParams& p) {
    return encode(pack_instances(bag, nullptr), p);
}

std::vector<double> attention_weights(const Tensor& H, const ModelParams& p) {
    Tensor t = ops::tanh(ops::affine(H, p.v1, nullptr));
    Tensor v2m = p.v2;
    v2m.shape = {1, p.v2.dim(0)};
    Tensor scores = ops::affine(t, v2m, nullptr); // [N,1]
    scores.shape = {scores.dim(0)};
    Tensor a = ops::softmax(scores);
    return a.v;
}

Tensor aggregate(const Tensor& H, const std::vector<double>& a) {
    Tensor av(Shape{static_cast<int>(a.size())}, std::vector<double>(a));
    return ops::weighted_sum_rows(H, av);
}

Tensor mean_aggregate(const Tensor& H) {
    if (H.ndim() != 2) throw ShapeError("mean_aggregate: expected [N,l], got " + shape_str(H.shape));
    const std::vector<double> uniform(static_cast<std::size_t>(H.dim(0)), 1.0 / H.dim(0));
    return aggregate(H, uniform);
}

std::array<double, 2> bag_predict(const Tensor& z, const ModelParams& p) {
    Tensor probs = ops::softmax(ops::affine(z, p.bag_w, &p.bag_b));
    return {probs.v[0], probs.v[1]};
}

std::vector<std::array<double, 2>> instance_predict(const Tensor& H, const ModelParams& p) {
    Tensor probs = ops::softmax(ops::affine(H, p.inst_w, &p.inst_b));
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(H.dim(0)));
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = {probs.v[2 * n], probs.v[2 * n + 1]};
    return out;
}

ModelVars register_params(Graph& g, const ModelParams& p) {
    ModelVars m;
    m.conv1_w = g.param("encoder.conv1_w", p.conv1_w);
    m.conv1_b = g.param("encoder.conv1_b", p.conv1_b);
    m.conv2_w = g.param("encoder.conv2_w", p.conv2_w);
    m.conv2_b = g.param("encoder.conv2_b", p.conv2_b);
    m.fc1_w = g.param("encoder.fc1_w", p.fc1_w);
    m.fc1_b = g.param("encoder.fc1_b", p.fc1_b);
    m.fc2_w = g.param("encoder.fc2_w", p.fc2_w);
    m.fc2_b = g.param("encoder.fc2_b", p.fc2_b);
    m.proj_w = g.param("encoder.proj_w", p.proj_w);
    m.proj_b = g.param("encoder.proj_b", p.proj_b);
    m.v1 = g.param("attention.v1", p.v1);
    m.v2 = g.param("attention.v2", p.v2);
    m.bag_w = g.param("bag_head.w", p.bag_w);
    m.bag_b = g.param("bag_head.b", p.bag_b);
    m.inst_w = g.param("instance_head.w", p.inst_w);
    m.inst_b = g.param("instance_head.b", p.inst_b);
    return m;
}

Graph::Var squash_graph(Graph& g, Graph::Var x) {
    return g.scale(g.tanh(g.scale(x, kSquashS)), kSquashA);
}

Graph::Var encode_graph(Graph& g, const ModelVars& m, Graph::Var batch) {
    Graph::Var standardized = g.input(standardize_input(g.value(batch)));
    Graph::Var x = g.conv2d_valid(standardized, m.conv1_w, m.conv1_b);
    x = g.maxpool2(squash_graph(g, x));
    x = g.conv2d_valid(x, m.conv2_w, m.conv2_b);
    x = g.maxpool2(squash_graph(g, x));
    const Tensor& xv = g.value(x);
    x = g.reshape(x, {xv.dim(0), static_cast<int>(xv.numel() / xv.dim(0))});
    x = squash_graph(g, g.affine(x, m.fc1_w, m.fc1_b));
    x = squash_graph(g, g.affine(x, m.fc2_w, m.fc2_b));
    return g.affine(x, m.proj_w, m.proj_b);
}

Graph::Var attention_graph(Graph& g, const ModelVars& m, Graph::Var H) {
    Graph::Var t = g.tanh(g.linear(H, m.v1));
    Graph::Var v2m = g.reshape(m.v2, {1, g.value(m.v2).dim(0)});
    Graph::Var scores = g.linear(t, v2m); // [N,1]
    scores = g.reshape(scores, {g.value(scores).dim(0)});
    return g.softmax(scores);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'C', '2', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
    static std::uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(x >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t& off) {
    if (off + 4 > buf.size()) throw LengthError("checkpoint truncated");
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(buf[off++]) << (8 * i);
    return x;
}

} // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    std::vector<unsigned char> payload;
    put_u32(payload, static_cast<std::uint32_t>(p.config.embed_dim));
    put_u32(payload, static_cast<std::uint32_t>(p.config.attn_dim));
    const auto named = p.named();
    put_u32(payload, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        put_u32(payload, static_cast<std::uint32_t>(name.size()));
        payload.insert(payload.end(), name.begin(), name.end());
        put_u32(payload, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) put_u32(payload, static_cast<std::uint32_t>(d));
        const std::size_t base = payload.size();
        payload.resize(base + t->v.size() * 8);
        for (std::size_t i = 0; i < t->v.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &t->v[i], 8);
            for (int b = 0; b < 8; ++b)
                payload[base + i * 8 + static_cast<std::size_t>(b)] =
                    static_cast<unsigned char>(bits >> (8 * b));
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f.write(kCkptMagic, 8);
    std::vector<unsigned char> header;
    put_u32(header, kCkptVersion);
    put_u32(header, crc32(payload.data(), payload.size()));
    f.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> buf{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};
    if (buf.size() < 16) throw LengthError("'" + path + "': checkpoint header truncated");
    if (std::memcmp(buf.data(), kCkptMagic, 8) != 0)
        throw FormatError("'" + path + "': not a model checkpoint");
    std::size_t off = 8;
    const std::uint32_t version = get_u32(buf, off);
    if (version != kCkptVersion)
        throw VersionError("'" + path + "': checkpoint version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kCkptVersion));
    const std::uint32_t stored = get_u32(buf, off);
    const std::uint32_t actual = crc32(buf.data() + off, buf.size() - off);
    if (stored != actual)
        throw ChecksumError("'" + path + "': checksum mismatch (stored " + std::to_string(stored) +
                            ", computed " + std::to_string(actual) + ")");

    ModelConfig cfg;
    cfg.embed_dim = static_cast<int>(get_u32(buf, off));
    cfg.attn_dim = static_cast<int>(get_u32(buf, off));
    ModelParams p = init_params(cfg, 0); // shapes; values overwritten below
    const std::uint32_t count = get_u32(buf, off);
    auto named = p.named();
    if (count != named.size())
        throw FormatError("'" + path + "': expected " + std::to_string(named.size()) +
                          " tensors, found " + std::to_string(count));
    for (auto& [name, t] : named) {
        const std::uint32_t name_len = get_u32(buf, off);
        if (off + name_len > buf.size()) throw LengthError("checkpoint truncated");
        const std::string stored_name(reinterpret_cast<const char*>(buf.data() + off), name_len);
        off += name_len;
        if (stored_name != name)
            throw FormatError("'" + path + "': tensor '" + stored_name + "' where '" + name +
                              "' was expected");
        const std::uint32_t ndim = get_u32(buf, off);
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<int>(get_u32(buf, off));
        if (shape != t->shape)
            throw FormatError("'" + path + "': tensor '" + name + "' has shape " +
                              shape_str(shape) + ", expected " + shape_str(t->shape));
        if (off + t->v.size() * 8 > buf.size()) throw LengthError("checkpoint truncated");
        for (std::size_t i = 0; i < t->v.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b)
                bits |= static_cast<std::uint64_t>(buf[off + i * 8 + static_cast<std::size_t>(b)])
                        << (8 * b);
            std::memcpy(&t->v[i], &bits, 8);
        }
        off += t->v.size() * 8;
    }
    if (off != buf.size())
        throw LengthError("'" + path + "': " + std::to_string(buf.size() - off) +
                          " trailing bytes after payload");
    return p;
}

} // namespace c2c
