#include "c2c/bags.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "c2c/errors.hpp"

namespace c2c {

void BagDatasetConfig::validate() const {
    if (n_train_bags < 0 || n_test_bags < 0)
        throw ArgumentError("bag counts must be non-negative");
    if (n_train_bags + n_test_bags == 0) throw ArgumentError("dataset would be empty");
    if (!(mean_bag_size > 0.0)) throw ArgumentError("mean_bag_size must be positive");
    if (bag_size_std < 0.0) throw ArgumentError("bag_size_std must be non-negative");
    if (positive_digits.empty()) throw ArgumentError("positive_digits must be non-empty");
    for (int d : positive_digits)
        if (d < 0 || d > 9)
            throw ArgumentError("positive digit " + std::to_string(d) + " outside 0..9");
}

DigitPool make_pool(const IdxImages& images, const std::vector<int>& labels) {
    if (images.images.size() != labels.size())
        throw LengthError("image count " + std::to_string(images.images.size()) +
                          " does not match label count " + std::to_string(labels.size()));
    DigitPool pool(images.images.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool[i].pixels = images.images[i];
        pool[i].digit = labels[i];
        pool[i].rows = images.rows;
        pool[i].cols = images.cols;
    }
    return pool;
}

DigitPool load_pool(const std::string& images_path, const std::string& labels_path) {
    return make_pool(load_idx_images(images_path), load_idx_labels(labels_path));
}

namespace {

bool is_positive(int digit, const std::vector<int>& positive) {
    return std::find(positive.begin(), positive.end(), digit) != positive.end();
}

Instance make_instance(int id, const PoolItem& item) {
    Instance inst;
    inst.instance_id = id;
    inst.source_label = item.digit;
    inst.rows = item.rows;
    inst.cols = item.cols;
    inst.pixels = item.pixels;
    return inst;
}

int draw_bag_size(const BagDatasetConfig& cfg, Rng& rng) {
    const double s = rng.normal(cfg.mean_bag_size, cfg.bag_size_std);
    const long long r = std::llround(s);
    return static_cast<int>(std::max(2LL, r));
}

Bag draw_bag(int bag_id, const DigitPool& pool, const BagDatasetConfig& cfg, Rng& rng,
             const std::vector<std::size_t>& positive_pool_idx, int forced_label) {
    // forced_label: -1 = unconstrained, 0 = negative, 1 = positive.
    const int n = draw_bag_size(cfg, rng);

    Bag bag;
    bag.bag_id = bag_id;
    bag.instances.reserve(static_cast<std::size_t>(n));
    bool has_positive = false;
    for (int i = 0; i < n; ++i) {
        std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
        if (forced_label == 0) {
            // Negative bag: reject positive-digit draws.
            while (is_positive(pool[pick].digit, cfg.positive_digits))
                pick = static_cast<std::size_t>(rng.below(pool.size()));
        }
        bag.instances.push_back(make_instance(i, pool[pick]));
        has_positive = has_positive || is_positive(pool[pick].digit, cfg.positive_digits);
    }
    if (forced_label == 1 && !has_positive) {
        // Substitute one uniformly chosen positive-digit instance at a
        // random position so the nominal label holds.
        const std::size_t src =
            positive_pool_idx[static_cast<std::size_t>(rng.below(positive_pool_idx.size()))];
        const std::size_t pos = static_cast<std::size_t>(rng.below(bag.instances.size()));
        const int keep_id = bag.instances[pos].instance_id;
        bag.instances[pos] = make_instance(keep_id, pool[src]);
        has_positive = true;
    }
    bag.label = has_positive ? 1 : 0;
    return bag;
}

std::vector<Bag> draw_split(int count, int first_bag_id, const DigitPool& pool,
                            const BagDatasetConfig& cfg, Rng& rng,
                            const std::vector<std::size_t>& positive_pool_idx) {
    std::vector<Bag> bags;
    bags.reserve(static_cast<std::size_t>(count));
    const int n_positive = cfg.balance ? (count + 1) / 2 : 0;
    for (int i = 0; i < count; ++i) {
        const int forced = cfg.balance ? (i < n_positive ? 1 : 0) : -1;
        bags.push_back(draw_bag(first_bag_id + i, pool, cfg, rng, positive_pool_idx, forced));
    }
    return bags;
}

} // namespace

BagDataset generate_bags(const DigitPool& pool, const BagDatasetConfig& config) {
    config.validate();
    if (pool.empty()) throw ArgumentError("digit pool is empty");

    std::vector<std::size_t> positive_pool_idx;
    bool has_negative_digit = false;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (is_positive(pool[i].digit, config.positive_digits))
            positive_pool_idx.push_back(i);
        else
            has_negative_digit = true;
    }
    if (positive_pool_idx.empty())
        throw ConfigError("pool contains no instance of the positive digits");
    if (config.balance && !has_negative_digit)
        throw ConfigError("pool contains only positive digits; negative bags are impossible");

    // One sequential stream defines the whole dataset.
    Rng rng = derive_rng(config.seed, Stream::kDataGen);
    BagDataset ds;
    ds.config = config;
    ds.train = draw_split(config.n_train_bags, 0, pool, config, rng, positive_pool_idx);
    ds.test = draw_split(config.n_test_bags, config.n_train_bags, pool, config, rng,
                         positive_pool_idx);
    return ds;
}

// ---------------------------------------------------------------------------
// Manifest serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', '2', 'C', 'B', 'A', 'G', 'S', '\0'};
constexpr std::uint32_t kVersion = 1;

// CRC-32 (IEEE), table-driven.
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

struct Writer {
    std::vector<unsigned char> buf;
    void u8(std::uint8_t x) { buf.push_back(x); }
    void u16(std::uint16_t x) {
        for (int i = 0; i < 2; ++i) buf.push_back(static_cast<unsigned char>(x >> (8 * i)));
    }
    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(x >> (8 * i)));
    }
    void u64(std::uint64_t x) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(x >> (8 * i)));
    }
    void i32(std::int32_t x) { u32(static_cast<std::uint32_t>(x)); }
    void f64(double x) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        u64(bits);
    }
};

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t off = 0;
    explicit Reader(const std::vector<unsigned char>& b, std::size_t start) : buf(b), off(start) {}
    void need(std::size_t n) const {
        if (off + n > buf.size()) throw LengthError("manifest payload truncated");
    }
    std::uint8_t u8() {
        need(1);
        return buf[off++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t x = 0;
        for (int i = 0; i < 2; ++i) x |= static_cast<std::uint16_t>(buf[off++]) << (8 * i);
        return x;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(buf[off++]) << (8 * i);
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(buf[off++]) << (8 * i);
        return x;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() {
        const std::uint64_t bits = u64();
        double x;
        std::memcpy(&x, &bits, 8);
        return x;
    }
};

// Pixels that are exact multiples of 1/255 can be stored as single bytes
// (the MNIST case); anything else falls back to raw doubles.
bool u8_exact(double p) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    const long long b = std::llround(p * 255.0);
    return b >= 0 && b <= 255 && static_cast<double>(b) / 255.0 == p;
}

bool dataset_is_u8(const BagDataset& ds) {
    for (const auto* split : {&ds.train, &ds.test})
        for (const Bag& bag : *split)
            for (const Instance& inst : bag.instances)
                for (double p : inst.pixels)
                    if (!u8_exact(p)) return false;
    return true;
}

void write_bag(Writer& w, const Bag& bag, bool u8_mode) {
    w.i32(bag.bag_id);
    w.u8(static_cast<std::uint8_t>(bag.label));
    w.u32(static_cast<std::uint32_t>(bag.instances.size()));
    for (const Instance& inst : bag.instances) {
        w.i32(inst.instance_id);
        w.u8(static_cast<std::uint8_t>(inst.source_label));
        w.u16(static_cast<std::uint16_t>(inst.rows));
        w.u16(static_cast<std::uint16_t>(inst.cols));
        if (u8_mode)
            for (double p : inst.pixels)
                w.u8(static_cast<std::uint8_t>(std::llround(p * 255.0)));
        else
            for (double p : inst.pixels) w.f64(p);
    }
}

Bag read_bag(Reader& r, bool u8_mode) {
    Bag bag;
    bag.bag_id = r.i32();
    bag.label = r.u8();
    const std::uint32_t n = r.u32();
    bag.instances.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Instance inst;
        inst.instance_id = r.i32();
        inst.source_label = r.u8();
        inst.rows = r.u16();
        inst.cols = r.u16();
        const std::size_t count = static_cast<std::size_t>(inst.rows) * inst.cols;
        inst.pixels.resize(count);
        if (u8_mode)
            for (auto& p : inst.pixels) p = r.u8() / 255.0;
        else
            for (auto& p : inst.pixels) p = r.f64();
        bag.instances.push_back(std::move(inst));
    }
    return bag;
}

} // namespace

void save_manifest(const BagDataset& ds, const std::string& path) {
    Writer w;
    const bool u8_mode = dataset_is_u8(ds);
    // config echo
    w.i32(ds.config.n_train_bags);
    w.i32(ds.config.n_test_bags);
    w.f64(ds.config.mean_bag_size);
    w.f64(ds.config.bag_size_std);
    w.u8(static_cast<std::uint8_t>(ds.config.positive_digits.size()));
    for (int d : ds.config.positive_digits) w.u8(static_cast<std::uint8_t>(d));
    w.u64(ds.config.seed);
    w.u8(ds.config.balance ? 1 : 0);
    // payload
    w.u8(u8_mode ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(ds.train.size()));
    w.u32(static_cast<std::uint32_t>(ds.test.size()));
    for (const Bag& b : ds.train) write_bag(w, b, u8_mode);
    for (const Bag& b : ds.test) write_bag(w, b, u8_mode);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f.write(kMagic, 8);
    Writer header;
    header.u32(kVersion);
    header.u32(crc32(w.buf.data(), w.buf.size()));
    f.write(reinterpret_cast<const char*>(header.buf.data()),
            static_cast<std::streamsize>(header.buf.size()));
    f.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

BagDataset load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> buf{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};
    if (buf.size() < 16) throw LengthError("'" + path + "': manifest header truncated");
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw FormatError("'" + path + "': not a bag dataset manifest");
    Reader r(buf, 8);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw VersionError("'" + path + "': manifest version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kVersion));
    const std::uint32_t stored_crc = r.u32();
    const std::uint32_t actual_crc = crc32(buf.data() + r.off, buf.size() - r.off);
    if (stored_crc != actual_crc)
        throw ChecksumError("'" + path + "': checksum mismatch (stored " +
                            std::to_string(stored_crc) + ", computed " +
                            std::to_string(actual_crc) + ")");

    BagDataset ds;
    ds.config.n_train_bags = r.i32();
    ds.config.n_test_bags = r.i32();
    ds.config.mean_bag_size = r.f64();
    ds.config.bag_size_std = r.f64();
    const int npos = r.u8();
    ds.config.positive_digits.clear();
    for (int i = 0; i < npos; ++i) ds.config.positive_digits.push_back(r.u8());
    ds.config.seed = r.u64();
    ds.config.balance = r.u8() != 0;

    const bool u8_mode = r.u8() != 0;
    const std::uint32_t n_train = r.u32();
    const std::uint32_t n_test = r.u32();
    ds.train.reserve(n_train);
    ds.test.reserve(n_test);
    for (std::uint32_t i = 0; i < n_train; ++i) ds.train.push_back(read_bag(r, u8_mode));
    for (std::uint32_t i = 0; i < n_test; ++i) ds.test.push_back(read_bag(r, u8_mode));
    if (r.off != buf.size())
        throw LengthError("'" + path + "': " + std::to_string(buf.size() - r.off) +
                          " trailing bytes after payload");
    return ds;
}

} // namespace c2c
