#include "c2c/idx.hpp"

#include <cstdint>
#include <fstream>

#include "c2c/errors.hpp"

namespace c2c {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803; // 2051
constexpr std::uint32_t kLabelMagic = 0x00000801; // 2049

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t off) {
    return (static_cast<std::uint32_t>(buf[off]) << 24) |
           (static_cast<std::uint32_t>(buf[off + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[off + 2]) << 8) |
           static_cast<std::uint32_t>(buf[off + 3]);
}

} // namespace

IdxImages load_idx_images(const std::string& path) {
    const auto buf = read_all(path);
    if (buf.size() < 16) throw LengthError("'" + path + "': header truncated");
    const std::uint32_t magic = be32(buf, 0);
    if (magic != kImageMagic)
        throw FormatError("'" + path + "': expected image magic " + std::to_string(kImageMagic) +
                          ", found " + std::to_string(magic));
    const std::uint32_t count = be32(buf, 4);
    const std::uint32_t rows = be32(buf, 8);
    const std::uint32_t cols = be32(buf, 12);
    const std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (buf.size() != expected)
        throw LengthError("'" + path + "': payload has " + std::to_string(buf.size() - 16) +
                          " bytes, expected " + std::to_string(expected - 16));

    IdxImages out;
    out.rows = static_cast<int>(rows);
    out.cols = static_cast<int>(cols);
    out.images.reserve(count);
    std::size_t off = 16;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<double> img(static_cast<std::size_t>(rows) * cols);
        for (auto& p : img) p = buf[off++] / 255.0;
        out.images.push_back(std::move(img));
    }
    return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
    const auto buf = read_all(path);
    if (buf.size() < 8) throw LengthError("'" + path + "': header truncated");
    const std::uint32_t magic = be32(buf, 0);
    if (magic != kLabelMagic)
        throw FormatError("'" + path + "': expected label magic " + std::to_string(kLabelMagic) +
                          ", found " + std::to_string(magic));
    const std::uint32_t count = be32(buf, 4);
    if (buf.size() != 8 + static_cast<std::size_t>(count))
        throw LengthError("'" + path + "': payload has " + std::to_string(buf.size() - 8) +
                          " labels, header says " + std::to_string(count));

    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const int v = buf[8 + i];
        if (v > 9)
            throw FormatError("'" + path + "': label " + std::to_string(v) + " at index " +
                              std::to_string(i) + " is outside 0..9");
        labels[i] = v;
    }
    return labels;
}

} // namespace c2c
