#include "c2c/tensor.hpp"

#include <cmath>
#include <sstream>

namespace c2c {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    if (shape_numel(shape) != numel())
        throw ShapeError("value count " + std::to_string(numel()) + " does not match shape " +
                         shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
    Tensor t;
    const std::int64_t n = shape_numel(s);
    t.shape = std::move(s);
    t.v.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(Shape s, double x) {
    Tensor t = zeros(std::move(s));
    for (auto& e : t.v) e = x;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace c2c
