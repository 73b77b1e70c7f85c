#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2c/errors.hpp"

namespace c2c {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major tensor of doubles. All model parameters, activations and
// gradients use this one value type.
struct Tensor {
    Shape shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> vals);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double x);

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& operator[](std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
    const double& operator[](std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }

    // 2-D helpers (row-major).
    double& at2(int r, int c) { return v[static_cast<std::size_t>(r) * dim(1) + c]; }
    const double& at2(int r, int c) const { return v[static_cast<std::size_t>(r) * dim(1) + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

} // namespace c2c
