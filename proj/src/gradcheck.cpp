#include "c2c/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "c2c/rng.hpp"

namespace c2c {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error
       << " tolerance=" << tolerance << " epsilon=" << epsilon;
    if (!worst_param.empty())
        os << " worst=" << worst_param << "[" << worst_index << "]"
           << " analytic=" << worst_analytic << " numeric=" << worst_numeric;
    return os.str();
}

GradCheckReport gradient_check(const std::function<double()>& loss_value,
                               const std::vector<std::pair<std::string, Tensor*>>& params,
                               const GradientMap& analytic, double epsilon, double tolerance,
                               std::uint64_t coord_seed, int min_coords_per_tensor) {
    if (epsilon <= 0.0) throw ArgumentError("gradient_check: epsilon must be positive");
    GradCheckReport rep;
    rep.tolerance = tolerance;
    rep.epsilon = epsilon;

    Rng rng = derive_rng(coord_seed, Stream::kGradCheck);
    for (const auto& [name, tensor] : params) {
        auto it = analytic.find(name);
        if (it == analytic.end())
            throw ArgumentError("gradient_check: no analytic gradient for parameter '" + name +
                                "'");
        const Tensor& g = it->second;
        if (!g.same_shape(*tensor))
            throw ShapeError("gradient_check: gradient shape " + shape_str(g.shape) +
                             " does not match parameter '" + name + "' " +
                             shape_str(tensor->shape));

        const std::int64_t n = tensor->numel();
        std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
        std::iota(coords.begin(), coords.end(), 0);
        if (n > min_coords_per_tensor) {
            // Partial Fisher-Yates: the first min_coords entries are a
            // uniform sample without replacement.
            for (int i = 0; i < min_coords_per_tensor; ++i) {
                std::size_t j = static_cast<std::size_t>(i) +
                                static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - i)));
                std::swap(coords[static_cast<std::size_t>(i)], coords[j]);
            }
            coords.resize(static_cast<std::size_t>(min_coords_per_tensor));
        }

        double tensor_max = 0.0;
        for (std::int64_t c : coords) {
            const double saved = (*tensor)[c];
            (*tensor)[c] = saved + epsilon;
            const double up = loss_value();
            (*tensor)[c] = saved - epsilon;
            const double down = loss_value();
            (*tensor)[c] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = g[c];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            tensor_max = std::max(tensor_max, rel);
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = name;
                rep.worst_index = c;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
        rep.per_param[name] = tensor_max;
    }
    rep.pass = rep.max_rel_error <= tolerance;
    return rep;
}

} // namespace c2c
