#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "c2c/graph.hpp"

namespace c2c {

struct GradCheckReport {
    bool pass = false;
    double tolerance = 0.0;
    double epsilon = 0.0;
    double max_rel_error = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::map<std::string, double> per_param; // max rel error per tensor

    std::string summary() const;
};

// Compares analytic gradients against central finite differences of
// loss_value(). loss_value must be deterministic and read the parameter
// tensors behind `params` (they are perturbed in place and restored).
// For tensors larger than min_coords_per_tensor a seeded random subset of
// coordinates is checked (at least min_coords_per_tensor of them).
//
// The error metric is |a - f| / max(|a|, |f|, 1e-4): relative for gradients
// of meaningful size, absolute near zero where finite differences are all
// roundoff noise.
GradCheckReport gradient_check(const std::function<double()>& loss_value,
                               const std::vector<std::pair<std::string, Tensor*>>& params,
                               const GradientMap& analytic, double epsilon, double tolerance,
                               std::uint64_t coord_seed, int min_coords_per_tensor = 100);

} // namespace c2c
