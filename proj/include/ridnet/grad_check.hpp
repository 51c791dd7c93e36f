#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ridnet/autodiff.hpp"

namespace ridnet {

/// Outcome of comparing reverse-mode gradients against central differences.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    bool finite = true;
    /// Empty unless a non-finite value was met; names the offending coordinate.
    std::string failure;

    bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Checks every coordinate of every input. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8). Discrete choices made on the base forward
/// pass (activation branches, neighbour sets, clamp regions) are replayed on
/// the perturbed passes, so the comparison is against the derivative of the
/// smooth piece containing the base point.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                           double epsilon = 1e-4);

}  // namespace ridnet
