#include "ridnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ridnet {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, Decisions& decisions) {
    Tape<double> tape;
    decisions.start_replay();
    tape.set_decisions(&decisions);
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    return f(tape, vars).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
    for (const auto& t : inputs)
        for (double v : t.data())
            if (!std::isfinite(v)) throw std::invalid_argument("grad_check: inputs must be finite");

    GradCheckResult result;
    Decisions decisions;
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        tape.set_decisions(&decisions);
        std::vector<Var<double>> vars;
        for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
        auto out = f(tape, vars);
        if (!std::isfinite(out.value().item())) {
            result.finite = false;
            result.failure = "non-finite function value at the base point";
            return result;
        }
        tape.backward(out);
        for (const auto& v : vars) analytic.push_back(tape.grad(v));
    }

    std::vector<Tensor<double>> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k][i];
            probe[k][i] = x0 + epsilon;
            const double up = evaluate(f, probe, decisions);
            probe[k][i] = x0 - epsilon;
            const double down = evaluate(f, probe, decisions);
            probe[k][i] = x0;

            const double a = analytic[k][i];
            const double n = (up - down) / (2.0 * epsilon);
            ++result.coordinates;
            if (!std::isfinite(a) || !std::isfinite(n)) {
                result.finite = false;
                result.failure = "non-finite value at input " + std::to_string(k) + " coordinate " +
                                 std::to_string(i);
                result.worst_input = k;
                result.worst_index = i;
                return result;
            }
            const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_input = k;
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = n;
            }
        }
    }
    return result;
}

}  // namespace ridnet
