#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eirehn/errors.hpp"
#include "eirehn/tape.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_param = -1;
    int worst_elem = -1;
};

// Compares tape gradients of a parameterized scalar function against
// central finite differences, element by element. The relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). The numeric
// side re-evaluates the function on fresh tapes, so it stays independent
// of the recorded backward pass it is checking.
template <typename F>
GradCheckResult grad_check(F&& f, std::vector<Tensor> params, double eps = 1e-5) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
    for (const Tensor& p : params)
        if (!p.all_finite()) throw NumericalError("grad_check: non-finite parameter");

    auto eval = [&](int pi, int ei) -> double {
        Tape tape;
        std::vector<Value> leaves;
        leaves.reserve(params.size());
        for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
        Value out = f(tape, std::span<const Value>(leaves));
        double v = tape.val(out)[0];
        if (std::isnan(v))
            throw NumericalError("grad_check: NaN at parameter " + std::to_string(pi) +
                                 " element " + std::to_string(ei));
        return v;
    };

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Value> leaves;
        leaves.reserve(params.size());
        for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
        Value out = f(tape, std::span<const Value>(leaves));
        if (tape.val(out).numel() != 1) throw ContractError("grad_check: f must return a scalar");
        tape.backward(out);
        for (const Value& l : leaves) analytic.push_back(tape.grad(l));
    }

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t ei = 0; ei < params[pi].numel(); ++ei) {
            double keep = params[pi][ei];
            params[pi][ei] = keep + eps;
            double up = eval(static_cast<int>(pi), static_cast<int>(ei));
            params[pi][ei] = keep - eps;
            double dn = eval(static_cast<int>(pi), static_cast<int>(ei));
            params[pi][ei] = keep;
            double numeric = (up - dn) / (2.0 * eps);
            double a = analytic[pi][ei];
            double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = static_cast<int>(pi);
                res.worst_elem = static_cast<int>(ei);
            }
        }
    }
    return res;
}

}  // namespace eirehn
