#pragma once

#include <cmath>
#include <vector>

#include "tpool/tensor.hpp"

namespace tpool {

// Central-difference validation of reverse-mode gradients, double precision.
// `f` must build the loss from scratch on every call and be deterministic;
// a train-mode dropout that advances an rng between calls is rejected.
// Returns the worst relative error over all parameter elements, measured as
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class F>
double grad_check(F&& f, const std::vector<Tensor<double>>& params, double eps = 1e-5) {
    const double f1 = f().value();
    const double f2 = f().value();
    if (f1 != f2)
        throw ContractError(
            "grad_check: function is nondeterministic across evaluations "
            "(disable train-mode dropout/masking or fix the stream)");

    GradientMap<double> grads = backward(f());

    double worst = 0.0;
    for (const Tensor<double>& p : params) {
        Tensor<double> param = p;  // handle copy; same buffer
        const Tensor<double>* analytic = grads.contains(param) ? &grads.at(param) : nullptr;
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double saved = param.data()[i];
            param.data()[i] = saved + eps;
            const double fp = f().value();
            param.data()[i] = saved - eps;
            const double fm = f().value();
            param.data()[i] = saved;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double exact = analytic ? (*analytic)(i) : 0.0;
            const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(exact - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace tpool
